import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# Acceptance tests register one human-readable line per criterion here;
# the summary hook prints them so every run ends with the verdict list.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
