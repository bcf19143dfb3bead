"""Model assembly: a small residual encoder, atrous spatial pyramid pooling
over the deepest features, non-local attention over the early (low-level)
features, and a light decoder that fuses both paths into per-pixel logits.

Every learnable tensor lives in a flat name -> Tensor registry so models can
be checkpointed and rebuilt byte-for-byte.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import checkpoint as ckpt
from .tensor import (
    ConvSpec,
    Tensor,
    add,
    batchnorm2d,
    bilinear_resize,
    concat_channels,
    conv2d_atrous,
    global_avg_pool,
    matmul,
    relu,
    reshape,
    scale,
    softmax_channels,
    transpose_last2,
)


@dataclass(frozen=True)
class BackboneConfig:
    stage_channels: tuple[int, ...] = (16, 32, 64, 128)
    blocks_per_stage: tuple[int, ...] = (2, 2, 2, 2)
    output_stride: int = 8
    low_level_stage: int = 1

    def __post_init__(self):
        if self.output_stride not in (8, 16):
            raise ValueError(f"output_stride must be 8 or 16, got {self.output_stride}")
        if len(self.stage_channels) != len(self.blocks_per_stage):
            raise ValueError("stage_channels and blocks_per_stage must have equal length")
        if not 0 <= self.low_level_stage < len(self.stage_channels):
            raise ValueError(f"low_level_stage {self.low_level_stage} out of range")
        if any(c < 1 for c in self.stage_channels) or any(b < 1 for b in self.blocks_per_stage):
            raise ValueError("stage channels and block counts must be >= 1")


@dataclass(frozen=True)
class AsppConfig:
    rates: tuple[int, ...] = (12, 24, 36)
    branch_channels: int = 64
    include_1x1_branch: bool = True
    include_image_pool_branch: bool = True

    def __post_init__(self):
        if not self.rates or any(r < 1 for r in self.rates):
            raise ValueError(f"rates must be strictly positive, got {self.rates}")
        if len(set(self.rates)) != len(self.rates):
            raise ValueError(f"rates must be distinct, got {self.rates}")
        if self.branch_channels < 1:
            raise ValueError("branch_channels must be >= 1")


@dataclass(frozen=True)
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    aspp: AsppConfig = field(default_factory=AsppConfig)
    use_attention: bool = True
    decoder_channels: int | None = None
    in_channels: int = 1
    num_classes: int = 2

    def resolved_decoder_channels(self) -> int:
        return self.decoder_channels or self.aspp.branch_channels


def _he_kernel(rng: np.random.Generator, out_c: int, in_c: int, k: int, dtype) -> np.ndarray:
    fan_in = in_c * k * k
    std = math.sqrt(2.0 / fan_in)
    return (rng.standard_normal((out_c, in_c, k, k)) * std).astype(dtype)


class BatchNorm:
    def __init__(self, channels: int, dtype, momentum: float = 0.1, epsilon: float = 1e-5):
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.epsilon = epsilon

    def forward(self, x: Tensor, mode: str) -> Tensor:
        return batchnorm2d(x, self.gamma, self.beta, self.running_mean, self.running_var,
                           mode=mode, momentum=self.momentum, epsilon=self.epsilon)

    def named_tensors(self, prefix: str):
        yield f"{prefix}.gamma", self.gamma
        yield f"{prefix}.beta", self.beta

    def named_state(self, prefix: str):
        yield f"{prefix}.running_mean", self.running_mean
        yield f"{prefix}.running_var", self.running_var


class ConvUnit:
    """Convolution with same-style padding, optional batchnorm, optional relu."""

    def __init__(self, rng, in_c: int, out_c: int, k: int, *, stride: int = 1, rate: int = 1,
                 norm: bool = True, act: bool = True, bias: bool = False, dtype=np.float32,
                 zero_kernel: bool = False):
        kernel = np.zeros((out_c, in_c, k, k), dtype=dtype) if zero_kernel \
            else _he_kernel(rng, out_c, in_c, k, dtype)
        bias_t = Tensor(np.zeros(out_c, dtype=dtype), requires_grad=True) if bias else None
        self.spec = ConvSpec(Tensor(kernel, requires_grad=True), bias=bias_t,
                             rate=rate, stride=stride, padding=rate * (k - 1) // 2)
        self.norm = BatchNorm(out_c, dtype) if norm else None
        self.act = act

    def forward(self, x: Tensor, mode: str) -> Tensor:
        y = conv2d_atrous(x, self.spec)
        if self.norm is not None:
            y = self.norm.forward(y, mode)
        return relu(y) if self.act else y

    def named_tensors(self, prefix: str):
        yield f"{prefix}.kernel", self.spec.kernel
        if self.spec.bias is not None:
            yield f"{prefix}.bias", self.spec.bias
        if self.norm is not None:
            yield from self.norm.named_tensors(f"{prefix}.bn")

    def named_state(self, prefix: str):
        if self.norm is not None:
            yield from self.norm.named_state(f"{prefix}.bn")


class ResidualBlock:
    def __init__(self, rng, in_c: int, out_c: int, *, stride: int = 1, rate: int = 1, dtype=np.float32):
        self.conv1 = ConvUnit(rng, in_c, out_c, 3, stride=stride, rate=rate, dtype=dtype)
        self.conv2 = ConvUnit(rng, out_c, out_c, 3, rate=rate, act=False, dtype=dtype)
        self.shortcut = None
        if stride != 1 or in_c != out_c:
            self.shortcut = ConvUnit(rng, in_c, out_c, 1, stride=stride, act=False, dtype=dtype)

    def forward(self, x: Tensor, mode: str) -> Tensor:
        y = self.conv2.forward(self.conv1.forward(x, mode), mode)
        identity = x if self.shortcut is None else self.shortcut.forward(x, mode)
        return relu(add(y, identity))

    def named_tensors(self, prefix: str):
        yield from self.conv1.named_tensors(f"{prefix}.conv1")
        yield from self.conv2.named_tensors(f"{prefix}.conv2")
        if self.shortcut is not None:
            yield from self.shortcut.named_tensors(f"{prefix}.shortcut")

    def named_state(self, prefix: str):
        yield from self.conv1.named_state(f"{prefix}.conv1")
        yield from self.conv2.named_state(f"{prefix}.conv2")
        if self.shortcut is not None:
            yield from self.shortcut.named_state(f"{prefix}.shortcut")


class Encoder:
    """Residual encoder: strided stem, then stages that downsample until the
    configured output stride is reached and switch to atrous rates after."""

    def __init__(self, rng, cfg: BackboneConfig, in_channels: int, dtype=np.float32):
        self.cfg = cfg
        self.stem = ConvUnit(rng, in_channels, cfg.stage_channels[0], 3, stride=2, dtype=dtype)
        self.stages: list[list[ResidualBlock]] = []
        self.stage_strides: list[int] = []
        current_stride, rate = 2, 1
        prev_c = cfg.stage_channels[0]
        for i, (ch, n_blocks) in enumerate(zip(cfg.stage_channels, cfg.blocks_per_stage)):
            blocks = []
            for b in range(n_blocks):
                stride = 1
                if b == 0 and i > 0:
                    if current_stride < cfg.output_stride:
                        stride = 2
                        current_stride *= 2
                    else:
                        rate *= 2
                blocks.append(ResidualBlock(rng, prev_c, ch, stride=stride, rate=rate, dtype=dtype))
                prev_c = ch
            self.stages.append(blocks)
            self.stage_strides.append(current_stride)

    def forward(self, x: Tensor, mode: str) -> tuple[Tensor, Tensor]:
        y = self.stem.forward(x, mode)
        low = None
        for i, blocks in enumerate(self.stages):
            for block in blocks:
                y = block.forward(y, mode)
            if i == self.cfg.low_level_stage:
                low = y
        return low, y

    def named_tensors(self, prefix: str):
        yield from self.stem.named_tensors(f"{prefix}.stem")
        for i, blocks in enumerate(self.stages):
            for b, block in enumerate(blocks):
                yield from block.named_tensors(f"{prefix}.stage{i}.block{b}")

    def named_state(self, prefix: str):
        yield from self.stem.named_state(f"{prefix}.stem")
        for i, blocks in enumerate(self.stages):
            for b, block in enumerate(blocks):
                yield from block.named_state(f"{prefix}.stage{i}.block{b}")


class Aspp:
    """Parallel context branches: optional 1x1, one 3x3 atrous conv per rate,
    optional image-level pooling, concatenated and fused by a 1x1 conv.
    Same-style padding keeps the spatial size."""

    def __init__(self, rng, cfg: AsppConfig, in_channels: int, dtype=np.float32):
        self.cfg = cfg
        n_branches = len(cfg.rates) + int(cfg.include_1x1_branch) + int(cfg.include_image_pool_branch)
        bc = cfg.branch_channels
        self.one_by_one = ConvUnit(rng, in_channels, bc, 1, dtype=dtype) \
            if cfg.include_1x1_branch else None
        self.atrous = [ConvUnit(rng, in_channels, bc, 3, rate=r, dtype=dtype) for r in cfg.rates]
        self.pool_conv = ConvUnit(rng, in_channels, bc, 1, norm=False, dtype=dtype) \
            if cfg.include_image_pool_branch else None
        self.fuse = ConvUnit(rng, n_branches * bc, bc, 1, dtype=dtype)

    def forward(self, x: Tensor, mode: str) -> Tensor:
        _, _, h, w = x.data.shape
        for r, unit in zip(self.cfg.rates, self.atrous):
            eff = 2 * r + 1
            if eff > h + 2 * unit.spec.padding or eff > w + 2 * unit.spec.padding:
                raise ValueError(
                    f"atrous rate {r} has effective extent {eff}, larger than the padded "
                    f"{h}x{w} feature map; shrink the rates for this input size"
                )
        branches = []
        if self.one_by_one is not None:
            branches.append(self.one_by_one.forward(x, mode))
        for unit in self.atrous:
            branches.append(unit.forward(x, mode))
        if self.pool_conv is not None:
            pooled = self.pool_conv.forward(global_avg_pool(x), mode)
            branches.append(bilinear_resize(pooled, h, w, align_corners=False))
        return self.fuse.forward(concat_channels(branches), mode)

    def named_tensors(self, prefix: str):
        if self.one_by_one is not None:
            yield from self.one_by_one.named_tensors(f"{prefix}.one_by_one")
        for r, unit in zip(self.cfg.rates, self.atrous):
            yield from unit.named_tensors(f"{prefix}.rate{r}")
        if self.pool_conv is not None:
            yield from self.pool_conv.named_tensors(f"{prefix}.pool")
        yield from self.fuse.named_tensors(f"{prefix}.fuse")

    def named_state(self, prefix: str):
        if self.one_by_one is not None:
            yield from self.one_by_one.named_state(f"{prefix}.one_by_one")
        for r, unit in zip(self.cfg.rates, self.atrous):
            yield from unit.named_state(f"{prefix}.rate{r}")
        if self.pool_conv is not None:
            yield from self.pool_conv.named_state(f"{prefix}.pool")
        yield from self.fuse.named_state(f"{prefix}.fuse")


def attention_weighted_average(x: Tensor) -> Tensor:
    """Similarity-weighted average over all spatial positions.

    For channel vectors x_i at the N = h*w positions of each batch item,
    y_i = (1/N) * sum_j (x_i . x_j) x_j. Computed Gram-first as
    (X X^T) X / N, which is algebraically identical to weighting positions
    but costs O(c^2 N) instead of O(c N^2).
    """
    n, c, h, w = x.data.shape
    pos = h * w
    flat = reshape(x, (n, c, pos))
    gram = matmul(flat, transpose_last2(flat))
    y = scale(matmul(gram, flat), 1.0 / pos)
    return reshape(y, (n, c, h, w))


def nonlocal_attention(x: Tensor, w_spec: ConvSpec) -> Tensor:
    """Attention refinement with a residual connection: conv1x1(y) + x."""
    out_c, in_c, kh, kw = w_spec.kernel.data.shape
    if (kh, kw) != (1, 1) or out_c != in_c or in_c != x.data.shape[1]:
        raise ValueError(
            f"attention weight must be a channel-preserving 1x1 conv, got {w_spec.kernel.data.shape}"
        )
    y = attention_weighted_average(x)
    return add(conv2d_atrous(y, w_spec), x)


class NonLocalBlock:
    """Holds the 1x1 output projection of the attention module.

    The projection starts at zero so a freshly built block is an exact
    identity; the residual path makes it safe to train from there.
    """

    def __init__(self, rng, channels: int, dtype=np.float32):
        kernel = np.zeros((channels, channels, 1, 1), dtype=dtype)
        self.w = ConvSpec(Tensor(kernel, requires_grad=True))

    def forward(self, x: Tensor, mode: str) -> Tensor:
        return nonlocal_attention(x, self.w)

    def named_tensors(self, prefix: str):
        yield f"{prefix}.w", self.w.kernel

    def named_state(self, prefix: str):
        return iter(())


class SegmentationModel:
    """The full per-slice network; ``forward`` maps (n, in_c, h, w) inputs to
    (n, num_classes, h, w) logits at the input resolution."""

    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0, dtype=np.float32):
        self.cfg = cfg or ModelConfig()
        self.dtype = np.dtype(dtype)
        if self.dtype.name not in ("float32", "float64"):
            raise TypeError(f"model dtype must be float32/float64, got {dtype}")
        self.seed = seed
        rng = np.random.default_rng(seed)
        bb, aspp_cfg = self.cfg.backbone, self.cfg.aspp
        dec_c = self.cfg.resolved_decoder_channels()
        low_c = bb.stage_channels[bb.low_level_stage]

        self.encoder = Encoder(rng, bb, self.cfg.in_channels, dtype=self.dtype)
        self.attention = NonLocalBlock(rng, low_c, dtype=self.dtype) if self.cfg.use_attention else None
        self.aspp = Aspp(rng, aspp_cfg, bb.stage_channels[-1], dtype=self.dtype)
        self.decoder1 = ConvUnit(rng, low_c + aspp_cfg.branch_channels, dec_c, 3, dtype=self.dtype)
        self.decoder2 = ConvUnit(rng, dec_c, dec_c, 3, dtype=self.dtype)
        self.classifier = ConvSpec(
            Tensor(_he_kernel(rng, self.cfg.num_classes, dec_c, 1, self.dtype), requires_grad=True),
            bias=Tensor(np.zeros(self.cfg.num_classes, dtype=self.dtype), requires_grad=True),
        )
        self._registry = self._build_registry()

    @property
    def output_stride(self) -> int:
        return self.cfg.backbone.output_stride

    def forward(self, x, mode: str = "eval") -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        n, c, h, w = x.data.shape
        if c != self.cfg.in_channels:
            raise ValueError(f"expected {self.cfg.in_channels} input channels, got {c}")
        stride = self.output_stride
        if h % stride or w % stride:
            raise ValueError(f"input {h}x{w} not divisible by output stride {stride}; pad first")
        low, high = self.encoder.forward(x, mode)
        refined = self.attention.forward(low, mode) if self.attention is not None else low
        context = self.aspp.forward(high, mode)
        _, _, lh, lw = low.data.shape
        context_up = bilinear_resize(context, lh, lw, align_corners=False)
        y = self.decoder1.forward(concat_channels([refined, context_up]), mode)
        y = self.decoder2.forward(y, mode)
        logits = conv2d_atrous(y, self.classifier)
        return bilinear_resize(logits, h, w, align_corners=False)

    __call__ = forward

    def predict_proba(self, batch: np.ndarray) -> np.ndarray:
        """Foreground probability per pixel for a (n, in_c, h, w) batch, eval mode."""
        probs = softmax_channels(self.forward(batch, mode="eval"))
        return probs.data[:, 1]

    # -- parameter registry / checkpointing ---------------------------------

    def _build_registry(self) -> dict[str, Tensor]:
        registry: dict[str, Tensor] = {}
        pieces = [self.encoder.named_tensors("encoder")]
        if self.attention is not None:
            pieces.append(self.attention.named_tensors("attention"))
        pieces.append(self.aspp.named_tensors("aspp"))
        pieces.append(self.decoder1.named_tensors("decoder1"))
        pieces.append(self.decoder2.named_tensors("decoder2"))
        for it in pieces:
            for name, tensor in it:
                if name in registry:
                    raise ValueError(f"duplicate parameter name {name!r}")
                tensor.name = name
                registry[name] = tensor
        self.classifier.kernel.name = "classifier.kernel"
        self.classifier.bias.name = "classifier.bias"
        registry["classifier.kernel"] = self.classifier.kernel
        registry["classifier.bias"] = self.classifier.bias
        return registry

    def parameters(self) -> dict[str, Tensor]:
        return dict(self._registry)

    def _named_state(self):
        yield from self.encoder.named_state("encoder")
        yield from self.aspp.named_state("aspp")
        yield from self.decoder1.named_state("decoder1")
        yield from self.decoder2.named_state("decoder2")

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Everything a checkpoint stores: parameters plus batchnorm running stats."""
        out = {name: t.data for name, t in self._registry.items()}
        for name, arr in self._named_state():
            if name in out:
                raise ValueError(f"duplicate state name {name!r}")
            out[name] = arr
        return out

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        current = self.state_arrays()
        if set(arrays) != set(current):
            missing = sorted(set(current) - set(arrays))
            extra = sorted(set(arrays) - set(current))
            raise ValueError(f"state mismatch: missing {missing[:4]}, unexpected {extra[:4]}")
        for name, dst in current.items():
            src = np.asarray(arrays[name])
            if src.shape != dst.shape:
                raise ValueError(f"{name}: shape {src.shape} != expected {dst.shape}")
            dst[...] = src.astype(dst.dtype)

    def arch_descriptor(self) -> dict:
        return {
            "backbone": asdict(self.cfg.backbone),
            "aspp": asdict(self.cfg.aspp),
            "use_attention": self.cfg.use_attention,
            "decoder_channels": self.cfg.decoder_channels,
            "in_channels": self.cfg.in_channels,
            "num_classes": self.cfg.num_classes,
            "dtype": self.dtype.name,
            "seed": self.seed,
        }


def model_config_from_descriptor(desc: dict) -> ModelConfig:
    bb = dict(desc["backbone"])
    bb["stage_channels"] = tuple(bb["stage_channels"])
    bb["blocks_per_stage"] = tuple(bb["blocks_per_stage"])
    aspp = dict(desc["aspp"])
    aspp["rates"] = tuple(aspp["rates"])
    return ModelConfig(
        backbone=BackboneConfig(**bb),
        aspp=AsppConfig(**aspp),
        use_attention=desc["use_attention"],
        decoder_channels=desc["decoder_channels"],
        in_channels=desc["in_channels"],
        num_classes=desc["num_classes"],
    )


def save_model(model: SegmentationModel, path) -> None:
    ckpt.save_checkpoint(path, model.arch_descriptor(), model.state_arrays())


def load_model(path) -> SegmentationModel:
    """Rebuild a model from a checkpoint; the file is self-describing."""
    arch, tensors = ckpt.load_checkpoint(path)
    model = SegmentationModel(model_config_from_descriptor(arch),
                              seed=arch.get("seed", 0), dtype=arch.get("dtype", "float32"))
    model.load_state(tensors)
    return model
