"""Slice-wise volumetric segmentation with atrous pyramids and non-local
attention, built on a small numpy autodiff core."""

__version__ = "0.1.0"

from .config import RunConfig, load_run_config, save_run_config  # noqa: F401
from .inference import InferenceConfig, infer_multiscale, infer_view  # noqa: F401
from .metrics import dsc, evaluate_set  # noqa: F401
from .model import (  # noqa: F401
    AsppConfig,
    BackboneConfig,
    ModelConfig,
    SegmentationModel,
    attention_weighted_average,
    load_model,
    nonlocal_attention,
    save_model,
)
from .mvol import read_mvol, write_mvol  # noqa: F401
from .phantom import PhantomConfig, generate_phantom  # noqa: F401
from .preprocess import AugmentSpec, WindowSpec, hu_window_normalize  # noqa: F401
from .tensor import ConvSpec, NonFiniteError, Tensor, bilinear_resize, conv2d_atrous  # noqa: F401
from .volume import Axis, extract_slices, majority_vote, restack  # noqa: F401
