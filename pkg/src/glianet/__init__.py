"""GLIANet: dual-stream blind image quality assessment with a cross-attention adapter."""

from .glia import GliaConfig
from .model import GliaNetConfig
from .tensor import Tensor
from .training import TrainConfig
from .vit import ViTConfig

__version__ = "0.1.0"

__all__ = ["Tensor", "ViTConfig", "GliaConfig", "GliaNetConfig", "TrainConfig", "__version__"]
