"""Few-shot semantic segmentation with dual prior masks and progressive
semantic detail enrichment, on a self-contained float64 autodiff core."""

from .kernels import BACKEND_NAME
from .tensor import Tensor

__all__ = ["Tensor", "BACKEND_NAME"]
__version__ = "0.1.0"
