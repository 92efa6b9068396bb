"""Dense tensors, reverse-mode autodiff, layers and optimiser."""

from .gradcheck import GradcheckResult, gradcheck
from .nn import Conv2d, DepthwiseConv1d, Dropout, Embedding, LayerNorm, Linear, Module, ModuleList, Parameter
from .optim import Adam, clip_grad_norm
from .rng import Rng
from .tensor import Tensor, tensor

__all__ = [
    "Adam",
    "Conv2d",
    "DepthwiseConv1d",
    "Dropout",
    "Embedding",
    "GradcheckResult",
    "LayerNorm",
    "Linear",
    "Module",
    "ModuleList",
    "Parameter",
    "Rng",
    "Tensor",
    "clip_grad_norm",
    "gradcheck",
    "tensor",
]
