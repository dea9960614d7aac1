"""Minimal neural-network engine: tensors, layers, optimizer, oracles."""

from .tensor import (
    GraphError,
    ShapeError,
    Tensor,
    as_tensor,
    concat,
    cosine_similarity,
    gather_rows,
    l2_norm,
    no_grad,
)
from .layers import (
    LayerSpec,
    Network,
    conv2d,
    dense,
    forward_layer,
    init_layer,
    layer_output_shape,
    maxpool2d,
)
from .optim import NonFiniteGradient, RMSProp
from .gradcheck import finite_difference_grads, gradient_check, max_relative_error
from .checkpoint import CheckpointError, load_arrays, save_arrays

__all__ = [
    "Tensor",
    "as_tensor",
    "concat",
    "cosine_similarity",
    "gather_rows",
    "l2_norm",
    "no_grad",
    "GraphError",
    "ShapeError",
    "LayerSpec",
    "Network",
    "conv2d",
    "maxpool2d",
    "dense",
    "forward_layer",
    "init_layer",
    "layer_output_shape",
    "RMSProp",
    "NonFiniteGradient",
    "finite_difference_grads",
    "gradient_check",
    "max_relative_error",
    "CheckpointError",
    "save_arrays",
    "load_arrays",
]
