"""Minimal differentiable-compute kernel: tensors, layers, AdamW, grad checks."""

from . import autodiff
from .autodiff import (Tensor, no_grad, linear, relu, layer_norm, film,
                       gather_rows, segment_max, segment_attention, concat)
from .gradcheck import finite_diff_check, finite_diff_check_store
from .layers import (LOG_STD_MAX, LOG_STD_MIN, GaussianHead, MLPBlock,
                     make_attention_params, max_pool_set,
                     multi_head_cross_attention)
from .params import ParamStore, adamw_step

__all__ = [
    "autodiff", "Tensor", "no_grad", "linear", "relu", "layer_norm", "film",
    "gather_rows", "segment_max", "segment_attention", "concat",
    "finite_diff_check", "finite_diff_check_store",
    "GaussianHead", "MLPBlock", "max_pool_set",
    "multi_head_cross_attention", "make_attention_params",
    "LOG_STD_MIN", "LOG_STD_MAX",
    "ParamStore", "adamw_step",
]
