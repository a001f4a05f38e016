"""Float64 tensor substrate: reverse-mode gradients, layers, optimiser, gradient checks."""
from .tensor import (Tensor, no_grad, matmul, linear, softmax, log_softmax, cross_entropy, mse,
                     layer_norm, concat, stack, take, exp, log, sqrt, tanh, relu, gelu,
                     reshape, transpose, swapaxes, dropout, as_tensor)
from .nn import Module, Parameter, Linear, LayerNorm, MLP, Attention, sinusoidal_embedding
from .optim import AdamW, clip_grad_norm, warmup_cosine
from .gradcheck import grad_check, grad_check_params, numeric_grad, relative_error

__all__ = [
    "Tensor", "no_grad", "matmul", "linear", "softmax", "log_softmax", "cross_entropy", "mse",
    "layer_norm", "concat", "stack", "take", "exp", "log", "sqrt", "tanh", "relu", "gelu",
    "reshape", "transpose", "swapaxes", "dropout", "as_tensor",
    "Module", "Parameter", "Linear", "LayerNorm", "MLP", "Attention", "sinusoidal_embedding",
    "AdamW", "clip_grad_norm", "warmup_cosine",
    "grad_check", "grad_check_params", "numeric_grad", "relative_error",
]
