from .tensor import (
    MASK_FILL,
    DegenerateBatchError,
    Tensor,
    add,
    as_tensor,
    concat,
    dropout,
    embedding_lookup,
    gather_time,
    layer_norm,
    masked_cross_entropy,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    set_debug,
    sigmoid,
    softmax,
    tanh,
    transpose,
)
from .nn import (
    LSTM,
    Dropout,
    Embedding,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    causal_mask,
    glorot_uniform,
    slice_last,
    slice_time,
)
from .optim import Adam, AdamState, adam_step

__all__ = [
    "MASK_FILL",
    "DegenerateBatchError",
    "Tensor",
    "add",
    "as_tensor",
    "concat",
    "dropout",
    "embedding_lookup",
    "gather_time",
    "layer_norm",
    "masked_cross_entropy",
    "matmul",
    "mean",
    "mul",
    "relu",
    "reshape",
    "set_debug",
    "sigmoid",
    "softmax",
    "tanh",
    "transpose",
    "LSTM",
    "Dropout",
    "Embedding",
    "LayerNorm",
    "Linear",
    "Module",
    "MultiHeadAttention",
    "causal_mask",
    "glorot_uniform",
    "slice_last",
    "slice_time",
    "Adam",
    "AdamState",
    "adam_step",
]
