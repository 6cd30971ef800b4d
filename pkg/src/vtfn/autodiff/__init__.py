from .ops import (
    ShapeError,
    conv3d_backward,
    conv3d_forward,
    linear_backward,
    linear_forward,
    maxpool3d_backward,
    maxpool3d_forward,
    output_dims,
    relu_backward,
    relu_forward,
    softmax,
    softmax_xent,
)
from .layers import LayerSpec, xavier_bound, xavier_init
from .adam import AdamState, adam_step
from .reference import conv3d_naive
