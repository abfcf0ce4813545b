"""A small float32 numpy engine with hand-written backward passes for the
layers the canceller needs: 1-D convolution, batch norm, ReLU, LSTM, MSE and Adam."""

from .functional import (
    batchnorm1d_backward,
    batchnorm1d_forward,
    conv1d_backward,
    conv1d_forward,
    lstm_backward,
    lstm_forward,
    mse_loss,
    relu_backward,
    relu_forward,
)
from .layers import LSTM, BatchNorm1d, Conv1d, Module, ReLU, Sequential, SwapAxes
from .optim import Adam, adam_step, clip_grad_norm
from .tensor import DTYPE, NonFiniteError, Tensor, check_finite

__all__ = [
    "Adam",
    "BatchNorm1d",
    "Conv1d",
    "DTYPE",
    "LSTM",
    "Module",
    "NonFiniteError",
    "ReLU",
    "Sequential",
    "SwapAxes",
    "Tensor",
    "adam_step",
    "batchnorm1d_backward",
    "batchnorm1d_forward",
    "check_finite",
    "clip_grad_norm",
    "conv1d_backward",
    "conv1d_forward",
    "lstm_backward",
    "lstm_forward",
    "mse_loss",
    "relu_backward",
    "relu_forward",
]
