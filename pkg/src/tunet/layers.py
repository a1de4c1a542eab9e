"""Forward and backward passes of the temporal layers.

Every ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
consumes that cache. Gradients are exact partial derivatives of
``sum(grad_out * out)``.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError, ShapeError
from .tensor import as_tensor3


@dataclass
class Conv1dParams:
    """Temporal convolution. ``weights`` is (out_channels, in_channels, kernel).

    ``trim_end`` drops that many trailing output samples; with kernel 2 and
    padding 1 a trim of 1 keeps the output length equal to the input length.
    """

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0
    trim_end: int = 0

    def __post_init__(self):
        if self.weights.ndim != 3:
            raise ShapeError(f"conv weights must be 3-axis, got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"bias shape {self.bias.shape} does not match {self.weights.shape[0]} outputs")
        if self.stride < 1 or self.padding < 0 or self.trim_end < 0:
            raise ShapeError("stride must be >= 1, padding and trim_end >= 0")

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def in_channels(self):
        return self.weights.shape[1]

    @property
    def kernel_size(self):
        return self.weights.shape[2]

    def output_length(self, length):
        span = length + 2 * self.padding - self.kernel_size
        if span < 0 or span % self.stride:
            raise ShapeError(
                f"length {length} with kernel {self.kernel_size}, stride {self.stride}, "
                f"padding {self.padding} does not give an integral output length"
            )
        out = span // self.stride + 1 - self.trim_end
        if out < 1:
            raise ShapeError(f"trim_end {self.trim_end} leaves no output samples")
        return out


@dataclass
class Deconv1dParams:
    """Temporal transposed convolution. ``weights`` is (in_channels, out_channels, kernel)."""

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 2

    def __post_init__(self):
        if self.weights.ndim != 3:
            raise ShapeError(f"deconv weights must be 3-axis, got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[1],):
            raise ShapeError(f"bias shape {self.bias.shape} does not match {self.weights.shape[1]} outputs")
        if self.stride < 1:
            raise ShapeError("stride must be >= 1")

    @property
    def in_channels(self):
        return self.weights.shape[0]

    @property
    def out_channels(self):
        return self.weights.shape[1]

    @property
    def kernel_size(self):
        return self.weights.shape[2]

    def output_length(self, length):
        return (length - 1) * self.stride + self.kernel_size


@dataclass
class PoolCache:
    argmax_index: np.ndarray
    input_length: int


def _check_channels(x, expected, what):
    if x.shape[1] != expected:
        raise ShapeError(f"{what} expects {expected} input channels, got {x.shape[1]}")


def conv1d_forward(x, p):
    x = as_tensor3(x)
    _check_channels(x, p.in_channels, "conv1d")
    nb, _, length = x.shape
    lout = p.output_length(length)
    full = lout + p.trim_end
    xp = np.pad(x, ((0, 0), (0, 0), (p.padding, p.padding))) if p.padding else x
    cols = kernels.im2col(xp, p.kernel_size, p.stride, lout)
    wmat = p.weights.reshape(p.out_channels, -1)
    out = (wmat @ cols).reshape(p.out_channels, nb, lout).transpose(1, 0, 2)
    out = out + p.bias[None, :, None]
    cache = (cols, x.shape, xp.shape[2], full)
    return np.ascontiguousarray(out), cache


def conv1d_backward(grad_out, cache, p):
    cols, x_shape, padded_len, full = cache
    nb, nc, length = x_shape
    lout = full - p.trim_end
    if grad_out.shape != (nb, p.out_channels, lout):
        raise ShapeError(f"grad_out shape {grad_out.shape} != forward output {(nb, p.out_channels, lout)}")
    gmat = np.ascontiguousarray(grad_out.transpose(1, 0, 2)).reshape(p.out_channels, nb * lout)
    grad_b = grad_out.sum(axis=(0, 2))
    grad_w = (gmat @ cols.T).reshape(p.weights.shape)
    gcols = p.weights.reshape(p.out_channels, -1).T @ gmat
    gxp = kernels.col2im(gcols, nb, nc, padded_len, p.kernel_size, p.stride, lout)
    grad_x = gxp[:, :, p.padding : p.padding + length] if p.padding else gxp
    return np.ascontiguousarray(grad_x), grad_w, grad_b


def maxpool1d_forward(x, kernel=2, stride=2):
    x = as_tensor3(x)
    span = x.shape[2] - kernel
    if kernel < 1 or stride < 1 or span < 0 or span % stride:
        raise ShapeError(f"length {x.shape[2]} does not split into windows of {kernel} at stride {stride}")
    lout = span // stride + 1
    out, idx = kernels.maxpool_fwd(x, kernel, stride, lout)
    return out, PoolCache(idx, x.shape[2])


def maxpool1d_backward(grad_out, cache, input_length=None):
    if input_length is None:
        input_length = cache.input_length
    if grad_out.shape != cache.argmax_index.shape or input_length != cache.input_length:
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match pooled shape {cache.argmax_index.shape}")
    return kernels.maxpool_bwd(np.ascontiguousarray(grad_out), cache.argmax_index, input_length)


def deconv1d_forward(x, p):
    x = as_tensor3(x)
    _check_channels(x, p.in_channels, "deconv1d")
    nb, nc, length = x.shape
    xmat = np.ascontiguousarray(x.transpose(1, 0, 2)).reshape(nc, nb * length)
    cols = p.weights.reshape(nc, -1).T @ xmat
    out = kernels.col2im(cols, nb, p.out_channels, p.output_length(length), p.kernel_size, p.stride, length)
    out += p.bias[None, :, None]
    return out, (xmat, x.shape)


def deconv1d_backward(grad_out, cache, p):
    xmat, x_shape = cache
    nb, nc, length = x_shape
    expected = (nb, p.out_channels, p.output_length(length))
    if grad_out.shape != expected:
        raise ShapeError(f"grad_out shape {grad_out.shape} != forward output {expected}")
    gcols = kernels.im2col(np.ascontiguousarray(grad_out), p.kernel_size, p.stride, length)
    wmat = p.weights.reshape(nc, -1)
    grad_x = (wmat @ gcols).reshape(nc, nb, length).transpose(1, 0, 2)
    grad_w = (xmat @ gcols.T).reshape(p.weights.shape)
    grad_b = grad_out.sum(axis=(0, 2))
    return np.ascontiguousarray(grad_x), grad_w, grad_b


def relu_forward(x):
    mask = x > 0
    return np.where(mask, x, 0).astype(x.dtype, copy=False), mask


def relu_backward(grad_out, mask):
    if grad_out.shape != mask.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != activation shape {mask.shape}")
    return np.where(mask, grad_out, 0).astype(grad_out.dtype, copy=False)


def _check_labels(logits, labels):
    labels = np.asarray(labels)
    nb, ncls, length = logits.shape
    if labels.shape != (nb, length):
        raise ShapeError(f"labels shape {labels.shape} != {(nb, length)}")
    if labels.size and (labels.min() < 0 or labels.max() >= ncls):
        raise DataError(f"labels must lie in [0, {ncls}), got range [{labels.min()}, {labels.max()}]")
    return labels.astype(np.int64, copy=False)


def softmax(logits, axis=1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_xent_forward(logits, labels):
    """Mean per-sample cross-entropy over the class (channel) axis.

    Returns ``(loss, probs)``; ``probs`` has the logits' shape.
    """
    logits = as_tensor3(logits)
    labels = _check_labels(logits, labels)
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    picked = np.take_along_axis(z, labels[:, None, :], axis=1)[:, 0, :]
    loss = float(np.mean(lse - picked))
    probs = np.exp(z - lse[:, None, :])
    return loss, probs


def softmax_xent_backward(probs, labels):
    labels = _check_labels(probs, labels)
    nb, _, length = probs.shape
    grad = probs.copy()
    onehot = np.take_along_axis(grad, labels[:, None, :], axis=1) - 1
    np.put_along_axis(grad, labels[:, None, :], onehot, axis=1)
    grad /= nb * length
    return grad
