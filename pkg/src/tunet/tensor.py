"""Dense (batch, channel, time) arrays.

Activations, parameters and gradients are plain C-contiguous numpy arrays;
3-axis arrays always use (batch, channels, length) order so the time axis
is innermost.
"""
import numpy as np

from .errors import ShapeError

PRECISIONS = {32: np.float32, 64: np.float64}


def dtype_for(precision):
    try:
        return np.dtype(PRECISIONS[int(precision)])
    except (KeyError, ValueError):
        raise ShapeError(f"precision must be 32 or 64, got {precision!r}") from None


def zeros(batch, channels, length, precision=64):
    return np.zeros((batch, channels, length), dtype=dtype_for(precision))


def as_tensor3(x, dtype=None):
    """Return ``x`` as a C-contiguous 3-axis array, validating the rank."""
    arr = np.ascontiguousarray(x, dtype=dtype)
    if arr.ndim != 3:
        raise ShapeError(f"expected a (batch, channels, length) array, got shape {arr.shape}")
    return arr


def flat_offset(shape, b, c, t):
    """Row-major offset of element (b, c, t) in an array of ``shape``."""
    _, channels, length = shape
    return (b * channels + c) * length + t


def concat_channels(a, b):
    """Stack ``a`` under ``b`` along the channel axis."""
    a = as_tensor3(a)
    b = as_tensor3(b)
    if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ShapeError(
            f"cannot concatenate {a.shape} and {b.shape}: batch and length must match"
        )
    return np.concatenate([a, b], axis=1)


def split_channels_grad(g, split_at):
    """Adjoint of :func:`concat_channels`: split ``g`` at channel ``split_at``."""
    g = as_tensor3(g)
    if not 0 < split_at < g.shape[1]:
        raise ShapeError(f"split point {split_at} outside (0, {g.shape[1]})")
    return (
        np.ascontiguousarray(g[:, :split_at]),
        np.ascontiguousarray(g[:, split_at:]),
    )
