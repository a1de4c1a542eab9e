"""Independent reference implementations used as test oracles."""
import numpy as np


def naive_conv1d(x, w, bias, stride=1, padding=0):
    """Direct quadruple loop; summation order (i, k) within each output element."""
    nb, ci, length = x.shape
    co, _, k = w.shape
    xp = np.zeros((nb, ci, length + 2 * padding), dtype=x.dtype)
    xp[:, :, padding : padding + length] = x
    lout = (length + 2 * padding - k) // stride + 1
    out = np.zeros((nb, co, lout), dtype=x.dtype)
    for b in range(nb):
        for o in range(co):
            for t in range(lout):
                acc = bias[o]
                for i in range(ci):
                    for j in range(k):
                        acc += w[o, i, j] * xp[b, i, t * stride + j]
                out[b, o, t] = acc
    return out


def naive_deconv1d(x, w, bias, stride):
    """Direct scatter: every input sample adds its kernel into the output."""
    nb, ci, length = x.shape
    _, co, k = w.shape
    out = np.zeros((nb, co, (length - 1) * stride + k), dtype=x.dtype)
    for b in range(nb):
        for i in range(ci):
            for s in range(length):
                for o in range(co):
                    for j in range(k):
                        out[b, o, s * stride + j] += w[i, o, j] * x[b, i, s]
    out += bias[None, :, None]
    return out
