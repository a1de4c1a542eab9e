"""Central finite-difference checks of every hand-written backward pass.

Each layer check draws random small shapes (batch <= 2, channels <= 4,
length <= 16) at 64-bit, uses the scalar ``sum(r * layer(x))`` with a random
``r``, and compares analytic and numeric gradients by the norm-wise relative
error ``|a - n| / max(|a|, |n|)``.
"""
from dataclasses import dataclass

import numpy as np

from . import layers, model

STEP = 1e-5
TOLERANCE = 1e-5


def rel_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def numeric_grad(f, arr, h=STEP):
    """Central differences of scalar ``f()`` with respect to ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return grad


def _distinct(rng, shape, spacing=0.05):
    """Values at least ``spacing`` apart and away from zero (no pooling ties, no ReLU kinks)."""
    n = int(np.prod(shape))
    vals = (rng.permutation(n) - n / 2 + 0.5) * spacing
    vals += rng.uniform(-0.2, 0.2, n) * spacing
    return vals.reshape(shape)


def check_conv1d(rng, backward=layers.conv1d_backward, kernel=None):
    b, ci, co = rng.integers(1, 3), rng.integers(1, 5), rng.integers(1, 5)
    k = kernel or int(rng.integers(1, 4))
    pad = k // 2
    trim = 1 if k % 2 == 0 else 0
    length = int(rng.integers(k, 17))
    x = rng.standard_normal((b, ci, length))
    p = layers.Conv1dParams(rng.standard_normal((co, ci, k)), rng.standard_normal(co), 1, pad, trim)
    out, cache = layers.conv1d_forward(x, p)
    r = rng.standard_normal(out.shape)
    f = lambda: float(np.sum(r * layers.conv1d_forward(x, p)[0]))
    gx, gw, gb = backward(r, cache, p)
    return max(
        rel_error(gx, numeric_grad(f, x)),
        rel_error(gw, numeric_grad(f, p.weights)),
        rel_error(gb, numeric_grad(f, p.bias)),
    )


def check_conv1d_k2(rng, backward=layers.conv1d_backward):
    return check_conv1d(rng, backward, kernel=2)


def check_deconv1d(rng, backward=layers.deconv1d_backward):
    b, ci, co = rng.integers(1, 3), rng.integers(1, 5), rng.integers(1, 5)
    k, stride = int(rng.integers(1, 4)), int(rng.integers(1, 3))
    length = int(rng.integers(1, 9))
    x = rng.standard_normal((b, ci, length))
    p = layers.Deconv1dParams(rng.standard_normal((ci, co, k)), rng.standard_normal(co), stride)
    out, cache = layers.deconv1d_forward(x, p)
    r = rng.standard_normal(out.shape)
    f = lambda: float(np.sum(r * layers.deconv1d_forward(x, p)[0]))
    gx, gw, gb = backward(r, cache, p)
    return max(
        rel_error(gx, numeric_grad(f, x)),
        rel_error(gw, numeric_grad(f, p.weights)),
        rel_error(gb, numeric_grad(f, p.bias)),
    )


def check_maxpool1d(rng, backward=layers.maxpool1d_backward):
    b, c = rng.integers(1, 3), rng.integers(1, 5)
    length = 2 * int(rng.integers(1, 9))
    x = _distinct(rng, (b, c, length))
    out, cache = layers.maxpool1d_forward(x, 2, 2)
    r = rng.standard_normal(out.shape)
    f = lambda: float(np.sum(r * layers.maxpool1d_forward(x, 2, 2)[0]))
    return rel_error(backward(r, cache, length), numeric_grad(f, x))


def check_relu(rng, backward=layers.relu_backward):
    shape = (int(rng.integers(1, 3)), int(rng.integers(1, 5)), int(rng.integers(1, 17)))
    x = _distinct(rng, shape)
    _, mask = layers.relu_forward(x)
    r = rng.standard_normal(shape)
    f = lambda: float(np.sum(r * layers.relu_forward(x)[0]))
    return rel_error(backward(r, mask), numeric_grad(f, x))


def check_softmax_xent(rng, backward=layers.softmax_xent_backward):
    b, c, length = int(rng.integers(1, 3)), int(rng.integers(2, 5)), int(rng.integers(1, 17))
    logits = rng.standard_normal((b, c, length)) * 2
    labels = rng.integers(0, c, (b, length))
    _, probs = layers.softmax_xent_forward(logits, labels)
    f = lambda: layers.softmax_xent_forward(logits, labels)[0]
    return rel_error(backward(probs, labels), numeric_grad(f, logits))


TINY = model.TUnetConfig(input_channels=2, series_length=8, num_classes=2, depth=1, base_channels=4)


def check_tunet(rng, backward=model.backward, config=TINY):
    """End-to-end: cross-entropy of the tiny network against every parameter."""
    cfg = model.TUnetConfig(**{**config.__dict__, "seed": int(rng.integers(2**31))})
    params = model.build(cfg, precision=64)
    for name in params:
        if name.endswith(".b"):
            params[name][...] = rng.standard_normal(params[name].shape) * 0.1
    x = rng.standard_normal((1, cfg.input_channels, cfg.series_length))
    labels = rng.integers(0, cfg.num_classes, (1, cfg.series_length))

    def loss():
        return layers.softmax_xent_forward(model.forward(params, x, cfg)[0], labels)[0]

    logits, cache = model.forward(params, x, cfg)
    _, probs = layers.softmax_xent_forward(logits, labels)
    grads = backward(params, cache, layers.softmax_xent_backward(probs, labels), cfg)
    return max(rel_error(grads[name], numeric_grad(loss, params[name])) for name in params)


CHECKS = {
    "conv1d": (check_conv1d, layers.conv1d_backward),
    "conv1d_k2": (check_conv1d_k2, layers.conv1d_backward),
    "deconv1d": (check_deconv1d, layers.deconv1d_backward),
    "maxpool1d": (check_maxpool1d, layers.maxpool1d_backward),
    "relu": (check_relu, layers.relu_backward),
    "softmax_xent": (check_softmax_xent, layers.softmax_xent_backward),
    "tunet": (check_tunet, model.backward),
}


def _corrupted(backward):
    def bad(*args, **kwargs):
        out = backward(*args, **kwargs)
        if isinstance(out, tuple):
            return tuple(o * 1.01 for o in out)
        if isinstance(out, dict):
            return {k: v * 1.01 for k, v in out.items()}
        return out * 1.01

    return bad


@dataclass
class CheckResult:
    layer: str
    worst: float
    tolerance: float = TOLERANCE

    @property
    def passed(self):
        return self.worst <= self.tolerance


def run_gradcheck(seeds=range(5), inject_fault=None, tolerance=TOLERANCE):
    """Worst relative error per layer over ``seeds``.

    ``inject_fault`` names a layer whose backward pass gets scaled by 1.01,
    used to confirm the harness reports failures.
    """
    results = []
    for name, (check, backward) in CHECKS.items():
        if name == inject_fault or (inject_fault == "conv1d" and name == "conv1d_k2"):
            backward = _corrupted(backward)
        worst = max(check(np.random.default_rng(seed), backward) for seed in seeds)
        results.append(CheckResult(name, worst, tolerance))
    return results
