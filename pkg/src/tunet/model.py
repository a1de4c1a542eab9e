"""Temporal Unet: encoder, decoder and shortcut links over the time axis.

Parameters live in a ``ParamStore``, an insertion-ordered ``dict`` mapping
names such as ``"down0.conv1.w"`` to arrays. Gradients use the same names.

Layout for ``depth = 3``, ``base_channels = 64`` and 52 input carriers::

    down0   52 -> 64 -> 64     192, pool -> 96
    down1   64 -> 128 -> 128    96, pool -> 48
    down2  128 -> 256 -> 256    48, pool -> 24
    bottleneck 256 -> 512 -> 512 at 24
    up2    deconv 512 -> 256 (24 -> 48), concat skip -> 512, convs -> 256
    up1    deconv 256 -> 128 (48 -> 96), concat skip -> 256, convs -> 128
    up0    deconv 128 -> 64 (96 -> 192), concat skip -> 128, convs -> 64
    head   kernel-1 conv 64 -> num_classes
"""
import struct
import zlib
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ChecksumError, ConfigError, ShapeError, VersionError
from .layers import (
    Conv1dParams,
    Deconv1dParams,
    conv1d_backward,
    conv1d_forward,
    deconv1d_backward,
    deconv1d_forward,
    maxpool1d_backward,
    maxpool1d_forward,
    relu_backward,
    relu_forward,
    softmax,
)
from .tensor import as_tensor3, concat_channels, dtype_for, split_channels_grad

MAGIC = b"TUNET1\n"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TUnetConfig:
    input_channels: int = 52
    series_length: int = 192
    num_classes: int = 2
    depth: int = 3
    base_channels: int = 64
    conv_kernel: int = 3
    seed: int = 0

    def validate(self):
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.series_length < 2**self.depth or self.series_length % 2**self.depth:
            raise ConfigError(
                f"series_length {self.series_length} must be a positive multiple of 2**depth = {2**self.depth}"
            )
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        for name in ("input_channels", "base_channels", "conv_kernel"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        return self

    def channels(self, level):
        """Feature channels at encoder level ``level`` (``depth`` is the bottleneck)."""
        return self.base_channels * 2**level


def param_shapes(config):
    """Ordered ``(name, shape)`` pairs for every trainable array."""
    config.validate()
    k = config.conv_kernel
    shapes = []

    def conv(name, cin, cout, kernel=k):
        shapes.append((f"{name}.w", (cout, cin, kernel)))
        shapes.append((f"{name}.b", (cout,)))

    cin = config.input_channels
    for i in range(config.depth):
        c = config.channels(i)
        conv(f"down{i}.conv1", cin, c)
        conv(f"down{i}.conv2", c, c)
        cin = c
    c = config.channels(config.depth)
    conv("bottleneck.conv1", cin, c)
    conv("bottleneck.conv2", c, c)
    for i in reversed(range(config.depth)):
        c_hi, c = config.channels(i + 1), config.channels(i)
        shapes.append((f"up{i}.deconv.w", (c_hi, c, 2)))
        shapes.append((f"up{i}.deconv.b", (c,)))
        conv(f"up{i}.conv1", 2 * c, c)
        conv(f"up{i}.conv2", c, c)
    conv("head", config.channels(0), config.num_classes, kernel=1)
    return shapes


def parameter_count(config):
    return sum(int(np.prod(shape)) for _, shape in param_shapes(config))


def build(config, precision=64):
    """He-normal weights (variance 2 / fan_in) and zero biases from PCG64(seed)."""
    dtype = dtype_for(precision)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    params = {}
    for name, shape in param_shapes(config):
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        # conv weights are (out, in, k); deconv weights are (in, out, k)
        fan_in = (shape[0] if ".deconv." in name else shape[1]) * shape[2]
        w = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        params[name] = w.astype(dtype)
    return params


def zeros_like(params):
    return {name: np.zeros_like(v) for name, v in params.items()}


def _conv(params, name, kernel):
    even = kernel % 2 == 0
    return Conv1dParams(params[name + ".w"], params[name + ".b"], 1, kernel // 2, 1 if even else 0)


def _deconv(params, name):
    return Deconv1dParams(params[name + ".w"], params[name + ".b"], stride=2)


def _check_params(params, config):
    for name, shape in param_shapes(config):
        if name not in params:
            raise ShapeError(f"parameter {name} missing for this configuration")
        if params[name].shape != shape:
            raise ShapeError(f"parameter {name} has shape {params[name].shape}, config expects {shape}")


def forward(params, x, config):
    """Map a (batch, input_channels, series_length) array to per-sample logits."""
    x = as_tensor3(x)
    expected = (config.input_channels, config.series_length)
    if x.shape[1:] != expected:
        raise ShapeError(f"input shape {x.shape} does not match (batch, {expected[0]}, {expected[1]})")
    _check_params(params, config)
    x = x.astype(params["head.w"].dtype, copy=False)
    k = config.conv_kernel
    cache = {"skips": []}

    def conv_relu(h, name):
        z, c = conv1d_forward(h, _conv(params, name, k))
        a, mask = relu_forward(z)
        cache[name] = (c, mask)
        return a

    h = x
    for i in range(config.depth):
        h = conv_relu(h, f"down{i}.conv1")
        h = conv_relu(h, f"down{i}.conv2")
        cache["skips"].append(h)
        h, cache[f"down{i}.pool"] = maxpool1d_forward(h, 2, 2)
    h = conv_relu(h, "bottleneck.conv1")
    h = conv_relu(h, "bottleneck.conv2")
    for i in reversed(range(config.depth)):
        u, cache[f"up{i}.deconv"] = deconv1d_forward(h, _deconv(params, f"up{i}.deconv"))
        h = concat_channels(u, cache["skips"][i])
        h = conv_relu(h, f"up{i}.conv1")
        h = conv_relu(h, f"up{i}.conv2")
    logits, cache["head"] = conv1d_forward(h, _conv(params, "head", 1))
    return logits, cache


def backward(params, cache, grad_logits, config):
    """Gradients of ``sum(grad_logits * logits)`` for every parameter."""
    grads = {}
    k = config.conv_kernel

    def conv_back(g, name, kernel=k):
        p = _conv(params, name, kernel)
        if name == "head":
            c = cache[name]
        else:
            c, mask = cache[name]
            g = relu_backward(g, mask)
        gx, grads[name + ".w"], grads[name + ".b"] = conv1d_backward(g, c, p)
        return gx

    g = conv_back(np.asarray(grad_logits, dtype=params["head.w"].dtype), "head", 1)
    skip_grads = [None] * config.depth
    for i in range(config.depth):
        g = conv_back(g, f"up{i}.conv2")
        g = conv_back(g, f"up{i}.conv1")
        g_up, skip_grads[i] = split_channels_grad(g, config.channels(i))
        p = _deconv(params, f"up{i}.deconv")
        g, grads[f"up{i}.deconv.w"], grads[f"up{i}.deconv.b"] = deconv1d_backward(
            g_up, cache[f"up{i}.deconv"], p
        )
    g = conv_back(g, "bottleneck.conv2")
    g = conv_back(g, "bottleneck.conv1")
    for i in reversed(range(config.depth)):
        g = maxpool1d_backward(g, cache[f"down{i}.pool"]) + skip_grads[i]
        g = conv_back(g, f"down{i}.conv2")
        g = conv_back(g, f"down{i}.conv1")
    return {name: grads[name] for name, _ in param_shapes(config)}


def predict(params, x, config):
    """Per-sample argmax labels and the full softmax confidence curves."""
    logits, _ = forward(params, x, config)
    probs = softmax(logits, axis=1)
    return np.argmax(probs, axis=1), probs


def save_checkpoint(params, config, path):
    """Write ``params`` in the TUNET1 format; arrays keep their precision."""
    dtype = params["head.w"].dtype
    _check_params(params, config)
    lines = [f"format_version={FORMAT_VERSION}", f"dtype={'float64' if dtype == np.float64 else 'float32'}"]
    lines += [f"{key}={value}" for key, value in asdict(config).items()]
    shapes = param_shapes(config)
    lines.append(f"params={len(shapes)}")
    lines += [f"{name} {','.join(map(str, shape))}" for name, shape in shapes]
    lines.append("end")
    blob = bytearray(MAGIC)
    blob += ("\n".join(lines) + "\n").encode("ascii")
    le = "<f8" if dtype == np.float64 else "<f4"
    for name, _ in shapes:
        blob += np.ascontiguousarray(params[name], dtype=le).tobytes()
    blob += struct.pack("<I", zlib.crc32(blob) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path, config=None):
    """Read a checkpoint written by :func:`save_checkpoint`.

    With ``config`` given, the stored configuration must describe the same
    parameter shapes, otherwise :class:`ShapeError` is raised.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise VersionError(f"{path}: not a TUNET1 checkpoint")
    if len(blob) < len(MAGIC) + 4:
        raise ChecksumError(f"{path}: truncated checkpoint")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ChecksumError(f"{path}: CRC mismatch")
    pos = len(MAGIC)
    header = {}
    manifest = []
    while True:
        nl = body.index(b"\n", pos)
        line = body[pos:nl].decode("ascii")
        pos = nl + 1
        if line == "end":
            break
        if "=" in line:
            key, value = line.split("=", 1)
            header[key] = value
        else:
            name, dims = line.split(" ")
            manifest.append((name, tuple(int(d) for d in dims.split(",") if d)))
    if int(header.get("format_version", -1)) != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported format_version {header.get('format_version')}")
    stored = TUnetConfig(**{f.name: int(header[f.name]) for f in fields(TUnetConfig)})
    if manifest != param_shapes(stored):
        raise ShapeError(f"{path}: manifest does not match its recorded configuration")
    if config is not None and param_shapes(config) != manifest:
        raise ShapeError(f"{path}: checkpoint shapes do not match the requested configuration")
    le = np.dtype("<f8" if header["dtype"] == "float64" else "<f4")
    params = {}
    for name, shape in manifest:
        n = int(np.prod(shape))
        arr = np.frombuffer(body, dtype=le, count=n, offset=pos).reshape(shape)
        params[name] = arr.astype(le.newbyteorder("="), copy=True)
        pos += n * le.itemsize
    if pos != len(body):
        raise ChecksumError(f"{path}: {len(body) - pos} trailing bytes after parameter data")
    return params, stored
