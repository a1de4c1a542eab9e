"""CSI series containers, on-disk corpus format, batching and a synthetic generator.

On disk a corpus is a manifest plus one data file and one label file per
series. Manifest lines read ``series_id,role,data_path,label_path`` with
paths relative to the manifest; ``role`` is ``train`` or ``test``. A data
file has ``n`` lines of 52 comma-separated reals, a label file ``n`` lines
holding one integer each (0 = no action, 1..cls = gesture id).
"""
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError

CARRIERS = 52
STD_FLOOR = 1e-6


@dataclass
class CsiSeries:
    values: np.ndarray  # (n, carriers)
    labels: np.ndarray  # (n,)
    series_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.values.ndim != 2 or self.labels.shape != (self.values.shape[0],):
            raise DataError(
                f"series {self.series_id!r}: values {self.values.shape} and labels {self.labels.shape} disagree"
            )
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"series {self.series_id!r}: non-finite values")

    def __len__(self):
        return self.values.shape[0]


@dataclass
class DatasetSplit:
    series: list
    role: str = "train"
    mean: np.ndarray = None
    std: np.ndarray = None
    _arrays: tuple = field(default=None, repr=False, compare=False)

    def __len__(self):
        return len(self.series)

    def arrays(self):
        """Stacked ``(N, carriers, n)`` values and ``(N, n)`` labels."""
        if self._arrays is None:
            x = np.stack([s.values.T for s in self.series])
            y = np.stack([s.labels for s in self.series])
            self._arrays = (np.ascontiguousarray(x), y)
        return self._arrays


def fit_stats(split):
    """Per-carrier mean and floored std pooled over every sample of ``split``."""
    allv = np.concatenate([s.values for s in split.series], axis=0)
    return allv.mean(axis=0), np.maximum(allv.std(axis=0), STD_FLOOR)


def with_stats(split, mean, std):
    return replace(split, mean=np.asarray(mean), std=np.asarray(std), _arrays=None)


def normalize(split):
    """Z-score every carrier with the statistics stored on ``split``."""
    if split.mean is None or split.std is None:
        raise DataError("split has no normalization statistics")
    out = [
        CsiSeries((s.values - split.mean) / split.std, s.labels, s.series_id)
        for s in split.series
    ]
    return replace(split, series=out, _arrays=None)


def to_detection_labels(labels):
    """Collapse gesture ids to 1 (action); 0 stays 0."""
    labels = np.asarray(labels)
    return (labels > 0).astype(labels.dtype if labels.dtype.kind in "iu" else np.int64)


def validate_series(s, carriers=CARRIERS, cls=None):
    if s.values.shape[1] != carriers:
        raise DataError(f"series {s.series_id!r}: {s.values.shape[1]} carriers, expected {carriers}")
    if s.labels.size and s.labels.min() < 0:
        raise DataError(f"series {s.series_id!r}: negative label")
    if cls is not None and s.labels.size and s.labels.max() > cls:
        raise DataError(f"series {s.series_id!r}: label {s.labels.max()} outside [0, {cls}]")


def _read_matrix(path, series_id):
    try:
        with open(path) as fh:
            rows = [line.strip() for line in fh if line.strip()]
    except OSError as exc:
        raise DataError(f"series {series_id!r}: cannot read {path}: {exc.strerror}") from None
    try:
        data = [[float(v) for v in row.split(",")] for row in rows]
    except ValueError:
        raise DataError(f"series {series_id!r}: malformed number in {path}") from None
    widths = {len(r) for r in data}
    if len(widths) > 1:
        raise DataError(f"series {series_id!r}: ragged rows in {path}")
    return np.array(data, dtype=np.float64).reshape(len(data), widths.pop() if widths else 0)


def _read_labels(path, series_id):
    try:
        with open(path) as fh:
            return np.array([int(line) for line in fh if line.strip()], dtype=np.int64)
    except OSError as exc:
        raise DataError(f"series {series_id!r}: cannot read {path}: {exc.strerror}") from None
    except ValueError:
        raise DataError(f"series {series_id!r}: malformed label in {path}") from None


def read_series(data_path, label_path=None, series_id=None, carriers=CARRIERS, cls=None):
    """Load one series; without ``label_path`` every label is 0."""
    series_id = series_id or os.path.basename(data_path)
    values = _read_matrix(data_path, series_id)
    if values.ndim != 2 or values.shape[1] != carriers:
        raise DataError(f"series {series_id!r}: {values.shape[1]} carriers in {data_path}, expected {carriers}")
    labels = _read_labels(label_path, series_id) if label_path else np.zeros(len(values), np.int64)
    if labels.shape[0] != values.shape[0]:
        raise DataError(f"series {series_id!r}: {labels.shape[0]} labels for {values.shape[0]} samples")
    s = CsiSeries(values, labels, series_id)
    validate_series(s, carriers, cls)
    return s


def load_dataset(manifest_path, carriers=CARRIERS, cls=None):
    """Read a manifest; returns ``(train, test)`` carrying train statistics."""
    root = os.path.dirname(os.path.abspath(manifest_path))
    try:
        with open(manifest_path) as fh:
            records = [line.strip() for line in fh]
    except OSError as exc:
        raise DataError(f"cannot read manifest {manifest_path}: {exc.strerror}") from None
    splits = {"train": [], "test": []}
    for lineno, line in enumerate(records, 1):
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4 or parts[1] not in splits:
            raise DataError(f"{manifest_path}:{lineno}: expected 'series_id,train|test,data_path,label_path'")
        sid, role, dpath, lpath = parts
        s = read_series(os.path.join(root, dpath), os.path.join(root, lpath), sid, carriers, cls)
        splits[role].append(s)
    if not splits["train"]:
        raise DataError(f"{manifest_path}: no training series")
    lengths = {len(s) for s in splits["train"] + splits["test"]}
    if len(lengths) != 1:
        raise DataError(f"{manifest_path}: series lengths differ: {sorted(lengths)}")
    train = DatasetSplit(splits["train"], "train")
    mean, std = fit_stats(train)
    return with_stats(train, mean, std), DatasetSplit(splits["test"], "test", mean, std)


def write_dataset(directory, train, test, manifest_name="manifest.csv"):
    """Write both splits in the manifest format; returns the manifest path."""
    os.makedirs(os.path.join(directory, "series"), exist_ok=True)
    lines = []
    for split in (train, test):
        for s in split.series:
            dname = f"series/{s.series_id}.csv"
            lname = f"series/{s.series_id}.labels"
            write_series(os.path.join(directory, dname), s, os.path.join(directory, lname))
            lines.append(f"{s.series_id},{split.role},{dname},{lname}")
    path = os.path.join(directory, manifest_name)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_series(data_path, s, label_path=None):
    with open(data_path, "w") as fh:
        for row in s.values:
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")
    if label_path:
        with open(label_path, "w") as fh:
            fh.write("\n".join(str(int(v)) for v in s.labels) + "\n")


def epoch_permutation(size, seed, epoch):
    """Shuffle order of epoch ``epoch``; PCG64 seeded from ``(seed, epoch)``."""
    rng = np.random.Generator(np.random.PCG64([seed, epoch]))
    return rng.permutation(size)


def batches(split, batch_size, seed, epoch):
    """Yield shuffled ``(x, labels)`` batches; the last batch may be short."""
    if not split.series:
        raise DataError("cannot batch an empty split")
    x, y = split.arrays()
    perm = epoch_permutation(len(split), seed, epoch)
    for start in range(0, len(perm), batch_size):
        idx = perm[start : start + batch_size]
        yield x[idx], y[idx]


# --- synthetic corpus -------------------------------------------------------

SIGNATURE_PERIOD = 16.0


def carrier_weights(g, carriers=CARRIERS):
    """Per-carrier amplitude profile imprinted by gesture ``g``."""
    c = np.arange(carriers)
    return 0.6 + 0.4 * np.cos(2 * np.pi * g * c / carriers)


def signature(g, length, phase, carriers=CARRIERS, amplitude=1.0):
    """Burst of gesture ``g``: a raised step modulated at ``g / 16`` cycles per sample."""
    t = np.arange(length)
    wave = 1.0 + 0.5 * np.sin(2 * np.pi * g * t / SIGNATURE_PERIOD + phase)
    return amplitude * wave[:, None] * carrier_weights(g, carriers)[None, :]


def _synth_series(rng, cls, n, carriers, noise, series_id):
    t = np.arange(n)[:, None]
    level = rng.uniform(0.5, 1.5, carriers)
    drift_amp = rng.uniform(0.05, 0.2, carriers)
    drift_period = rng.uniform(n / 2, 2 * n)
    drift_phase = rng.uniform(0, 2 * np.pi, carriers)
    values = level + drift_amp * np.sin(2 * np.pi * t / drift_period + drift_phase)
    values = values + noise * rng.standard_normal((n, carriers))
    g = int(rng.integers(1, cls + 1))
    dur = int(rng.integers(n // 8, n // 2 + 1))
    start = int(rng.integers(0, n - dur + 1))
    values[start : start + dur] += signature(g, dur, rng.uniform(0, 2 * np.pi), carriers)
    labels = np.zeros(n, dtype=np.int64)
    labels[start : start + dur] = g
    return CsiSeries(values, labels, series_id)


def matched_filter_class(values, labels, cls):
    """Guess the gesture in the labelled window from quadrature matched-filter energy."""
    active = np.flatnonzero(labels)
    window = values[active]
    window = window - window.mean(axis=0)
    t = np.arange(len(active))
    energies = []
    for g in range(1, cls + 1):
        w = carrier_weights(g, values.shape[1])
        proj = window @ (w / np.linalg.norm(w))
        z = np.sum(proj * np.exp(-2j * np.pi * g * t / SIGNATURE_PERIOD))
        energies.append(abs(z) ** 2)
    return int(np.argmax(energies)) + 1


def separability(split, cls):
    """Share of series whose window the matched filter assigns to the true gesture."""
    hits = [
        matched_filter_class(s.values, s.labels, cls) == int(s.labels.max())
        for s in split.series
    ]
    return float(np.mean(hits))


def synth_generate(num_series, cls=6, n=192, seed=0, num_test=None, carriers=CARRIERS, noise=0.1):
    """Synthetic ``(train, test)`` corpus fully determined by ``seed``.

    Each series is a drifting per-carrier baseline plus Gaussian noise with a
    single gesture interval of ``n/8`` to ``n/2`` samples. ``num_test``
    defaults to a quarter of ``num_series``.
    """
    if cls < 1:
        raise DataError(f"cls must be >= 1, got {cls}")
    if n < 8 or n % 8:
        raise DataError(f"series length must be a positive multiple of 8, got {n}")
    if num_series < 1:
        raise DataError("num_series must be >= 1")
    if num_test is None:
        num_test = num_series // 4
    rng = np.random.Generator(np.random.PCG64(seed))
    train = [_synth_series(rng, cls, n, carriers, noise, f"train{i:05d}") for i in range(num_series)]
    test = [_synth_series(rng, cls, n, carriers, noise, f"test{i:05d}") for i in range(num_test)]
    tr = DatasetSplit(train, "train")
    mean, std = fit_stats(tr)
    return with_stats(tr, mean, std), DatasetSplit(test, "test", mean, std)
