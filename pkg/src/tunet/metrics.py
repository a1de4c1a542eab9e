"""Sample accuracy, AP@a over per-series accuracies, and confusion matrices."""
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError

DEFAULT_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)


def per_series_accuracy(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise ShapeError(f"prediction shape {pred.shape} vs truth shape {truth.shape}")
    return float(np.mean(pred == truth))


def ap_at(accuracies, a):
    """Fraction of series whose accuracy is at least ``a``."""
    acc = np.asarray(accuracies, dtype=np.float64)
    if acc.size == 0:
        raise ValueError("AP needs at least one series accuracy")
    if not 0 <= a <= 1:
        raise ValueError(f"threshold must lie in [0, 1], got {a}")
    return float(np.count_nonzero(acc >= a)) / acc.size


@dataclass
class ApReport:
    thresholds: list
    ap_values: list
    per_series_acc: list = field(repr=False)

    @property
    def n(self):
        return len(self.per_series_acc)

    @property
    def mean_ap(self):
        return mean_ap(self)


def ap_report(accuracies, thresholds=DEFAULT_THRESHOLDS):
    accuracies = [float(a) for a in accuracies]
    return ApReport(list(thresholds), [ap_at(accuracies, a) for a in thresholds], accuracies)


def mean_ap(report):
    """Mean of the AP values; accepts an :class:`ApReport` or a plain sequence."""
    values = report.ap_values if isinstance(report, ApReport) else list(report)
    return float(np.mean(values))


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    class_names: list

    def normalized(self):
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    @property
    def accuracy(self):
        return float(np.trace(self.counts) / self.counts.sum())


def confusion(preds, truths, num_classes, class_names=None):
    preds = np.asarray(preds).ravel()
    truths = np.asarray(truths).ravel()
    if preds.shape != truths.shape:
        raise ShapeError(f"{preds.size} predictions vs {truths.size} truths")
    for arr in (preds, truths):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise DataError(f"class index outside [0, {num_classes})")
    counts = np.bincount(truths * num_classes + preds, minlength=num_classes**2)
    names = list(class_names) if class_names else [str(i) for i in range(num_classes)]
    return ConfusionMatrix(counts.reshape(num_classes, num_classes).astype(np.int64), names)


@dataclass
class EvalResult:
    accuracy: float
    mean_series_accuracy: float
    ap: ApReport
    confusion: ConfusionMatrix


def evaluate(preds, truths, num_classes, thresholds=DEFAULT_THRESHOLDS, class_names=None):
    """Metrics over a set of series; ``preds``/``truths`` are (series, length)."""
    preds = np.asarray(preds)
    truths = np.asarray(truths)
    accs = [per_series_accuracy(p, t) for p, t in zip(preds, truths)]
    cm = confusion(preds, truths, num_classes, class_names)
    return EvalResult(cm.accuracy, float(np.mean(accs)), ap_report(accs, thresholds), cm)


def format_report(result):
    """Human-readable table followed by a comma-separated block."""
    ap = result.ap
    lines = [
        f"overall sample accuracy : {result.accuracy:.4f}",
        f"mean series accuracy    : {result.mean_series_accuracy:.4f}",
        f"series (N)              : {ap.n}",
        "",
        "  " + "  ".join(f"AP@{a:.1f}" for a in ap.thresholds) + "  mean AP",
        "  " + "  ".join(f"{v:6.2f}" for v in ap.ap_values) + f"  {ap.mean_ap:7.2f}",
        "",
        "confusion (rows = truth, cols = prediction):",
    ]
    cm = result.confusion
    width = max(6, max(len(n) for n in cm.class_names) + 1)
    lines.append(" " * width + "".join(f"{n:>{width}}" for n in cm.class_names))
    for name, row in zip(cm.class_names, cm.counts):
        lines.append(f"{name:>{width}}" + "".join(f"{v:>{width}d}" for v in row))
    lines += ["", "# csv", *metrics_csv(result)]
    return "\n".join(lines)


def metrics_csv(result):
    out = ["metric,key,value"]
    out += [f"ap,{a:g},{v:.10g}" for a, v in zip(result.ap.thresholds, result.ap.ap_values)]
    out.append(f"mean_ap,,{result.ap.mean_ap:.10g}")
    out.append(f"accuracy,pooled,{result.accuracy:.10g}")
    out.append(f"accuracy,mean_series,{result.mean_series_accuracy:.10g}")
    for name, row in zip(result.confusion.class_names, result.confusion.counts):
        out.append(f"confusion,{name}," + " ".join(str(int(v)) for v in row))
    return out
