"""Classification/regression metrics and report files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from metriq import kernels


class EvalError(ValueError):
    pass


class UndefinedR2Error(EvalError):
    pass


@dataclass
class EvalReport:
    language: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc_roc: float
    r2: float | None
    n_train: int
    n_val: int
    threshold: float
    seed: int
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def dump_report(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, allow_nan=False)
        fh.write("\n")


def load_report(path) -> EvalReport:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    rep = EvalReport(**doc)
    for name in ("accuracy", "precision", "recall", "f1", "auc_roc"):
        v = getattr(rep, name)
        if not 0.0 <= v <= 1.0:
            raise EvalError(f"{path}: {name}={v} outside [0, 1]")
    if rep.r2 is not None and rep.r2 > 1.0:
        raise EvalError(f"{path}: r2={rep.r2} > 1")
    return rep


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b).ravel()
    if a.size != b.size:
        raise EvalError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise EvalError("need at least one example")
    return a, b


def confusion_metrics(probs, labels, threshold: float = 0.5) -> dict:
    """Accuracy, precision, recall and F1 with prediction ``prob >= threshold``.

    A ratio whose denominator is zero is reported as 0 and named in
    ``flags``.
    """
    p, y = _check_pair(probs, labels)
    y = y.astype(bool)
    pred = p >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    tn = int(np.sum(~pred & ~y))
    flags = []
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        flags.append("precision_undefined")
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        flags.append("recall_undefined")
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {
        "accuracy": (tp + tn) / y.size,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "flags": flags,
    }


def auc_roc(probs, labels) -> float:
    """Mann-Whitney AUC: (concordant + tied/2) / (n_pos * n_neg)."""
    p, y = _check_pair(probs, labels)
    y = y.astype(bool)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise EvalError("AUC needs both classes")
    return float(kernels.auc_mann_whitney(np.ascontiguousarray(p), np.ascontiguousarray(y)))


def r_squared(preds, targets) -> float:
    p, t = _check_pair(preds, targets)
    t = t.astype(np.float64)
    if t.size < 2:
        raise EvalError("R2 needs at least two targets")
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedR2Error("R2 is undefined for constant targets")
    ss_res = float(np.sum((t - p) ** 2))
    return 1.0 - ss_res / ss_tot


def histogram(scores, bins: int) -> list[tuple[float, float, int]]:
    """Equal-width bins over [0, 100]; the last bin is closed on the right."""
    if bins < 1:
        raise EvalError("bins must be >= 1")
    s = np.asarray(scores, dtype=np.float64).ravel()
    edges = np.linspace(0.0, 100.0, bins + 1)
    idx = np.clip(np.floor(s / 100.0 * bins).astype(np.int64), 0, bins - 1)
    counts = np.bincount(idx, minlength=bins) if s.size else np.zeros(bins, dtype=np.int64)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]


def write_histogram(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lower", "bin_upper", "count"])
        for lo, hi, c in rows:
            w.writerow([repr(lo), repr(hi), c])


def read_histogram(path) -> list[tuple[float, float, int]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["bin_lower", "bin_upper", "count"]:
            raise EvalError(f"{path}: unexpected histogram header {header}")
        rows = [(float(a), float(b), int(c)) for a, b, c in reader]
    if any(not (math.isfinite(a) and math.isfinite(b)) or c < 0 for a, b, c in rows):
        raise EvalError(f"{path}: malformed histogram row")
    return rows
