"""Per-metric scores, importance-derived weights and weighted aggregation."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from metriq.calibrate import ParamSet
from metriq.corpus import DIMENSIONS, REGISTRY, MetricDef, MetricVector, available_metrics
from metriq.distmodel import score as metric_score

log = logging.getLogger(__name__)

WEIGHT_TOL = 1e-6


class ScoringError(ValueError):
    pass


@dataclass
class WeightSet:
    language: str
    raw: dict[str, float]
    global_: dict[str, float]
    per_dimension: dict[str, dict[str, float]]

    def to_dict(self) -> dict:
        return {
            "language": self.language,
            "raw": dict(self.raw),
            "global": dict(self.global_),
            "per_dimension": {d: dict(w) for d, w in self.per_dimension.items()},
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "WeightSet":
        return cls(
            language=doc["language"],
            raw={k: float(v) for k, v in doc["raw"].items()},
            global_={k: float(v) for k, v in doc["global"].items()},
            per_dimension={d: {k: float(v) for k, v in w.items()} for d, w in doc["per_dimension"].items()},
        )

    @property
    def metrics(self) -> list[str]:
        return list(self.global_)


def dump_weights(w: WeightSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(w.to_dict(), fh, indent=2, allow_nan=False)
        fh.write("\n")


def load_weights(path) -> WeightSet:
    with open(path, encoding="utf-8") as fh:
        return WeightSet.from_dict(json.load(fh))


@dataclass
class ScoreProfile:
    repo_id: str
    per_metric: dict[str, float]
    per_dimension: dict[str, float | None]
    overall: float
    coverage: float
    language: str = ""
    extra: dict = field(default_factory=dict)


def score_vector(v: MetricVector, params: ParamSet) -> dict[str, float]:
    if params.language != v.language:
        raise ScoringError(f"{v.repo_id}: {v.language} vector scored with {params.language} parameters")
    out = {}
    for name, x in v.values.items():
        if name not in params:
            raise ScoringError(f"{v.repo_id}: no fitted parameters for metric {name!r}")
        out[name] = float(metric_score(x, params[name]))
    return out


def _renormalized(weights: Mapping[str, float]) -> dict[str, float]:
    total = math.fsum(weights.values())
    return {k: w / total for k, w in weights.items()}


def derive_weights(
    raw_importances: Mapping[str, float],
    registry: Sequence[MetricDef] = REGISTRY,
    language: str = "Java",
) -> WeightSet:
    """Global weights are the importances rescaled to sum 1; each dimension
    also gets its members' importances rescaled to sum 1 within it."""
    metrics = [m for m in available_metrics(language, registry) if m.name in raw_importances]
    if not metrics:
        raise ScoringError("no importances for any available metric")
    raw = {m.name: float(raw_importances[m.name]) for m in metrics}
    if any(v < 0 or not math.isfinite(v) for v in raw.values()):
        raise ScoringError("importances must be finite and >= 0")
    total = math.fsum(raw.values())
    if abs(total - 1.0) > WEIGHT_TOL:
        raise ScoringError(f"importances must sum to 1 (+/- {WEIGHT_TOL}), got {total!r}")
    global_ = _renormalized(raw)
    per_dimension = {}
    for dim in DIMENSIONS:
        members = [m.name for m in metrics if m.dimension == dim]
        if not members:
            continue
        sub = {name: raw[name] for name in members}
        if math.fsum(sub.values()) <= 0:
            log.warning("%s: %s has zero total importance; using uniform weights", language, dim)
            per_dimension[dim] = {name: 1.0 / len(members) for name in members}
        else:
            per_dimension[dim] = _renormalized(sub)
    return WeightSet(language, raw, global_, per_dimension)


def weighted_mean(scores: Mapping[str, float], weights: Mapping[str, float]) -> float:
    """Weights renormalised over the metrics present in ``scores``; uniform if
    those weights are all zero."""
    present = [k for k in scores if k in weights]
    if not present:
        raise ScoringError("no scored metric carries a weight")
    total = math.fsum(weights[k] for k in present)
    if total <= 0:
        return math.fsum(scores[k] for k in present) / len(present)
    value = math.fsum(weights[k] * scores[k] for k in present) / total
    lo = min(scores[k] for k in present)
    hi = max(scores[k] for k in present)
    return min(max(value, lo), hi)


def overall_score(
    scores: Mapping[str, float],
    w: WeightSet,
    repo_id: str = "",
    registry: Sequence[MetricDef] = REGISTRY,
) -> ScoreProfile:
    if not scores:
        raise ScoringError("cannot aggregate an empty score set")
    unknown = sorted(set(scores) - set(w.global_))
    if unknown:
        raise ScoringError(f"scores for metrics without weights: {', '.join(unknown)}")
    overall = weighted_mean(scores, w.global_)
    per_dim: dict[str, float | None] = {}
    for dim in DIMENSIONS:
        dw = w.per_dimension.get(dim, {})
        sub = {k: scores[k] for k in dw if k in scores}
        per_dim[dim] = weighted_mean(sub, dw) if sub else None
    n_avail = len(available_metrics(w.language, registry))
    coverage = len(scores) / n_avail if n_avail else 0.0
    return ScoreProfile(repo_id, dict(scores), per_dim, overall, coverage, w.language)


def score_corpus(vectors: Sequence[MetricVector], params: ParamSet, w: WeightSet) -> list[ScoreProfile]:
    return [overall_score(score_vector(v, params), w, v.repo_id) for v in vectors]


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def write_profiles(profiles: Sequence[ScoreProfile], path, registry: Sequence[MetricDef] = REGISTRY) -> None:
    names = [m.name for m in registry]
    header = ["repo_id", "overall"] + [d.lower() for d in DIMENSIONS] + names + ["coverage"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p in profiles:
            w.writerow(
                [p.repo_id, _fmt(p.overall)]
                + [_fmt(p.per_dimension.get(d)) for d in DIMENSIONS]
                + [_fmt(p.per_metric.get(n)) for n in names]
                + [_fmt(p.coverage)]
            )


def read_profiles(path, registry: Sequence[MetricDef] = REGISTRY) -> list[ScoreProfile]:
    names = [m.name for m in registry]
    expected = ["repo_id", "overall"] + [d.lower() for d in DIMENSIONS] + names + ["coverage"]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != expected:
            raise ScoringError(f"{path}: unexpected score header {reader.fieldnames}")
        out = []
        for row in reader:
            def val(k):
                return float(row[k]) if row[k] != "" else None

            overall = val("overall")
            if overall is None or not 0.0 <= overall <= 100.0:
                raise ScoringError(f"{path}: line {reader.line_num}: overall score out of range")
            out.append(ScoreProfile(
                repo_id=row["repo_id"],
                per_metric={n: val(n) for n in names if row[n] != ""},
                per_dimension={d: val(d.lower()) for d in DIMENSIONS},
                overall=overall,
                coverage=val("coverage"),
            ))
    return out
