"""Stage wiring shared by the CLI: score -> label -> boost -> weights -> report."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from metriq import gbm
from metriq.calibrate import ParamSet
from metriq.corpus import REGISTRY, MetricVector, RepoRecord, available_metrics, normalize
from metriq.evalreport import EvalReport, UndefinedR2Error, auc_roc, confusion_metrics, histogram, r_squared
from metriq.scoring import ScoreProfile, WeightSet, derive_weights, overall_score, score_vector

log = logging.getLogger(__name__)

THRESHOLD = 0.5


def vectors_for(records: Sequence[RepoRecord], language: str) -> list[MetricVector]:
    out = [normalize(r, REGISTRY) for r in records if r.language == language]
    skipped = sum(1 for r in records if r.language != language)
    if skipped:
        log.info("skipping %d non-%s repositories", skipped, language)
    return out


def feature_names(params: ParamSet) -> list[str]:
    return [m.name for m in available_metrics(params.language, REGISTRY) if m.name in params]


@dataclass
class Scored:
    repo_ids: list[str]
    stars: list[int]
    scores: list[dict[str, float]]


def score_records(records: Sequence[RepoRecord], params: ParamSet) -> Scored:
    stars = {r.repo_id: r.stars for r in records}
    vectors = vectors_for(records, params.language)
    scores = [score_vector(v, params) for v in vectors]
    return Scored([v.repo_id for v in vectors], [stars[v.repo_id] for v in vectors], scores)


def labeled_split(scored: Scored, names: Sequence[str], q: float, seed: int):
    triples = list(zip(scored.repo_ids, scored.stars, scored.scores))
    examples = gbm.make_labels(triples, names, q)
    return gbm.split_train_val(examples, seed)


def train_weights(
    records: Sequence[RepoRecord],
    params: ParamSet,
    q: float = 0.2,
    seed: int = 0,
    hyper: gbm.GBMHyper = gbm.GBMHyper(),
) -> tuple[WeightSet, gbm.GBMModel]:
    scored = score_records(records, params)
    names = feature_names(params)
    train, _ = labeled_split(scored, names, q, seed)
    model = gbm.train_gbc(train, hyper, names, seed)
    imp = gbm.feature_importances(model)
    raw = {name: float(v) for name, v in zip(names, imp)}
    return derive_weights(raw, REGISTRY, params.language), model


def profiles(records: Sequence[RepoRecord], params: ParamSet, weights: WeightSet) -> list[ScoreProfile]:
    scored = score_records(records, params)
    return [overall_score(s, weights, rid) for rid, s in zip(scored.repo_ids, scored.scores)]


def evaluate(
    records: Sequence[RepoRecord],
    params: ParamSet,
    weights: WeightSet,
    seed: int = 0,
    q: float = 0.2,
    hyper: gbm.GBMHyper = gbm.GBMHyper(),
    bins: int = 20,
) -> tuple[EvalReport, list, list[ScoreProfile]]:
    scored = score_records(records, params)
    names = feature_names(params)
    train, val = labeled_split(scored, names, q, seed)
    clf = gbm.train_gbc(train, hyper, names, seed)
    Xv, yv = gbm.stack(val)
    probs = gbm.predict_proba(clf, Xv)
    cm = confusion_metrics(probs, yv, THRESHOLD)
    flags = list(cm["flags"])
    try:
        auc = auc_roc(probs, yv)
    except ValueError:
        auc = 0.5
        flags.append("auc_single_class")

    # regression on log-stars over every scored repository
    X = gbm.feature_matrix(scored.scores, names)
    target = np.log10(1.0 + np.asarray(scored.stars, dtype=np.float64))
    tr, va = gbm.split_indices(len(target), seed)
    r2 = None
    if len(va) >= 2:
        reg = gbm.train_gbr(X[tr], target[tr], hyper, names, seed)
        try:
            r2 = r_squared(gbm.predict(reg, X[va]), target[va])
        except UndefinedR2Error:
            flags.append("r2_undefined")
    else:
        flags.append("r2_undefined")

    profs = [overall_score(s, weights, rid) for rid, s in zip(scored.repo_ids, scored.scores)]
    hist = histogram([p.overall for p in profs], bins)
    report = EvalReport(
        language=params.language,
        accuracy=cm["accuracy"],
        precision=cm["precision"],
        recall=cm["recall"],
        f1=cm["f1"],
        auc_roc=auc,
        r2=r2 if r2 is None or math.isfinite(r2) else None,
        n_train=len(train),
        n_val=len(val),
        threshold=THRESHOLD,
        seed=seed,
        flags=flags,
    )
    return report, hist, profs
