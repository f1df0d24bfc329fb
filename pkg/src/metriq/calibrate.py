"""Per-(language, metric) distribution fitting."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Mapping, Sequence

import numpy as np

from metriq import kernels
from metriq.corpus import REGISTRY, MetricDef, MetricVector, available_metrics
from metriq.distmodel import (
    SIGMA_FLOOR,
    AGaussParams,
    ExpParams,
    FittedParams,
    params_from_dict,
)

log = logging.getLogger(__name__)

MIN_SAMPLES = 30
LAMBDA_CAP = 1e9
MAX_ITERS = 2000
XTOL_REL = 1e-8


class InsufficientDataError(ValueError):
    pass


class DegenerateDataError(ValueError):
    pass


@dataclass(frozen=True)
class FitDiagnostics:
    n: int
    nll: float | None
    converged: bool


@dataclass
class ParamSet:
    language: str
    params: dict[str, FittedParams] = field(default_factory=dict)
    diagnostics: dict[str, FitDiagnostics] = field(default_factory=dict)
    # metric -> {"n": int, "reason": str} for metrics that could not be fitted
    omitted: dict[str, dict] = field(default_factory=dict)

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __getitem__(self, name: str) -> FittedParams:
        return self.params[name]

    def to_dict(self) -> dict:
        metrics = {}
        for name, p in self.params.items():
            diag = self.diagnostics.get(name, FitDiagnostics(0, None, True))
            metrics[name] = {
                "family": p.family,
                "params": p.as_dict(),
                "uninformative": p.uninformative,
                "n": diag.n,
                "nll": diag.nll,
                "converged": diag.converged,
            }
        out = {"language": self.language, "metrics": metrics}
        if self.omitted:
            out["omitted"] = {k: dict(v) for k, v in self.omitted.items()}
        return out

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ParamSet":
        ps = cls(language=doc["language"])
        for name, entry in doc["metrics"].items():
            ps.params[name] = params_from_dict(entry["family"], entry["params"], bool(entry.get("uninformative", False)))
            ps.diagnostics[name] = FitDiagnostics(
                int(entry.get("n") or 0), entry.get("nll"), bool(entry.get("converged", True))
            )
        ps.omitted = {k: dict(v) for k, v in doc.get("omitted", {}).items()}
        return ps


def dump_paramset(ps: ParamSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(ps.to_dict(), fh, indent=2, allow_nan=False)
        fh.write("\n")


def load_paramset(path, language: str | None = None) -> ParamSet:
    """Read a single ParamSet document, or pick ``language`` out of a
    multi-language bundle keyed by language name."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return _select(doc, language, str(path))


def _select(doc: Mapping, language: str | None, source: str) -> ParamSet:
    if "metrics" in doc:
        ps = ParamSet.from_dict(doc)
        if language is not None and ps.language != language:
            raise ValueError(f"{source}: holds {ps.language} parameters, not {language}")
        return ps
    if language is None:
        if len(doc) != 1:
            raise ValueError(f"{source}: bundle holds {sorted(doc)}; choose a language")
        (language,) = doc
    if language not in doc:
        raise ValueError(f"{source}: no parameters for language {language!r}")
    return ParamSet.from_dict(doc[language])


def reference_params(language: str) -> ParamSet:
    """Reference parameters transcribed from the published fitted tables."""
    with resources.files("metriq.fixtures").joinpath("params_reference.json").open(encoding="utf-8") as fh:
        doc = json.load(fh)
    return _select(doc, language, "params_reference.json")


# ---------------------------------------------------------------------------
# exponential
# ---------------------------------------------------------------------------


def _check_samples(samples, min_samples: int) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < min_samples:
        raise InsufficientDataError(f"need at least {min_samples} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    if np.any(x < 0):
        raise ValueError("samples must be >= 0")
    return x


def fit_exponential(samples, min_samples: int = MIN_SAMPLES) -> ExpParams:
    """Shifted-exponential MLE: threshold at the sample minimum, rate the
    reciprocal of the mean excess over it."""
    x = _check_samples(samples, min_samples)
    c = float(x.min())
    excess = math.fsum(x) / x.size - c
    if excess < 1.0 / LAMBDA_CAP:
        return ExpParams(c, 0.0, uninformative=True)
    return ExpParams(c, 1.0 / excess)


def exp_nll(samples, p: ExpParams) -> float:
    # likelihood on x >= c (the sample minimum sits exactly at c)
    x = np.asarray(samples, dtype=np.float64)
    if p.uninformative:
        return math.nan
    return -x.size * math.log(p.lam) + p.lam * math.fsum(x - p.c)


# ---------------------------------------------------------------------------
# asymmetric Gaussian
# ---------------------------------------------------------------------------


def agauss_nll(samples, p: AGaussParams) -> float:
    x = np.ascontiguousarray(samples, dtype=np.float64)
    return float(kernels.agauss_nll_sum(x, p.mu, p.sigma1, p.sigma2))


def histogram_mode(x: np.ndarray) -> float:
    """Center of the leftmost fullest bin, Freedman-Diaconis bin width."""
    lo, hi = float(x.min()), float(x.max())
    q75, q25 = np.percentile(x, [75, 25])
    width = 2.0 * (q75 - q25) * x.size ** (-1.0 / 3.0)
    if width <= 0:
        # heavy ties collapse the IQR; fall back to Sturges
        width = (hi - lo) / (math.ceil(math.log2(x.size)) + 1)
    n_bins = min(max(int(math.ceil((hi - lo) / width)), 1), 100_000)
    counts, edges = np.histogram(x, bins=n_bins, range=(lo, hi))
    i = int(np.argmax(counts))
    return 0.5 * (edges[i] + edges[i + 1])


def agauss_init(samples) -> AGaussParams:
    x = np.asarray(samples, dtype=np.float64)
    mu = histogram_mode(x)
    left = x[x < mu] - mu
    right = x[x >= mu] - mu
    s1 = math.sqrt(float(np.mean(left * left))) if left.size else SIGMA_FLOOR
    s2 = math.sqrt(float(np.mean(right * right))) if right.size else SIGMA_FLOOR
    return AGaussParams(max(mu, 0.0), max(s1, SIGMA_FLOOR), max(s2, SIGMA_FLOOR))


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool


def nelder_mead(
    func: Callable[[np.ndarray], float],
    x0,
    steps,
    max_iters: int = MAX_ITERS,
    xtol_rel: float = XTOL_REL,
) -> SimplexResult:
    """Minimise ``func`` with the standard simplex moves (reflection 1,
    expansion 2, contraction 1/2, shrink 1/2).

    Converged once the largest vertex distance from the best vertex (max
    norm) drops below ``xtol_rel`` times the best vertex's max norm.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    dim = x0.size
    simplex = np.empty((dim + 1, dim))
    simplex[0] = x0
    for i in range(dim):
        simplex[i + 1] = x0
        simplex[i + 1, i] += steps[i]
    fvals = np.array([func(v) for v in simplex])

    it = 0
    converged = False
    while True:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        scale = max(float(np.max(np.abs(simplex[0]))), 1e-300)
        diameter = float(np.max(np.abs(simplex[1:] - simplex[0])))
        if diameter <= xtol_rel * scale:
            converged = True
            break
        if it >= max_iters:
            break
        it += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + (centroid - worst)
        fr = func(xr)
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = func(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = func(xc)
            if fc <= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (worst - centroid)
            fc = func(xc)
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
                continue
        best = simplex[0].copy()
        for i in range(1, dim + 1):
            simplex[i] = best + 0.5 * (simplex[i] - best)
            fvals[i] = func(simplex[i])

    return SimplexResult(simplex[0].copy(), float(fvals[0]), it, converged)


def _clamp(v) -> tuple[float, float, float]:
    return max(float(v[0]), 0.0), max(float(v[1]), SIGMA_FLOOR), max(float(v[2]), SIGMA_FLOOR)


def fit_agauss_result(samples, min_samples: int = MIN_SAMPLES) -> tuple[AGaussParams, FitDiagnostics]:
    x = np.ascontiguousarray(_check_samples(samples, min_samples))
    if float(x.max()) == float(x.min()):
        raise DegenerateDataError("zero spread: all samples equal")
    init = agauss_init(x)
    nll = kernels.agauss_nll_sum

    def objective(v):
        return nll(x, *_clamp(v))

    spread = float(np.std(x))
    x0 = np.array([init.mu, init.sigma1, init.sigma2])
    steps = 0.05 * np.maximum(np.abs(x0), 0.1 * spread)
    res = nelder_mead(objective, x0, steps)
    best = AGaussParams(*_clamp(res.x))
    if not res.converged:
        log.warning("asymmetric Gaussian fit stopped after %d iterations without converging", res.iterations)
    return best, FitDiagnostics(int(x.size), res.fun, res.converged)


def fit_agauss(samples, min_samples: int = MIN_SAMPLES) -> AGaussParams:
    return fit_agauss_result(samples, min_samples)[0]


# ---------------------------------------------------------------------------
# whole language
# ---------------------------------------------------------------------------


def fit_all(
    corpus: Sequence[MetricVector],
    registry: Sequence[MetricDef] = REGISTRY,
    language: str | None = None,
    min_samples: int = MIN_SAMPLES,
) -> ParamSet:
    if not corpus:
        raise ValueError("cannot fit an empty corpus")
    language = language or corpus[0].language
    stray = {v.language for v in corpus} - {language}
    if stray:
        raise ValueError(f"corpus must hold only {language} vectors; found {sorted(stray)}")
    ps = ParamSet(language)
    for m in available_metrics(language, registry):
        samples = [v.values[m.name] for v in corpus if m.name in v.values]
        n = len(samples)
        if n < min_samples:
            ps.omitted[m.name] = {"n": n, "reason": f"fewer than {min_samples} samples"}
            log.info("%s/%s omitted: n=%d", language, m.name, n)
            continue
        if m.family == "exp":
            p = fit_exponential(samples, min_samples)
            nll_v = None if p.uninformative else exp_nll(samples, p)
            ps.params[m.name] = p
            ps.diagnostics[m.name] = FitDiagnostics(n, nll_v, True)
        else:
            try:
                p, diag = fit_agauss_result(samples, min_samples)
            except DegenerateDataError as exc:
                ps.omitted[m.name] = {"n": n, "reason": str(exc)}
                log.warning("%s/%s omitted: %s", language, m.name, exc)
                continue
            ps.params[m.name] = p
            ps.diagnostics[m.name] = diag
    return ps
