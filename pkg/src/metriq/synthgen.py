"""Seeded samplers and a synthetic corpus with a controllable star signal.

Streams come from :class:`metriq.rng.SplitMix64`.  An exponential draw
consumes one uniform; an asymmetric-Gaussian draw consumes three
(side, then two for Box-Muller) and is redrawn whole when it lands below 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from metriq.calibrate import ParamSet, load_paramset, reference_params
from metriq.corpus import DENOMINATORS, REGISTRY, RepoRecord, available_metrics
from metriq.distmodel import AGaussParams, ExpParams, UninformativeError, score
from metriq.rng import SplitMix64, derive_seed

TWO_PI = 2.0 * math.pi


def sample_exponential(p: ExpParams, n: int, seed: int) -> np.ndarray:
    if p.uninformative:
        raise UninformativeError("cannot sample from uninformative exponential parameters")
    u = SplitMix64(seed).uniforms(n)
    return p.c - np.log1p(-u) / p.lam


def _agauss_from_uniforms(p: AGaussParams, u: np.ndarray) -> np.ndarray:
    side, u1, u2 = u[0::3], u[1::3], u[2::3]
    mag = np.abs(np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2))
    left = side < p.sigma1 / (p.sigma1 + p.sigma2)
    return np.where(left, p.mu - p.sigma1 * mag, p.mu + p.sigma2 * mag)


def sample_agauss(p: AGaussParams, n: int, seed: int) -> np.ndarray:
    rng = SplitMix64(seed)
    out = np.empty(n)
    filled = 0
    while filled < n:
        batch = max(n - filled, 64)
        draws = _agauss_from_uniforms(p, rng.uniforms(3 * batch))
        draws = draws[draws >= 0.0]
        take = min(draws.size, n - filled)
        out[filled:filled + take] = draws[:take]
        filled += take
    return out


def _draw_one(rng: SplitMix64, p) -> float:
    """One draw from ``p`` on a shared stream; same layout as the batch samplers."""
    if p.family == "exp":
        if p.uninformative:
            return p.c
        return p.c - math.log1p(-rng.uniform()) / p.lam
    while True:
        x = float(_agauss_from_uniforms(p, np.array([rng.uniform(), rng.uniform(), rng.uniform()]))[0])
        if x >= 0.0:
            return x


@dataclass
class StarModel:
    base: float = 100.0
    beta: float = 8.0
    noise_sigma: float = 0.1


@dataclass
class SynthSpec:
    language: str = "Java"
    n_repos: int = 200
    seed: int = 0
    stars: StarModel = field(default_factory=StarModel)
    params: ParamSet | None = None  # None: the bundled published parameters

    def __post_init__(self):
        if self.n_repos < 1:
            raise ValueError("n_repos must be >= 1")
        if self.stars.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    def generator_params(self) -> ParamSet:
        return self.params if self.params is not None else reference_params(self.language)

    def to_dict(self) -> dict:
        out = {
            "language": self.language,
            "n_repos": self.n_repos,
            "seed": self.seed,
            "stars": {"base": self.stars.base, "beta": self.stars.beta, "noise_sigma": self.stars.noise_sigma},
        }
        if self.params is not None:
            out["params"] = self.params.to_dict()
        return out

    @classmethod
    def from_dict(cls, doc: Mapping, base_dir=None) -> "SynthSpec":
        params = doc.get("params")
        if isinstance(params, str):
            path = Path(params)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            params = load_paramset(path, doc.get("language"))
        elif isinstance(params, Mapping):
            params = ParamSet.from_dict(params)
        stars = StarModel(**doc.get("stars", {}))
        return cls(
            language=doc.get("language", "Java"),
            n_repos=int(doc.get("n_repos", 200)),
            seed=int(doc.get("seed", 0)),
            stars=stars,
            params=params,
        )


def load_spec(path) -> SynthSpec:
    with open(path, encoding="utf-8") as fh:
        return SynthSpec.from_dict(json.load(fh), base_dir=Path(path).parent)


def gen_corpus(spec: SynthSpec) -> list[RepoRecord]:
    """Each repo gets its own sub-stream ``derive_seed(seed, index)``: metric
    draws in registry order, then one normal for the star noise."""
    params = spec.generator_params()
    metrics = [m for m in available_metrics(spec.language, REGISTRY) if m.name in params]
    sm = spec.stars
    records = []
    for i in range(spec.n_repos):
        rng = SplitMix64(derive_seed(spec.seed, i))
        raw = {}
        scores = []
        for m in metrics:
            p = params[m.name]
            x = _draw_one(rng, p)
            raw[m.prenormalized_column] = x
            scores.append(score(x, p))
        latent = math.fsum(scores) / len(scores) if scores else 0.0
        noise = rng.normal() * sm.noise_sigma
        stars = int(math.floor(sm.base * math.exp(sm.beta * latent / 100.0 + noise) + 0.5))
        denominators = dict.fromkeys(DENOMINATORS, 1)
        denominators["comment_lines"] = 0
        records.append(RepoRecord(
            repo_id=f"synth-{spec.language.lower()}-{i:05d}",
            language=spec.language,
            stars=stars,
            raw=raw,
            denominators=denominators,
            name_text=f"synthetic {spec.language} repository {i}",
            prenormalized=True,
        ))
    return records
