"""Densities and 0-100 score functions for the two metric families.

Monotonic metrics use a shifted exponential (threshold ``c``, rate ``lam``);
non-monotonic metrics use an asymmetric Gaussian (peak ``mu`` with separate
left/right widths).  Every public function accepts a scalar or an array and
returns the same shape back (a plain ``float`` for scalar input).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from metriq import kernels

LAMBDA_FLOOR = 1e-9
SIGMA_FLOOR = 1e-9
SQRT2 = math.sqrt(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)


class DomainError(ValueError):
    """Input outside the domain of a density or score function."""


class UninformativeError(ValueError):
    """The parameters carry no information (rate below ``LAMBDA_FLOOR``)."""


@dataclass(frozen=True)
class ExpParams:
    c: float
    lam: float
    uninformative: bool = False
    family: str = field(default="exp", init=False)

    def __post_init__(self):
        if not (math.isfinite(self.c) and math.isfinite(self.lam)):
            raise ValueError(f"non-finite exponential parameters c={self.c}, lam={self.lam}")
        if self.c < 0 or self.lam < 0:
            raise ValueError(f"exponential parameters must be >= 0, got c={self.c}, lam={self.lam}")
        if self.lam < LAMBDA_FLOOR and not self.uninformative:
            object.__setattr__(self, "uninformative", True)

    def as_dict(self) -> dict:
        return {"c": self.c, "lambda": self.lam}


@dataclass(frozen=True)
class AGaussParams:
    """Asymmetric Gaussian; widths below ``SIGMA_FLOOR`` are clamped up to it."""

    mu: float
    sigma1: float
    sigma2: float
    uninformative: bool = False
    family: str = field(default="agauss", init=False)

    def __post_init__(self):
        for name in ("mu", "sigma1", "sigma2"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"asymmetric Gaussian {name} must be finite and >= 0, got {v}")
        object.__setattr__(self, "sigma1", max(float(self.sigma1), SIGMA_FLOOR))
        object.__setattr__(self, "sigma2", max(float(self.sigma2), SIGMA_FLOOR))

    @property
    def peak_density(self) -> float:
        return 2.0 / (SQRT_2PI * (self.sigma1 + self.sigma2))

    def as_dict(self) -> dict:
        return {"mu": self.mu, "sigma1": self.sigma1, "sigma2": self.sigma2}


FittedParams = Union[ExpParams, AGaussParams]


def params_from_dict(family: str, params: dict, uninformative: bool = False) -> FittedParams:
    if family == "exp":
        return ExpParams(float(params["c"]), float(params["lambda"]), uninformative=uninformative)
    if family == "agauss":
        return AGaussParams(
            float(params["mu"]), float(params["sigma1"]), float(params["sigma2"]),
            uninformative=uninformative,
        )
    raise ValueError(f"unknown distribution family {family!r}")


def _as_array(x, *, allow_negative: bool):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError("input must be finite")
    if not allow_negative and np.any(arr < 0):
        raise DomainError("input must be >= 0")
    return arr


def _ret(arr: np.ndarray):
    return float(arr) if arr.ndim == 0 else arr


def erf(x):
    """Error function, absolute error below 1e-12 for every finite input."""
    arr = _as_array(x, allow_negative=True)
    if arr.ndim == 0:
        return kernels.erf_kernel(float(arr))
    return kernels.erf_array(arr.ravel()).reshape(arr.shape)


def exp_pdf(x, p: ExpParams):
    if p.uninformative:
        raise UninformativeError("density undefined for uninformative exponential parameters")
    arr = _as_array(x, allow_negative=False)
    out = np.where(arr > p.c, p.lam * np.exp(-p.lam * (arr - p.c)), 0.0)
    return _ret(out)


def exp_score(x, p: ExpParams):
    """100 up to the threshold, then exponential decay at rate ``lam``."""
    arr = _as_array(x, allow_negative=False)
    if p.uninformative:
        return _ret(np.full(arr.shape, 100.0))
    out = np.where(arr > p.c, 100.0 * np.exp(-p.lam * np.maximum(arr - p.c, 0.0)), 100.0)
    return _ret(out)


def agauss_pdf(x, p: AGaussParams):
    # x >= 0 in practice; negative x is still evaluated on the left branch
    arr = _as_array(x, allow_negative=True)
    sigma = np.where(arr < p.mu, p.sigma1, p.sigma2)
    with np.errstate(over="ignore"):
        z = (arr - p.mu) / sigma
        return _ret(p.peak_density * np.exp(-0.5 * z * z))


def agauss_score(x, p: AGaussParams):
    """100 * (1 - erf(|x - mu| / (sigma_side * sqrt 2))), sigma_side picked by
    which side of the peak ``x`` falls on."""
    arr = _as_array(x, allow_negative=False)
    sigma = np.where(arr < p.mu, p.sigma1, p.sigma2)
    with np.errstate(over="ignore"):
        # erf is exactly 1 in double precision long before z = 40
        z = np.minimum(np.abs(arr - p.mu) / (sigma * SQRT2), 40.0)
    if arr.ndim == 0:
        return 100.0 * (1.0 - kernels.erf_kernel(float(z)))
    e = kernels.erf_array(z.ravel()).reshape(z.shape)
    return 100.0 * (1.0 - e)


def score(x, p: FittedParams):
    if p.family == "exp":
        return exp_score(x, p)
    return agauss_score(x, p)
