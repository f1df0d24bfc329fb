"""Hot numeric kernels.

Every kernel exists twice: a loop form compiled with numba ``@njit`` and a
vectorised pure-numpy form.  The public names at the bottom of the module
dispatch to one or the other; set ``METRIQ_NO_NUMBA=1`` (or run without numba
installed) to force the numpy path.  Both paths agree to floating-point
round-off; each one is deterministic on its own.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def _flag_set(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not _flag_set("METRIQ_NO_NUMBA")

TWO_OVER_SQRT_PI = 1.1283791670955126
INV_SQRT_PI = 0.5641895835477563
HALF_LOG_2PI = 0.9189385332046728
SERIES_CUTOFF = 3.0
CF_TERMS = 80


# ---------------------------------------------------------------------------
# erf
# ---------------------------------------------------------------------------


def erf_kernel(x):
    """erf for one finite float; Maclaurin series inside |x| <= 3, continued
    fraction for erfc outside."""
    if x == 0.0:
        return 0.0
    ax = abs(x)
    if ax <= SERIES_CUTOFF:
        x2 = ax * ax
        term = ax
        total = ax
        n = 0
        while True:
            n += 1
            term *= -x2 / n
            contrib = term / (2 * n + 1)
            total += contrib
            if abs(contrib) <= 1e-17 * total:
                break
        r = TWO_OVER_SQRT_PI * total
    else:
        # erfc(x) = exp(-x^2)/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        f = ax
        for k in range(CF_TERMS, 0, -1):
            f = ax + 0.5 * k / f
        r = 1.0 - math.exp(-ax * ax) * INV_SQRT_PI / f
    if r > 1.0:
        r = 1.0
    return r if x > 0.0 else -r


_erf_kernel_nb = njit(cache=True)(erf_kernel)


@njit(cache=True)
def _erf_array_numba(x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = _erf_kernel_nb(x[i])
    return out


def _erf_array_numpy(x):
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    out = np.empty_like(ax)

    inner = ax <= SERIES_CUTOFF
    if inner.any():
        a = ax[inner]
        x2 = a * a
        term = a.copy()
        total = a.copy()
        n = 0
        while True:
            n += 1
            term *= -x2 / n
            contrib = term / (2 * n + 1)
            total += contrib
            if np.all(np.abs(contrib) <= 1e-17 * total):
                break
        out[inner] = TWO_OVER_SQRT_PI * total

    outer = ~inner
    if outer.any():
        a = ax[outer]
        f = a.copy()
        for k in range(CF_TERMS, 0, -1):
            f = a + 0.5 * k / f
        out[outer] = 1.0 - np.exp(-a * a) * INV_SQRT_PI / f

    np.minimum(out, 1.0, out=out)
    out[ax == 0.0] = 0.0
    return np.where(x < 0.0, -out, out)


# ---------------------------------------------------------------------------
# asymmetric-Gaussian negative log-likelihood
# ---------------------------------------------------------------------------


@njit(cache=True)
def _agauss_nll_numba(x, mu, s1, s2):
    n = x.shape[0]
    if n == 0:
        return 0.0
    inv1 = 1.0 / (s1 * s1)
    inv2 = 1.0 / (s2 * s2)
    quad = 0.0
    for i in range(n):
        d = x[i] - mu
        if d < 0.0:
            quad += d * d * inv1
        else:
            quad += d * d * inv2
    log_norm = math.log(0.5 * (s1 + s2)) + HALF_LOG_2PI
    return n * log_norm + 0.5 * quad


def _agauss_nll_numpy(x, mu, s1, s2):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        return 0.0
    d = x - mu
    w = np.where(d < 0.0, 1.0 / (s1 * s1), 1.0 / (s2 * s2))
    quad = float(np.sum(d * d * w))
    log_norm = math.log(0.5 * (s1 + s2)) + HALF_LOG_2PI
    return n * log_norm + 0.5 * quad


# ---------------------------------------------------------------------------
# exact greedy split search
# ---------------------------------------------------------------------------
#
# X: (n, d) features; r: (n,) targets; order: (d, n) per-feature argsort of X
# over all rows; member: (n,) bool mask of rows in the node.  Returns
# (feature, threshold, gain); feature == -1 when no admissible split exists.
# Candidate thresholds are midpoints of consecutive distinct values; ties in
# gain go to the lower feature index, then the lower threshold.


@njit(cache=True)
def _best_split_numba(X, r, order, member, min_leaf):
    n_rows = X.shape[0]
    d = X.shape[1]
    total = 0.0
    m = 0
    for i in range(n_rows):
        if member[i]:
            total += r[i]
            m += 1
    best_f = -1
    best_t = 0.0
    best_g = 0.0
    if m < 2 * min_leaf:
        return best_f, best_t, best_g
    xs = np.empty(m)
    rs = np.empty(m)
    for f in range(d):
        k = 0
        for j in range(n_rows):
            row = order[f, j]
            if member[row]:
                xs[k] = X[row, f]
                rs[k] = r[row]
                k += 1
        left = 0.0
        for i in range(m - 1):
            left += rs[i]
            n_left = i + 1
            n_right = m - n_left
            if n_left < min_leaf:
                continue
            if n_right < min_leaf:
                break
            if xs[i] == xs[i + 1]:
                continue
            diff = left / n_left - (total - left) / n_right
            gain = n_left * n_right / m * diff * diff
            if gain > best_g:
                best_g = gain
                best_f = f
                t = 0.5 * (xs[i] + xs[i + 1])
                if t >= xs[i + 1]:
                    t = xs[i]
                best_t = t
    return best_f, best_t, best_g


def _best_split_numpy(X, r, order, member, min_leaf):
    m = int(member.sum())
    if m < 2 * min_leaf:
        return -1, 0.0, 0.0
    total = float(np.cumsum(r[member])[-1])
    best_f, best_t, best_g = -1, 0.0, 0.0
    n_left = np.arange(1, m, dtype=np.float64)
    n_right = m - n_left
    for f in range(X.shape[1]):
        rows = order[f][member[order[f]]]
        xs = X[rows, f]
        left = np.cumsum(r[rows])[:-1]
        ok = (n_left >= min_leaf) & (n_right >= min_leaf) & (xs[:-1] != xs[1:])
        if not ok.any():
            continue
        diff = left / n_left - (total - left) / n_right
        gain = np.where(ok, n_left * n_right / m * diff * diff, -1.0)
        i = int(np.argmax(gain))
        if gain[i] > best_g:
            best_g = float(gain[i])
            best_f = f
            t = 0.5 * (xs[i] + xs[i + 1])
            best_t = float(xs[i] if t >= xs[i + 1] else t)
    return best_f, best_t, best_g


# ---------------------------------------------------------------------------
# Mann-Whitney AUC
# ---------------------------------------------------------------------------


@njit(cache=True)
def _auc_numba(scores, labels):
    n = scores.shape[0]
    idx = np.argsort(scores)  # tie groups share a midrank, so stability is irrelevant
    rank_pos = 0.0
    n_pos = 0
    i = 0
    while i < n:
        j = i
        while j + 1 < n and scores[idx[j + 1]] == scores[idx[i]]:
            j += 1
        mid = 0.5 * (i + j) + 1.0
        for k in range(i, j + 1):
            if labels[idx[k]]:
                rank_pos += mid
                n_pos += 1
        i = j + 1
    n_neg = n - n_pos
    u = rank_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def _auc_numpy(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    midrank = upper - 0.5 * (counts - 1)
    ranks = midrank[inverse]
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    u = float(np.sum(ranks[labels])) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

NUMPY_KERNELS = {
    "erf_array": _erf_array_numpy,
    "agauss_nll": _agauss_nll_numpy,
    "best_split": _best_split_numpy,
    "auc": _auc_numpy,
}

NUMBA_KERNELS = (
    {
        "erf_array": _erf_array_numba,
        "agauss_nll": _agauss_nll_numba,
        "best_split": _best_split_numba,
        "auc": _auc_numba,
    }
    if HAVE_NUMBA
    else {}
)

_active = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS

erf_array = _active["erf_array"]
agauss_nll_sum = _active["agauss_nll"]
best_split = _active["best_split"]
auc_mann_whitney = _active["auc"]


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
