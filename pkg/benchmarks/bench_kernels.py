"""Time each hot kernel on its numba and numpy paths.

    python benchmarks/bench_kernels.py [--repeat 5] [--n 200000]

Numba timings exclude the first (compiling) call.  The end-to-end section
runs the calibrate + boosting stages once per backend in a fresh interpreter
so that the METRIQ_NO_NUMBA switch is honoured at import time.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import textwrap
import time

import numpy as np

from metriq import kernels


def _inputs(n: int, rng: np.random.Generator) -> dict:
    d = 8
    m = min(n, 20_000)
    X = rng.uniform(0, 100, (m, d))
    r = rng.normal(size=m)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="mergesort").T)
    member = np.ones(m, dtype=bool)
    scores = np.round(rng.uniform(0, 1, n), 3)
    labels = rng.integers(0, 2, n).astype(bool)
    return {
        "erf_array": (rng.uniform(-6, 6, n),),
        "agauss_nll": (np.abs(rng.normal(50, 10, n)), 50.0, 8.0, 12.0),
        "best_split": (X, r, order, member, 5),
        "auc": (scores, labels),
    }


def _best_of(fn, args, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(n: int, repeat: int) -> list[tuple[str, float, float | None]]:
    args = _inputs(n, np.random.default_rng(0))
    rows = []
    for name, a in args.items():
        t_np = _best_of(kernels.NUMPY_KERNELS[name], a, repeat)
        t_nb = None
        if kernels.HAVE_NUMBA:
            fn = kernels.NUMBA_KERNELS[name]
            fn(*a)  # compile
            t_nb = _best_of(fn, a, repeat)
        rows.append((name, t_np, t_nb))
    return rows


END_TO_END = textwrap.dedent("""
    import time
    from metriq import kernels, pipeline
    from metriq.calibrate import fit_all
    from metriq.synthgen import SynthSpec, gen_corpus
    recs = gen_corpus(SynthSpec(n_repos={n}, seed=1))
    vecs = pipeline.vectors_for(recs, "Java")
    fit_all(vecs[:60], language="Java")  # warm-up (compiles numba kernels)
    t0 = time.perf_counter()
    params = fit_all(vecs, language="Java")
    t1 = time.perf_counter()
    pipeline.train_weights(recs, params, seed=1)
    t2 = time.perf_counter()
    print(kernels.backend(), t1 - t0, t2 - t1)
""")


def bench_end_to_end(n: int) -> list[str]:
    lines = []
    envs = [{"METRIQ_NO_NUMBA": "1"}]
    if kernels.HAVE_NUMBA:
        envs.append({"METRIQ_NO_NUMBA": "0"})
    for extra in envs:
        env = dict(os.environ, **extra)
        out = subprocess.run([sys.executable, "-c", END_TO_END.format(n=n)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        lines.append(f"{out[0]:<8} fit_all {float(out[1]):8.3f}s   train_weights {float(out[2]):8.3f}s")
    return lines


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000, help="elements per kernel call")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--repos", type=int, default=2000, help="synthetic repositories for the end-to-end run")
    args = ap.parse_args(argv)

    print(f"kernels (n={args.n}, best of {args.repeat})")
    print(f"{'kernel':<12}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for name, t_np, t_nb in bench_kernels(args.n, args.repeat):
        nb = f"{t_nb * 1e3:10.2f}ms" if t_nb is not None else f"{'n/a':>12}"
        sp = f"{t_np / t_nb:9.1f}x" if t_nb else f"{'':>10}"
        print(f"{name:<12}{t_np * 1e3:10.2f}ms{nb}{sp}")
    print()
    print(f"end to end ({args.repos} synthetic Java repositories)")
    for line in bench_end_to_end(args.repos):
        print(line)


if __name__ == "__main__":
    main()
