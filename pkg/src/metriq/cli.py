"""metriq command-line interface.

Subcommands mirror the scoring workflow: ``ingest``, ``fit``,
``train-weights``, ``score``, ``evaluate`` and ``synth``.  Options come from
a JSON config (``--config`` or ``$METRIQ_CONFIG``) with flags taking
precedence.  Exit codes: 0 ok, 1 usage, 2 schema/validation, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from metriq import __version__, kernels
from metriq.calibrate import InsufficientDataError, dump_paramset, fit_all, load_paramset
from metriq.corpus import (
    DEFAULT_FILTER_PATTERNS,
    CorpusError,
    filter_non_engineering,
    ingest_canonical,
    ingest_ck,
    ingest_sonarqube,
    merge_class_metrics,
    write_canonical,
    write_ck,
)
from metriq.evalreport import EvalError, dump_report, load_report, read_histogram, write_histogram
from metriq.gbm import GBMError, GBMHyper, dump_model, load_model
from metriq.pipeline import evaluate, profiles, train_weights, vectors_for
from metriq.scoring import ScoringError, dump_weights, load_weights, read_profiles, write_profiles
from metriq.synthgen import gen_corpus, load_spec

log = logging.getLogger("metriq")

EXIT_OK, EXIT_USAGE, EXIT_SCHEMA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


@dataclass
class RunConfig:
    language: str | None = None
    corpus: str | None = None
    params: str | None = None
    weights: str | None = None
    output_dir: str | None = None
    filter_patterns: list[str] = field(default_factory=lambda: list(DEFAULT_FILTER_PATTERNS))
    q: float = 0.2
    seed: int = 0
    gbm: dict = field(default_factory=dict)
    bins: int = 20
    strict: bool = False

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(doc) - known)
        if unknown:
            raise CorpusError(f"{path}: unknown config keys {unknown}")
        return cls(**doc)

    def hyper(self) -> GBMHyper:
        return GBMHyper.from_dict(self.gbm)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, inputs, outputs, seed=None) -> None:
    doc = {
        "command": command,
        "version": __version__,
        "backend": kernels.backend(),
        "seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _manifest_for(output) -> Path:
    p = Path(output)
    return p.with_name(p.name + ".manifest.json")


def _need(value, flag):
    if value is None:
        raise UsageError(f"missing required option {flag}")
    return value


def _existing(path, flag) -> Path:
    path = Path(_need(path, flag))
    if not path.exists():
        raise UsageError(f"{flag}: no such file: {path}")
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_ingest(args, cfg: RunConfig) -> int:
    src = _existing(args.input, "--input")
    out = Path(_need(args.output, "--output"))
    if args.adapter == "ck":
        rows = ingest_ck(src)
        write_ck(rows, out)
        ingest_ck(out)
        write_manifest(_manifest_for(out), "ingest", [src], [out])
        log.info("wrote %d class rows to %s", len(rows), out)
        return EXIT_OK
    records = ingest_canonical(src) if args.adapter == "canonical" else ingest_sonarqube(src)
    inputs = [src]
    if args.classes:
        classes = _existing(args.classes, "--classes")
        records = merge_class_metrics(records, ingest_ck(classes))
        inputs.append(classes)
    if args.no_filter:
        kept, dropped = records, []
    else:
        patterns = args.filter_pattern or cfg.filter_patterns
        kept, dropped = filter_non_engineering(records, patterns)
    for rec in dropped:
        log.info("dropped non-engineering repository %s", rec.repo_id)
    write_canonical(kept, out)
    ingest_canonical(out)
    write_manifest(_manifest_for(out), "ingest", inputs, [out])
    log.info("kept %d, dropped %d repositories", len(kept), len(dropped))
    return EXIT_OK


def cmd_fit(args, cfg: RunConfig) -> int:
    corpus = _existing(args.corpus or cfg.corpus, "--corpus")
    language = _need(args.language or cfg.language, "--language")
    out = Path(_need(args.output, "--output"))
    vectors = vectors_for(ingest_canonical(corpus), language)
    if not vectors:
        raise CorpusError(f"{corpus}: no {language} repositories")
    ps = fit_all(vectors, language=language, min_samples=args.min_samples)
    bad = [name for name, d in ps.diagnostics.items() if not d.converged]
    if bad and (args.strict or cfg.strict):
        raise NumericalFailure(f"fits did not converge for: {', '.join(bad)}")
    dump_paramset(ps, out)
    load_paramset(out)
    write_manifest(_manifest_for(out), "fit", [corpus], [out])
    return EXIT_OK


def cmd_train_weights(args, cfg: RunConfig) -> int:
    corpus = _existing(args.corpus or cfg.corpus, "--corpus")
    params_path = _existing(args.params or cfg.params, "--params")
    out_w = Path(_need(args.output_weights, "--output-weights"))
    out_m = Path(_need(args.output_model, "--output-model"))
    seed = args.seed if args.seed is not None else cfg.seed
    q = args.q if args.q is not None else cfg.q
    params = load_paramset(params_path, args.language or cfg.language)
    weights, model = train_weights(ingest_canonical(corpus), params, q, seed, _hyper(args, cfg))
    dump_weights(weights, out_w)
    dump_model(model, out_m)
    load_weights(out_w)
    load_model(out_m)
    for out in (out_w, out_m):
        write_manifest(_manifest_for(out), "train-weights", [corpus, params_path], [out_w, out_m], seed)
    return EXIT_OK


def cmd_score(args, cfg: RunConfig) -> int:
    corpus = _existing(args.corpus or cfg.corpus, "--corpus")
    params_path = _existing(args.params or cfg.params, "--params")
    weights_path = _existing(args.weights or cfg.weights, "--weights")
    out = Path(_need(args.output, "--output"))
    weights = load_weights(weights_path)
    params = load_paramset(params_path, weights.language)
    profs = profiles(ingest_canonical(corpus), params, weights)
    write_profiles(profs, out)
    read_profiles(out)
    write_manifest(_manifest_for(out), "score", [corpus, params_path, weights_path], [out])
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    corpus = _existing(args.corpus or cfg.corpus, "--corpus")
    params_path = _existing(args.params or cfg.params, "--params")
    weights_path = _existing(args.weights or cfg.weights, "--weights")
    outdir = Path(_need(args.outdir or cfg.output_dir, "--outdir"))
    seed = args.seed if args.seed is not None else cfg.seed
    bins = args.bins if args.bins is not None else cfg.bins
    q = args.q if args.q is not None else cfg.q
    weights = load_weights(weights_path)
    params = load_paramset(params_path, weights.language)
    report, hist, _ = evaluate(ingest_canonical(corpus), params, weights, seed, q, _hyper(args, cfg), bins)
    outdir.mkdir(parents=True, exist_ok=True)
    report_path = outdir / "report.json"
    hist_path = outdir / f"hist_{params.language}.csv"
    dump_report(report, report_path)
    write_histogram(hist, hist_path)
    load_report(report_path)
    read_histogram(hist_path)
    write_manifest(outdir / "manifest.json", "evaluate", [corpus, params_path, weights_path],
                   [report_path, hist_path], seed)
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    spec_path = _existing(args.spec, "--spec")
    out = Path(_need(args.output, "--output"))
    spec = load_spec(spec_path)
    if args.seed is not None:
        spec.seed = args.seed
    if args.n_repos is not None:
        spec.n_repos = args.n_repos
    records = gen_corpus(spec)
    write_canonical(records, out)
    ingest_canonical(out)
    write_manifest(_manifest_for(out), "synth", [spec_path], [out], spec.seed)
    return EXIT_OK


def _hyper(args, cfg: RunConfig) -> GBMHyper:
    doc = dict(cfg.gbm)
    for key, attr in (("T", "trees"), ("eta", "eta"), ("max_depth", "max_depth"), ("min_leaf", "min_leaf")):
        v = getattr(args, attr, None)
        if v is not None:
            doc[key] = v
    return GBMHyper.from_dict(doc)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_gbm_flags(p):
    p.add_argument("--trees", type=int, help="boosting iterations T (default 100)")
    p.add_argument("--eta", type=float, help="learning rate (default 0.1)")
    p.add_argument("--max-depth", type=int, help="tree depth (default 3)")
    p.add_argument("--min-leaf", type=int, help="minimum samples per leaf (default 5)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metriq", description="Distribution-based code quality scoring.")
    parser.add_argument("--config", help="JSON run config (default: $METRIQ_CONFIG)")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"metriq {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="read scanner output into a canonical corpus CSV")
    p.add_argument("--adapter", choices=("canonical", "sonarqube", "ck"), default="canonical")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--classes", help="per-class CK CSV to aggregate into the repo rows")
    p.add_argument("--filter-pattern", action="append", help="override filter patterns (repeatable)")
    p.add_argument("--no-filter", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit per-metric distributions")
    p.add_argument("--corpus")
    p.add_argument("--language")
    p.add_argument("--output")
    p.add_argument("--min-samples", type=int, default=30)
    p.add_argument("--strict", action="store_true", help="fail (exit 3) on non-converged fits")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("train-weights", help="learn metric weights from star quantiles")
    p.add_argument("--corpus")
    p.add_argument("--params")
    p.add_argument("--language")
    p.add_argument("--q", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-weights")
    p.add_argument("--output-model")
    _add_gbm_flags(p)
    p.set_defaults(func=cmd_train_weights)

    p = sub.add_parser("score", help="score every repository")
    p.add_argument("--corpus")
    p.add_argument("--params")
    p.add_argument("--weights")
    p.add_argument("--output")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="classification/regression report and score histogram")
    p.add_argument("--corpus")
    p.add_argument("--params")
    p.add_argument("--weights")
    p.add_argument("--seed", type=int)
    p.add_argument("--q", type=float)
    p.add_argument("--outdir")
    p.add_argument("--bins", type=int)
    _add_gbm_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec")
    p.add_argument("--output")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-repos", type=int)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        cfg_path = args.config or os.environ.get("METRIQ_CONFIG")
        if cfg_path and not Path(cfg_path).exists():
            raise UsageError(f"config file not found: {cfg_path}")
        cfg = RunConfig.load(cfg_path) if cfg_path else RunConfig()
        if not 0 < cfg.q <= 0.5 or (getattr(args, "q", None) is not None and not 0 < args.q <= 0.5):
            raise UsageError("q must be in (0, 0.5]")
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"metriq: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"metriq: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"metriq: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CorpusError, ScoringError, GBMError, EvalError, InsufficientDataError,
            ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"metriq: validation error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
