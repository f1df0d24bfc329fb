"""Repository records, the metric registry, CSV ingestion and normalization."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence

log = logging.getLogger(__name__)

JAVA, PYTHON, JAVASCRIPT, TYPESCRIPT, OTHER = "Java", "Python", "JavaScript", "TypeScript", "other"
LANGUAGES = (JAVA, PYTHON, JAVASCRIPT, TYPESCRIPT, OTHER)

MAINTAINABILITY, RELIABILITY, FUNCTIONALITY = "Maintainability", "Reliability", "Functionality"
DIMENSIONS = (MAINTAINABILITY, RELIABILITY, FUNCTIONALITY)

# normalizers
NCLOC = "NCLOC"
NCLOC_PLUS_COMMENTS = "NCLOC_PLUS_COMMENTS"
LOC = "LOC"
FILES = "FILES"
STATEMENTS = "STATEMENTS"
CLASS_MEAN = "CLASS_MEAN"
NONE = "NONE"

DENOMINATORS = ("ncloc", "loc", "comment_lines", "files", "statements")
IDENTITY_COLUMNS = ("repo_id", "language", "stars", "name_text")
SONAR_COLUMNS = (
    "cyclomatic_complexity", "cognitive_complexity", "code_smells", "violations",
    "critical_violations", "info_violations", "lines_to_cover", "duplicated_blocks",
    "duplicated_files", "duplicated_lines",
)
CLASS_COLUMNS = ("cbo", "fan_in", "fan_out", "dit", "noc", "lcom", "tcc", "lcc")
REQUIRED_COLUMNS = IDENTITY_COLUMNS + DENOMINATORS + SONAR_COLUMNS
CANONICAL_HEADER = REQUIRED_COLUMNS + CLASS_COLUMNS
# only meaningful for pre-normalized rows (synthetic corpora)
EXTRA_COLUMNS = ("file_complexity", "prenormalized")
CK_HEADER = ("repo_id", "class_name") + CLASS_COLUMNS

DEFAULT_FILTER_PATTERNS = (
    "awesome", "guide", "interview", "tutorial", "cheatsheet", "roadmap", "book", "course", "list of",
)


class CorpusError(ValueError):
    """Base class for schema and validation failures."""


class SchemaError(CorpusError):
    pass


class RowError(CorpusError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NormalizationError(CorpusError):
    pass


@dataclass(frozen=True)
class MetricDef:
    name: str
    label: str
    dimension: str
    family: str  # "exp" (monotonic) or "agauss" (non-monotonic)
    normalizer: str
    column: str  # raw CSV column holding the numerator
    languages: frozenset

    @property
    def prenormalized_column(self) -> str:
        return "file_complexity" if self.name == "file_complexity" else self.column


_ALL = frozenset(LANGUAGES)
_JAVA = frozenset({JAVA})


def _m(name, label, dim, family, normalizer, column=None, languages=_ALL):
    return MetricDef(name, label, dim, family, normalizer, column or name, languages)


REGISTRY: tuple[MetricDef, ...] = (
    _m("cyclomatic_complexity", "Cyclomatic Complexity", MAINTAINABILITY, "agauss", NCLOC),
    _m("file_complexity", "File Complexity", MAINTAINABILITY, "exp", FILES, "cyclomatic_complexity"),
    _m("cognitive_complexity", "Cognitive Complexity", MAINTAINABILITY, "agauss", NCLOC),
    _m("code_smells", "Code Smells", MAINTAINABILITY, "exp", NCLOC),
    _m("cbo", "Coupling Between Objects", MAINTAINABILITY, "agauss", CLASS_MEAN, languages=_JAVA),
    _m("fan_in", "Fan-in", MAINTAINABILITY, "agauss", CLASS_MEAN, languages=_JAVA),
    _m("fan_out", "Fan-out", MAINTAINABILITY, "agauss", CLASS_MEAN, languages=_JAVA),
    _m("dit", "Depth Inheritance Tree", MAINTAINABILITY, "exp", CLASS_MEAN, languages=_JAVA),
    _m("noc", "Number of Children", MAINTAINABILITY, "exp", CLASS_MEAN, languages=_JAVA),
    _m("lcom", "Lack of Cohesion of Methods", MAINTAINABILITY, "exp", CLASS_MEAN, languages=_JAVA),
    _m("tcc", "Tight Class Cohesion", MAINTAINABILITY, "agauss", CLASS_MEAN, languages=_JAVA),
    _m("lcc", "Loose Class Cohesion", MAINTAINABILITY, "agauss", CLASS_MEAN, languages=_JAVA),
    _m("total_violations", "Total Violations", RELIABILITY, "exp", NCLOC, "violations"),
    _m("critical_violations", "Critical Violations", RELIABILITY, "exp", NCLOC),
    _m("info_violations", "Info Violations", RELIABILITY, "exp", NCLOC),
    _m("lines_to_cover", "Line to Cover", FUNCTIONALITY, "exp", NCLOC),
    _m("comment_lines", "Comment Lines", FUNCTIONALITY, "agauss", NCLOC_PLUS_COMMENTS),
    _m("duplicated_blocks", "Duplicated Blocks", FUNCTIONALITY, "exp", STATEMENTS),
    _m("duplicated_files", "Duplicated Files", FUNCTIONALITY, "exp", FILES),
    _m("duplicated_lines", "Duplicated Lines", FUNCTIONALITY, "exp", LOC),
)

METRICS_BY_NAME = {m.name: m for m in REGISTRY}


def available_metrics(language: str, registry: Sequence[MetricDef] = REGISTRY) -> list[MetricDef]:
    return [m for m in registry if language in m.languages]


def parse_language(value: str) -> str:
    v = value.strip().lower()
    for lang in LANGUAGES:
        if v == lang.lower():
            return lang
    return OTHER


@dataclass
class RepoRecord:
    repo_id: str
    language: str
    stars: int
    raw: dict[str, float] = field(default_factory=dict)
    denominators: dict[str, int] = field(default_factory=lambda: dict.fromkeys(DENOMINATORS, 0))
    name_text: str = ""
    # metric columns already hold normalized values; denominators are ignored
    prenormalized: bool = False


@dataclass(frozen=True)
class MetricVector:
    repo_id: str
    language: str
    values: Mapping[str, float]
    missing: frozenset = frozenset()


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _parse_float(text: str, column: str, line: int) -> float | None:
    text = text.strip()
    if text == "":
        return None
    try:
        v = float(text)
    except ValueError:
        raise RowError(line, f"column {column!r}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise RowError(line, f"column {column!r}: non-finite value {text!r}")
    if v < 0:
        raise RowError(line, f"column {column!r}: negative counter {text!r}")
    return v


def _parse_int(text: str, column: str, line: int) -> int:
    text = text.strip()
    try:
        v = int(text)
    except ValueError:
        raise RowError(line, f"column {column!r}: expected an integer, got {text!r}") from None
    if v < 0:
        raise RowError(line, f"column {column!r}: negative counter {text!r}")
    return v


def _parse_bool(text: str) -> bool:
    return text.strip().lower() in {"1", "true", "yes"}


def _record_from_row(row: Mapping[str, str], line: int) -> RepoRecord:
    repo_id = row["repo_id"].strip()
    if not repo_id:
        raise RowError(line, "empty repo_id")
    pre = _parse_bool(row.get("prenormalized") or "")
    rec = RepoRecord(
        repo_id=repo_id,
        language=parse_language(row["language"]),
        stars=_parse_int(row["stars"], "stars", line),
        name_text=row["name_text"],
        prenormalized=pre,
    )
    for col in DENOMINATORS:
        if pre and col == "comment_lines":
            v = _parse_float(row[col], col, line)
            if v is not None:
                rec.raw[col] = v
            rec.denominators[col] = 0
        else:
            rec.denominators[col] = _parse_int(row[col], col, line)
    value_cols = SONAR_COLUMNS + CLASS_COLUMNS + (("file_complexity",) if pre else ())
    for col in value_cols:
        text = row.get(col)
        if text is None:
            continue
        v = _parse_float(text, col, line)
        if v is not None:
            rec.raw[col] = v
    return rec


def _check_header(header: Sequence[str] | None, required: Sequence[str], known: Sequence[str], source) -> None:
    if header is None:
        raise SchemaError(f"{source}: empty file (no header row)")
    for col in required:
        if col not in header:
            raise SchemaError(f"{source}: missing mandatory column {col!r}")
    unknown = [c for c in header if c not in known]
    if unknown:
        log.warning("%s: ignoring unknown columns %s", source, ", ".join(unknown))


def records_from_rows(rows: Iterable[tuple[int, Mapping[str, str]]], header: Sequence[str] | None, source="<rows>") -> list[RepoRecord]:
    _check_header(header, REQUIRED_COLUMNS, CANONICAL_HEADER + EXTRA_COLUMNS, source)
    records = []
    seen = set()
    for line, row in rows:
        rec = _record_from_row(row, line)
        if rec.repo_id in seen:
            raise RowError(line, f"duplicate repo_id {rec.repo_id!r}")
        seen.add(rec.repo_id)
        records.append(rec)
    return records


def _read_csv(path) -> tuple[list[str] | None, list[tuple[int, dict]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        rows = []
        for row in reader:
            rows.append((reader.line_num, row))
    return header, rows


def ingest_canonical(path) -> list[RepoRecord]:
    header, rows = _read_csv(path)
    return records_from_rows(rows, header, source=str(path))


def _fmt_float(v: float | None) -> str:
    if v is None:
        return ""
    if v == int(v) and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def write_canonical(records: Sequence[RepoRecord], path) -> None:
    any_pre = any(r.prenormalized for r in records)
    header = list(CANONICAL_HEADER) + (list(EXTRA_COLUMNS) if any_pre else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in records:
            row = {
                "repo_id": r.repo_id,
                "language": r.language,
                "stars": str(r.stars),
                "name_text": r.name_text,
            }
            for col in DENOMINATORS:
                if r.prenormalized and col == "comment_lines":
                    row[col] = _fmt_float(r.raw.get(col))
                else:
                    row[col] = str(r.denominators.get(col, 0))
            for col in SONAR_COLUMNS + CLASS_COLUMNS + ("file_complexity",):
                row[col] = _fmt_float(r.raw.get(col))
            row["prenormalized"] = "1" if r.prenormalized else "0"
            w.writerow([row[c] for c in header])


def load_column_map() -> dict:
    with resources.files("metriq.fixtures").joinpath("column_map.json").open(encoding="utf-8") as fh:
        return json.load(fh)


def _rename_rows(header, rows, mapping):
    new_header = []
    for col in header or ():
        target = mapping.get(col.strip().lower(), col)
        if target not in new_header:
            new_header.append(target)
    renamed = []
    for line, row in rows:
        out = {}
        for col, val in row.items():
            if col is None:
                continue
            target = mapping.get(col.strip().lower(), col)
            out.setdefault(target, val if val is not None else "")
        renamed.append((line, out))
    return new_header, renamed


def ingest_sonarqube(path, mapping: Mapping[str, str] | None = None) -> list[RepoRecord]:
    """SonarQube measures export (one row per project) -> RepoRecords."""
    mapping = mapping if mapping is not None else load_column_map()["sonarqube"]
    header, rows = _read_csv(path)
    if header is None:
        raise SchemaError(f"{path}: empty file (no header row)")
    header, rows = _rename_rows(header, rows, mapping)
    return records_from_rows(rows, header, source=str(path))


# ---------------------------------------------------------------------------
# CK class-level rows
# ---------------------------------------------------------------------------


def _class_value(text) -> float | None:
    if text is None:
        return None
    if isinstance(text, (int, float)):
        v = float(text)
    else:
        text = text.strip()
        if text == "":
            return None
        v = float(text)
    # CK reports undefined cohesion as NaN or a negative sentinel
    if not math.isfinite(v) or v < 0:
        return None
    return v


def ingest_ck(path, mapping: Mapping[str, str] | None = None) -> list[dict]:
    """Per-class CK CSV -> list of row dicts keyed by canonical CK columns."""
    mapping = mapping if mapping is not None else load_column_map()["ck"]
    header, rows = _read_csv(path)
    if header is None:
        raise SchemaError(f"{path}: empty file (no header row)")
    header, rows = _rename_rows(header, rows, mapping)
    _check_header(header, ("repo_id",) + CLASS_COLUMNS, CK_HEADER, str(path))
    out = []
    for line, row in rows:
        rec = {"repo_id": row["repo_id"].strip(), "class_name": row.get("class_name", "")}
        for col in CLASS_COLUMNS:
            try:
                rec[col] = _class_value(row[col])
            except ValueError:
                raise RowError(line, f"column {col!r}: not a number: {row[col]!r}") from None
        out.append(rec)
    return out


def write_ck(rows: Sequence[Mapping], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CK_HEADER)
        for r in rows:
            w.writerow([r["repo_id"], r.get("class_name", "")] + [_fmt_float(r.get(c)) for c in CLASS_COLUMNS])


def aggregate_class_rows(rows: Sequence[Mapping]) -> dict[str, float]:
    """Mean of each class metric over one repository's classes; undefined
    values (None/NaN) are left out of their metric's mean."""
    if not rows:
        raise CorpusError("no class rows to aggregate")
    repo_ids = {r["repo_id"] for r in rows}
    if len(repo_ids) != 1:
        raise CorpusError(f"class rows span several repositories: {sorted(repo_ids)}")
    out = {}
    for col in CLASS_COLUMNS:
        vals = [v for v in (_class_value(r.get(col)) for r in rows) if v is not None]
        if vals:
            out[col] = math.fsum(vals) / len(vals)
    return out


def merge_class_metrics(records: Sequence[RepoRecord], class_rows: Sequence[Mapping]) -> list[RepoRecord]:
    by_repo: dict[str, list] = {}
    for r in class_rows:
        by_repo.setdefault(r["repo_id"], []).append(r)
    known = {r.repo_id for r in records}
    stray = sorted(set(by_repo) - known)
    if stray:
        log.warning("class rows for unknown repositories ignored: %s", ", ".join(stray[:10]))
    for rec in records:
        if rec.repo_id in by_repo:
            rec.raw.update(aggregate_class_rows(by_repo[rec.repo_id]))
    return list(records)


# ---------------------------------------------------------------------------
# filtering and normalization
# ---------------------------------------------------------------------------


def filter_non_engineering(records: Sequence[RepoRecord], patterns: Sequence[str] = DEFAULT_FILTER_PATTERNS):
    """Split records into (kept, dropped) by case-insensitive substring match
    on ``name_text``."""
    pats = [p.lower() for p in patterns]
    if not pats:
        raise ValueError("filter patterns must be non-empty")
    kept, dropped = [], []
    for rec in records:
        text = rec.name_text.lower()
        (dropped if any(p in text for p in pats) else kept).append(rec)
    return kept, dropped


def _denominator(rec: RepoRecord, normalizer: str) -> tuple[float, str]:
    d = rec.denominators
    if normalizer == NCLOC:
        return d["ncloc"], "ncloc"
    if normalizer == NCLOC_PLUS_COMMENTS:
        return d["ncloc"] + d["comment_lines"], "ncloc+comment_lines"
    if normalizer == LOC:
        return d["loc"], "loc"
    if normalizer == FILES:
        return d["files"], "files"
    if normalizer == STATEMENTS:
        return d["statements"], "statements"
    return 1, ""


def normalize(record: RepoRecord, registry: Sequence[MetricDef] = REGISTRY) -> MetricVector:
    values = {}
    missing = set()
    for m in registry:
        if record.language not in m.languages:
            missing.add(m.name)
            continue
        if record.prenormalized:
            v = record.raw.get(m.prenormalized_column)
            if v is None:
                missing.add(m.name)
            else:
                values[m.name] = float(v)
            continue
        if m.normalizer == NCLOC_PLUS_COMMENTS:
            num = float(record.denominators["comment_lines"])
        else:
            num = record.raw.get(m.column)
        if num is None:
            missing.add(m.name)
            continue
        den, den_name = _denominator(record, m.normalizer)
        if den == 0:
            raise NormalizationError(
                f"{record.repo_id}: metric {m.name!r} needs denominator {den_name} > 0"
            )
        values[m.name] = num / den
    return MetricVector(record.repo_id, record.language, values, frozenset(missing))
