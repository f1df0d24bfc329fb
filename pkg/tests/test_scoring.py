import json
import logging
import math
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metriq.corpus import DIMENSIONS, REGISTRY, MetricVector, available_metrics
from metriq.scoring import (
    ScoringError,
    WeightSet,
    derive_weights,
    dump_weights,
    load_weights,
    overall_score,
    read_profiles,
    score_vector,
    weighted_mean,
    write_profiles,
)

JAVA_NAMES = [m.name for m in available_metrics("Java")]
DIM_OF = {m.name: m.dimension for m in REGISTRY}


def _published_importances():
    with resources.files("metriq.fixtures").joinpath("importances_reference.json").open() as fh:
        return json.load(fh)


def _oracle_score(x, p):
    if p.family == "exp":
        if p.uninformative or x <= p.c:
            return 100.0
        return 100.0 * math.exp(-p.lam * (x - p.c))
    s = p.sigma1 if x < p.mu else p.sigma2
    return 100.0 * math.erfc(abs(x - p.mu) / (s * math.sqrt(2.0)))


def _uniform(language="Java"):
    names = [m.name for m in available_metrics(language)]
    return derive_weights({n: 1.0 / len(names) for n in names}, REGISTRY, language)


class TestScoreVector:
    def test_fixture_points(self, java_params):
        v = MetricVector("r", "Java", {"code_smells": 0.5, "cyclomatic_complexity": 155.228})
        s = score_vector(v, java_params)
        assert s == {"code_smells": 100.0, "cyclomatic_complexity": 100.0}

    def test_missing_params(self, java_params):
        v = MetricVector("r", "Python", {"code_smells": 0.5})
        with pytest.raises(ScoringError):
            score_vector(v, java_params)

    def test_metric_without_params(self, python_params):
        v = MetricVector("r", "Python", {"cbo": 1.0})
        with pytest.raises(ScoringError, match="cbo"):
            score_vector(v, python_params)

    def test_random_vectors_match_oracle(self, java_params):
        rng = np.random.default_rng(0)
        for _ in range(50):
            vals = {}
            for name in JAVA_NAMES:
                p = java_params[name]
                centre = p.c if p.family == "exp" else p.mu
                vals[name] = float(rng.uniform(0, 3 * centre + 1))
            got = score_vector(MetricVector("r", "Java", vals), java_params)
            for name, x in vals.items():
                assert got[name] == pytest.approx(_oracle_score(x, java_params[name]), abs=1e-9)


class TestDeriveWeights:
    def test_file_complexity_cell(self):
        raw = {k: v[1] for k, v in _published_importances()["Java"].items()}
        w = derive_weights(raw, REGISTRY, "Java")
        assert w.per_dimension["Maintainability"]["file_complexity"] == pytest.approx(0.220, abs=1e-3)

    @pytest.mark.parametrize("lang", ["Python", "JavaScript", "TypeScript"])
    def test_other_languages_reproduce_table(self, lang):
        table = _published_importances()[lang]
        w = derive_weights({k: v[1] for k, v in table.items()}, REGISTRY, lang)
        for name, (normalized, _) in table.items():
            assert w.per_dimension[DIM_OF[name]][name] == pytest.approx(normalized, abs=1e-3)

    def test_all_on_one(self, caplog):
        raw = dict.fromkeys(JAVA_NAMES, 0.0)
        raw["code_smells"] = 1.0
        with caplog.at_level(logging.WARNING):
            w = derive_weights(raw, REGISTRY, "Java")
        assert w.global_["code_smells"] == 1.0
        assert w.per_dimension["Maintainability"]["code_smells"] == 1.0
        assert w.per_dimension["Reliability"] == {n: 1 / 3 for n in w.per_dimension["Reliability"]}
        assert len(w.per_dimension["Functionality"]) == 5
        assert all(v == 0.2 for v in w.per_dimension["Functionality"].values())
        assert "Reliability" in caplog.text and "Functionality" in caplog.text

    def test_uniform_twelve(self):
        w = _uniform("Python")
        assert len(w.global_) == 12
        assert all(v == pytest.approx(1 / 12, abs=1e-15) for v in w.global_.values())

    def test_sum_must_be_one(self):
        with pytest.raises(ScoringError):
            derive_weights({"code_smells": 0.5}, REGISTRY, "Java")

    def test_negative_rejected(self):
        raw = {n: 1.0 / 12 for n in JAVA_NAMES[:12]}
        raw["code_smells"] = -raw["code_smells"]
        with pytest.raises(ScoringError):
            derive_weights(raw, REGISTRY, "Java")

    @settings(max_examples=50)
    @given(st.lists(st.floats(0, 1), min_size=20, max_size=20).filter(lambda v: sum(v) > 1e-3))
    def test_sums(self, vals):
        total = math.fsum(vals)
        raw = {n: v / total for n, v in zip(JAVA_NAMES, vals)}
        if abs(math.fsum(raw.values()) - 1) > 1e-6:
            return
        w = derive_weights(raw, REGISTRY, "Java")
        assert abs(math.fsum(w.global_.values()) - 1) <= 1e-9
        for dim in DIMENSIONS:
            assert abs(math.fsum(w.per_dimension[dim].values()) - 1) <= 1e-9
        assert all(v >= 0 for v in w.global_.values())

    def test_json_round_trip(self, tmp_path):
        w = _uniform()
        dump_weights(w, tmp_path / "w.json")
        doc = json.loads((tmp_path / "w.json").read_text())
        assert set(doc) == {"language", "raw", "global", "per_dimension"}
        assert load_weights(tmp_path / "w.json") == w


class TestOverall:
    def _ab(self):
        return WeightSet("Java", {"A": 0.5, "B": 0.5}, {"A": 0.5, "B": 0.5}, {"Maintainability": {"A": 0.5, "B": 0.5}})

    def test_midpoint(self):
        assert overall_score({"A": 40.0, "B": 60.0}, self._ab()).overall == 50.0

    def test_single_metric(self):
        w = _uniform()
        assert overall_score({"cbo": 37.25}, w).overall == 37.25

    def test_empty(self):
        with pytest.raises(ScoringError):
            overall_score({}, _uniform())

    def test_unknown_metric(self):
        with pytest.raises(ScoringError):
            overall_score({"nope": 1.0}, _uniform())

    def test_coverage(self):
        w = _uniform()
        p = overall_score({n: 50.0 for n in JAVA_NAMES[:5]}, w)
        assert p.coverage == 5 / 20

    def test_dot_product_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            raw = rng.dirichlet(np.ones(20))
            w = derive_weights(dict(zip(JAVA_NAMES, raw)), REGISTRY, "Java")
            scores = dict(zip(JAVA_NAMES, rng.uniform(0, 100, 20)))
            expected = sum(w.global_[n] * scores[n] for n in JAVA_NAMES)
            assert abs(overall_score(scores, w).overall - expected) <= 1e-12

    def test_zero_weights_present_fall_back_to_uniform(self):
        w = WeightSet("Java", {"A": 1.0, "B": 0.0, "C": 0.0}, {"A": 1.0, "B": 0.0, "C": 0.0}, {})
        assert weighted_mean({"B": 10.0, "C": 30.0}, w.global_) == 20.0

    @settings(max_examples=100)
    @given(
        st.lists(st.floats(0, 100), min_size=20, max_size=20),
        st.lists(st.floats(0.001, 1), min_size=20, max_size=20),
        st.sets(st.integers(0, 19), min_size=1),
        st.integers(0, 19), st.floats(0, 100),
    )
    def test_convex_monotone_permutation(self, scores, raw, keep, bump_idx, bump):
        total = math.fsum(raw)
        w = derive_weights({n: r / total for n, r in zip(JAVA_NAMES, raw)}, REGISTRY, "Java")
        s = {JAVA_NAMES[i]: scores[i] for i in sorted(keep)}
        prof = overall_score(s, w)
        assert min(s.values()) <= prof.overall <= max(s.values())
        for dim, val in prof.per_dimension.items():
            members = [v for k, v in s.items() if DIM_OF[k] == dim]
            if members:
                assert min(members) <= val <= max(members)
            else:
                assert val is None
        rev = dict(reversed(list(s.items())))
        assert overall_score(rev, w).overall == pytest.approx(prof.overall, abs=1e-12)
        name = JAVA_NAMES[bump_idx]
        if name in s:
            raised = dict(s)
            raised[name] = max(s[name], bump)
            assert overall_score(raised, w).overall >= prof.overall - 1e-12


class TestProfilesCsv:
    def test_round_trip(self, tmp_path):
        w = _uniform()
        profs = [
            overall_score({n: float(i + j) for j, n in enumerate(JAVA_NAMES)}, w, f"r{i}")
            for i in range(3)
        ]
        profs.append(overall_score({"code_smells": 12.5}, w, "sparse"))
        path = tmp_path / "s.csv"
        write_profiles(profs, path)
        header = path.read_text().splitlines()[0].split(",")
        assert header[:5] == ["repo_id", "overall", "maintainability", "reliability", "functionality"]
        assert header[-1] == "coverage" and len(header) == 26
        back = read_profiles(path)
        for a, b in zip(profs, back):
            assert a.repo_id == b.repo_id and a.overall == b.overall
            assert a.per_metric == b.per_metric and a.per_dimension == b.per_dimension
            assert a.coverage == b.coverage
