import copy
import json
import math

import pytest

from mobius_falsify import NoiseSpec, sample_dataset
from mobius_falsify.exceptions import DegenerateDataError, ShapeMismatchError, StageError
from mobius_falsify.maxent import FitConfig
from mobius_falsify.pipeline import AnalysisConfig, compare_report, run_analysis
from mobius_falsify.records import Dataset
from mobius_falsify.resample import ResampleConfig
from mobius_falsify.synth import noisy_parity_error

from oracles import h2


FAST = AnalysisConfig(seed=1, resample=ResampleConfig(1000, 1000, threads=1))


@pytest.fixture(scope="module")
def ideal_report():
    return run_analysis(sample_dataset(NoiseSpec.preset("a1", seed=7)), FAST)


@pytest.fixture(scope="module")
def noisy_dataset():
    return sample_dataset(NoiseSpec.preset("a1b", eps=0.05, seed=8))


@pytest.fixture(scope="module")
def noisy_report(noisy_dataset):
    return run_analysis(noisy_dataset, FAST)


class TestRunAnalysis:
    def test_ideal_a1(self, ideal_report):
        d = ideal_report.to_dict()
        assert (d["circuits"], d["shots"]) == (16, 8192)
        assert d["lattice"]["top_f"] == pytest.approx(1.0, abs=2e-3)
        assert d["surrogate"]["top_f"] == pytest.approx(0.0, abs=1e-3)
        assert abs(d["decode"]["pairwise_acc"] - 0.5) <= 0.05
        assert d["decode"]["triplet_acc"] == 1.0
        assert d["triplet_ci"]["p_is_floor"] is True

    def test_noisy_within_interval(self, noisy_report):
        target = 1 - h2(noisy_parity_error(0.05))
        ci = noisy_report.triplet_ci
        assert ci.ci_low <= target <= ci.ci_high
        assert noisy_report.statistic == "f(123)"

    def test_forward_check(self, noisy_report):
        assert noisy_report.to_dict()["forward_residual"] < 1e-12

    def test_every_value_finite(self, noisy_report):
        def walk(obj):
            if isinstance(obj, dict):
                for v in obj.values():
                    yield from walk(v)
            elif isinstance(obj, list):
                for v in obj:
                    yield from walk(v)
            elif isinstance(obj, float):
                yield obj

        assert all(math.isfinite(v) for v in walk(noisy_report.to_dict()))

    def test_bit_identical_rerun(self, noisy_dataset, noisy_report):
        assert run_analysis(noisy_dataset, FAST).to_json() == noisy_report.to_json()

    def test_threads_do_not_change_report(self, noisy_dataset, noisy_report):
        cfg = AnalysisConfig(seed=1, resample=ResampleConfig(1000, 1000, threads=3))
        assert run_analysis(noisy_dataset, cfg).to_json() == noisy_report.to_json()

    def test_config_echo(self, noisy_report):
        prov = noisy_report.to_dict()["provenance"]
        assert prov["config"]["seed"] == 1
        assert prov["config"]["resample"]["bootstrap_replicates"] == 1000
        assert "threads" not in prov["config"]["resample"]

    def test_statistic_override(self, noisy_dataset):
        cfg = AnalysisConfig(seed=1, resample=ResampleConfig(200, 200, threads=1),
                             statistic_subset="12", statistic_kind="g")
        report = run_analysis(noisy_dataset, cfg)
        assert report.statistic == "g(12)"
        assert report.triplet_ci.point == pytest.approx(report.lattice.g_of("12"))

    def test_table_columns(self, noisy_report):
        text = noisy_report.format_table()
        header = text.splitlines()[0]
        cols = ["Circuits / Shots", "Max |D| marg.", "Max TV pair", "f(top) bits", "Acc. (Pair/Trip)"]
        assert [header.index(c) for c in cols] == sorted(header.index(c) for c in cols)
        assert "48 / 24576" in text


class TestStageErrors:
    def test_empty_dataset(self):
        with pytest.raises(DegenerateDataError) as info:
            run_analysis(Dataset(3, []), FAST)
        assert info.value.stage == "aggregate"

    def test_convergence_labelled(self, noisy_dataset):
        cfg = AnalysisConfig(resample=ResampleConfig(10, 10, threads=1),
                             fit=FitConfig(tolerance=1e-300, max_iterations=2))
        with pytest.raises(Exception) as info:
            run_analysis(noisy_dataset, cfg)
        assert info.value.stage == "maxent"

    def test_foreign_error_wrapped(self, noisy_dataset):
        cfg = AnalysisConfig(resample=ResampleConfig(10, 10, threads=1), label_prior=("a", "b"))
        with pytest.raises(StageError) as info:
            run_analysis(noisy_dataset, cfg)
        assert info.value.stage == "prior"


class TestCompare:
    def test_self(self, noisy_report):
        assert all(r.passed for r in compare_report(noisy_report, noisy_report))

    def test_perturbed_top_f(self, noisy_report):
        ref = json.loads(noisy_report.to_json())
        tol = 1e-6
        ref["lattice"]["top_f"] += 2 * tol
        results = compare_report(noisy_report, ref, {"lattice.top_f": tol})
        failed = [r.field for r in results if not r.passed]
        assert failed == ["lattice.top_f"]

    def test_extra_field(self, noisy_report):
        ref = copy.deepcopy(noisy_report.to_dict())
        ref["decode"]["extra"] = 1.0
        with pytest.raises(ShapeMismatchError):
            compare_report(noisy_report, ref)

    def test_unknown_tolerance(self, noisy_report):
        with pytest.raises(ShapeMismatchError):
            compare_report(noisy_report, noisy_report, {"lattice.nope": 1.0})

    def test_provenance_ignored(self, noisy_report):
        ref = copy.deepcopy(noisy_report.to_dict())
        ref["provenance"] = {"anything": "else"}
        assert all(r.passed for r in compare_report(noisy_report, ref))

    def test_boolean_fields_exact(self, noisy_report):
        ref = copy.deepcopy(noisy_report.to_dict())
        ref["triplet_ci"]["p_is_floor"] = not ref["triplet_ci"]["p_is_floor"]
        failed = [r.field for r in compare_report(noisy_report, ref, default_tolerance=1.0) if not r.passed]
        assert failed == ["triplet_ci.p_is_floor"]
