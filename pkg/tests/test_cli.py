import json
import subprocess
import sys

import pytest

from mobius_falsify.cli import main

FAST = ["--bootstrap", "200", "--shuffles", "200", "--threads", "1"]


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--preset", "a1", "--seed", "7", "-o", str(root / "a1.json")]) == 0
    assert main(["synth", "--preset", "a1b", "--eps", "0.05", "--seed", "7", "-o", str(root / "noisy.json")]) == 0
    return root


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestSynth:
    def test_a1_budget(self, tmp_path, capsys):
        code, out, _ = run(["synth", "--preset", "a1", "--seed", "7", "-o", str(tmp_path / "a.json")], capsys)
        assert code == 0 and "records=16 shots=8192" in out

    def test_a1b_budget(self, tmp_path, capsys):
        code, out, _ = run(["synth", "--preset", "a1b", "--seed", "7", "-o", str(tmp_path / "b.json")], capsys)
        assert code == 0 and "records=48 shots=24576" in out

    def test_eps_echoed(self, tmp_path, capsys):
        code, out, _ = run(["synth", "--preset", "a1", "--eps", "0.05", "-o", str(tmp_path / "c.json")], capsys)
        assert code == 0 and "eps=0.05" in out

    def test_crosstalk_flag(self, tmp_path, capsys):
        path = tmp_path / "x.json"
        code, _, _ = run(["synth", "--crosstalk", "1,3=0.07", "--pair-flip", "1,2=0.01", "-o", str(path)], capsys)
        spec = json.loads(path.read_text())["metadata"]["noise_spec"]
        assert code == 0 and spec["crosstalk"] == {"0,2": 0.07} and spec["pair_flip"] == {"0,1": 0.01}

    def test_bad_pair_flip(self, tmp_path, capsys):
        code, _, err = run(["synth", "--pair-flip", "12", "-o", str(tmp_path / "d.json")], capsys)
        assert code == 2 and "--pair-flip" in err

    def test_missing_output_dir(self, tmp_path, capsys):
        code, _, _ = run(["synth", "-o", str(tmp_path / "nope" / "d.json")], capsys)
        assert code == 3

    def test_same_seed_same_file(self, tmp_path, capsys):
        for name in ("p.json", "q.json"):
            main(["synth", "--preset", "a1b", "--eps", "0.02", "--seed", "3", "-o", str(tmp_path / name)])
        capsys.readouterr()
        assert (tmp_path / "p.json").read_bytes() == (tmp_path / "q.json").read_bytes()


class TestAnalyze:
    def test_ideal_table(self, data, capsys):
        code, out, _ = run(["analyze", str(data / "a1.json"), "--format", "table", *FAST], capsys)
        assert code == 0
        row = out.splitlines()[1].split()
        assert float(row[5]) == pytest.approx(1.0, abs=2e-3)

    def test_floor_with_100_shuffles(self, data, capsys):
        code, out, _ = run(["analyze", str(data / "a1.json"), "--shuffles", "100", "--bootstrap", "100"], capsys)
        ci = json.loads(out)["triplet_ci"]
        assert code == 0 and ci["p_is_floor"] is True and ci["p_value"] == 0.01

    def test_floor_in_table(self, data, capsys):
        _, out, _ = run(["analyze", str(data / "a1.json"), "--shuffles", "100", "--bootstrap", "100",
                         "--format", "table"], capsys)
        assert "p <= 1.0e-02" in out

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["analyze", str(tmp_path / "missing.json")], capsys)
        assert code == 3 and "file not found" in err

    def test_malformed_dataset(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code, _, _ = run(["analyze", str(bad)], capsys)
        assert code == 3

    def test_non_convergence_exit(self, data, capsys):
        code, _, err = run(["analyze", str(data / "noisy.json"), *FAST, "--tol", "1e-300", "--max-iter", "2"], capsys)
        assert code == 4 and "maxent" in err

    def test_byte_stable(self, data, tmp_path, capsys):
        outs = []
        for i, threads in enumerate(("1", "3")):
            path = tmp_path / f"r{i}.json"
            main(["analyze", str(data / "noisy.json"), "--bootstrap", "600", "--shuffles", "600",
                  "--threads", threads, "-o", str(path)])
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_unknown_flag(self, data, capsys):
        with pytest.raises(SystemExit) as info:
            main(["analyze", str(data / "a1.json"), "--bogus"])
        assert info.value.code == 2


class TestOtherCommands:
    def test_maxent(self, data, capsys):
        code, out, _ = run(["maxent", str(data / "noisy.json")], capsys)
        d = json.loads(out)
        assert code == 0 and d["fit_residual"] < 1e-10 and len(d["labels"]) == 2

    def test_resample(self, data, capsys):
        code, out, _ = run(["resample", str(data / "noisy.json"), *FAST, "--statistic", "12", "--kind", "g"], capsys)
        d = json.loads(out)
        assert code == 0 and d["statistic"] == "g(12)" and d["ci_low"] <= d["ci_high"]


@pytest.fixture(scope="module")
def report(data):
    path = data / "report.json"
    main(["analyze", str(data / "noisy.json"), *FAST, "-o", str(path)])
    return path


class TestCompare:
    def test_identical(self, report, capsys):
        code, out, _ = run(["compare", str(report), str(report)], capsys)
        assert code == 0 and "fields within tolerance" in out

    def test_perturbed(self, report, tmp_path, capsys):
        ref = json.loads(report.read_text())
        ref["lattice"]["top_f"] += 1e-3
        other = tmp_path / "ref.json"
        other.write_text(json.dumps(ref))
        code, out, _ = run(["compare", str(report), str(other), "--tol", "lattice.top_f=1e-4"], capsys)
        assert code == 1 and "FAIL lattice.top_f" in out
        assert out.count("FAIL") == 1

    def test_malformed(self, report, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("[1, 2")
        code, _, err = run(["compare", str(report), str(bad)], capsys)
        assert code == 3 and "malformed" in err

    def test_shape_mismatch(self, report, tmp_path, capsys):
        ref = json.loads(report.read_text())
        del ref["decode"]["seed"]
        other = tmp_path / "short.json"
        other.write_text(json.dumps(ref))
        code, _, err = run(["compare", str(report), str(other)], capsys)
        assert code == 3 and "shape mismatch" in err

    def test_bad_tol_syntax(self, report, capsys):
        code, _, _ = run(["compare", str(report), str(report), "--tol", "lattice.top_f"], capsys)
        assert code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mobius_falsify", "synth", "-o", str(tmp_path / "m.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "records=16" in proc.stdout


def test_threads_env_default(monkeypatch):
    from mobius_falsify.resample import THREADS_ENV, default_threads

    monkeypatch.setenv(THREADS_ENV, "3")
    assert default_threads() == 3
    monkeypatch.setenv(THREADS_ENV, "junk")
    assert default_threads() == 1
