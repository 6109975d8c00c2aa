import numpy as np
import pytest

from isingmem.cli import EXIT_IO, EXIT_OK, EXIT_PARTIAL, EXIT_VALIDATION, main
from isingmem.fidelity import read_curve
from isingmem.sweep import read_summary


def run(args):
    return main([str(a) for a in args])


@pytest.fixture
def curve_file(tmp_path):
    out = tmp_path / "curve.dat"
    rc = run([
        "simulate", "--dimension", 1, "--side-length", 24, "--kT", 2.5,
        "--M", 200, "--seed", 9, "--t-max", 20, "--n-points", 90,
        "--tie-rule", "random_choice", "--out", out,
    ])
    assert rc == EXIT_OK
    return out


class TestSimulate:
    def test_writes_parseable_curve(self, curve_file):
        curve = read_curve(curve_file)
        assert curve.fidelity[0] == 1.0
        assert curve.ensemble_size == 200

    def test_deterministic_across_invocations(self, tmp_path, curve_file):
        other = tmp_path / "again.dat"
        rc = run([
            "simulate", "--dimension", 1, "--side-length", 24, "--kT", 2.5,
            "--M", 200, "--seed", 9, "--t-max", 20, "--n-points", 90,
            "--tie-rule", "random_choice", "--out", other,
        ])
        assert rc == EXIT_OK
        assert other.read_bytes() == curve_file.read_bytes()

    def test_validation_error_exit_code(self, tmp_path):
        rc = run(["simulate", "--dimension", 3, "--side-length", 10,
                  "--kT", 1.0, "--out", tmp_path / "x.dat"])
        assert rc == EXIT_VALIDATION

    def test_io_error_exit_code(self, tmp_path):
        rc = run([
            "simulate", "--dimension", 1, "--side-length", 8, "--kT", 2.0,
            "--M", 10, "--seed", 1, "--t-max", 5, "--n-points", 20,
            "--out", tmp_path / "missing_dir" / "x.dat",
        ])
        assert rc == EXIT_IO


class TestFit:
    def test_fit_prints_and_writes_report(self, curve_file, tmp_path, capsys):
        report = tmp_path / "fit.txt"
        rc = run(["fit", "--curve", curve_file, "--model", "both", "--out", report])
        assert rc == EXIT_OK
        out = capsys.readouterr().out
        assert "lambda" in out and "chi2" in out
        text = report.read_text()
        assert "gaussian.lambda=" in text and "exponential.lambda=" in text

    def test_missing_curve_is_io_error(self, tmp_path):
        rc = run(["fit", "--curve", tmp_path / "nope.dat"])
        assert rc == EXIT_IO


class TestOracle:
    def test_exact_curve(self, tmp_path):
        out = tmp_path / "exact.dat"
        rc = run([
            "oracle", "--dimension", 2, "--side-length", 2, "--kT", 2.5,
            "--t-max", 30, "--n-points", 40, "--out", out,
        ])
        assert rc == EXIT_OK
        curve = read_curve(out)
        assert curve.exact
        assert curve.fidelity[0] == 1.0

    def test_cap_is_validation_error(self, tmp_path):
        rc = run([
            "oracle", "--dimension", 2, "--side-length", 5, "--kT", 2.5,
            "--t-max", 5, "--out", tmp_path / "x.dat",
        ])
        assert rc == EXIT_VALIDATION


class TestAnalytic:
    @pytest.mark.parametrize("model,extra", [
        ("binomial", []),
        ("gaussian", ["--n-eff", 46.7]),
        ("exponential", []),
    ])
    def test_tabulates(self, tmp_path, model, extra):
        out = tmp_path / f"{model}.dat"
        rc = run([
            "analytic", "--model", model, "--N", 100, "--lam", 0.17,
            "--t-max", 40, "--n-points", 50, "--out", out, *extra,
        ])
        assert rc == EXIT_OK
        curve = read_curve(out)
        assert curve.exact
        assert curve.fidelity[0] == 1.0
        assert np.all(np.diff(curve.fidelity) <= 1e-12)


class TestSweepAndReport:
    def test_sweep_then_report(self, tmp_path, capsys):
        out_dir = tmp_path / "sweep"
        rc = run([
            "sweep", "--dimension", 1, "--sizes", "16,25", "--kts", "3.0,4.0",
            "--out-dir", out_dir, "--M", 50, "--seed", 11, "--t-max", 10,
            "--n-points", 60,
        ])
        assert rc == EXIT_OK
        rows = read_summary(out_dir / "summary.tsv")
        assert len(rows) == 4
        report_dir = tmp_path / "report"
        rc = run(["report", "--summary", out_dir / "summary.tsv", "--out-dir", report_dir])
        assert rc == EXIT_OK
        assert (report_dir / "lambda_vs_n.tsv").exists()
        assert "m =" in capsys.readouterr().out

    def test_sweep_config_file_with_override(self, tmp_path):
        cfg = tmp_path / "sweep.cfg"
        cfg.write_text(
            "dimension=1\nsizes=16\nkts=3.0\nout_dir={}\n"
            "ensemble_size=40\nmaster_seed=5\nt_max=10.0\nn_time_points=50\n".format(
                tmp_path / "out"
            )
        )
        rc = run(["sweep", "--config", cfg, "--M", 30])
        assert rc == EXIT_OK
        curve = read_curve(tmp_path / "out" / "1D_N16_kT3" / "curve.dat")
        assert curve.ensemble_size == 30  # flag overrides file value

    def test_partial_failure_exit_code(self, tmp_path):
        rc = run([
            "sweep", "--dimension", 2, "--sizes", "16", "--kts", "0.8,4.0",
            "--out-dir", tmp_path / "cold", "--M", 30, "--seed", 2,
            "--n-points", 60, "--step-cap", 4000,
        ])
        assert rc == EXIT_PARTIAL

    def test_missing_required_flags(self, tmp_path):
        assert run(["sweep", "--sizes", "16"]) == EXIT_VALIDATION
