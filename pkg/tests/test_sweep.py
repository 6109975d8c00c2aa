import numpy as np
import pytest

from isingmem.fidelity import read_curve
from isingmem.fitting import ModelKind, ScalingVerdict
from isingmem.lattice import Couplings, TieRule
from isingmem.sweep import (
    SummaryRow,
    SweepSpec,
    parse_fit_report,
    parse_spec,
    read_summary,
    run_sweep,
    scaling_report,
    write_spec,
)


def tiny_spec(out_dir, **overrides):
    kwargs = dict(
        dimension=1,
        sizes=[16, 25],
        kts=[3.0, 4.0],
        out_dir=out_dir,
        ensemble_size=60,
        master_seed=314,
        t_max=10.0,
        n_time_points=80,
    )
    kwargs.update(overrides)
    return SweepSpec(**kwargs)


def snapshot(root):
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


class TestSweepSpec:
    def test_validation(self, tmp_path):
        with pytest.raises(ValueError):
            tiny_spec(tmp_path, sizes=[])
        with pytest.raises(ValueError):
            tiny_spec(tmp_path, dimension=2, sizes=[10])  # not a perfect square
        with pytest.raises(ValueError):
            tiny_spec(tmp_path, kts=[0.0])
        with pytest.raises(ValueError):
            tiny_spec(tmp_path, ensemble_size=0)

    def test_geometry_for(self, tmp_path):
        spec = tiny_spec(tmp_path, dimension=2, sizes=[25])
        assert spec.geometry_for(25).side_length == 5

    def test_config_seed_is_stable_and_distinct(self, tmp_path):
        spec = tiny_spec(tmp_path)
        assert spec.config_seed(16, 3.0) == spec.config_seed(16, 3.0)
        assert spec.config_seed(16, 3.0) != spec.config_seed(25, 3.0)
        assert spec.config_seed(16, 3.0) != spec.config_seed(16, 4.0)

    def test_spec_file_round_trip(self, tmp_path):
        spec = tiny_spec(tmp_path / "out", tie_rule=TieRule.DECLARE_FAILURE)
        path = tmp_path / "spec.cfg"
        write_spec(spec, path)
        back = parse_spec(path)
        assert back == spec

    def test_parse_spec_overrides(self, tmp_path):
        spec = tiny_spec(tmp_path / "out")
        path = tmp_path / "spec.cfg"
        write_spec(spec, path)
        back = parse_spec(path, {"ensemble_size": "17", "master_seed": None})
        assert back.ensemble_size == 17
        assert back.master_seed == spec.master_seed


class TestRunSweep:
    def test_outputs_and_summary(self, tmp_path):
        spec = tiny_spec(tmp_path / "run")
        result = run_sweep(spec)
        assert len(result.configs) == 4
        assert result.n_failed == 0
        for cfg in result.configs:
            assert cfg.curve_path.exists()
            assert (cfg.curve_path.parent / "fit.txt").exists()
            assert cfg.gaussian is not None
            assert cfg.exponential is not None
        rows = read_summary(result.summary_path)
        assert len(rows) == 4
        assert {(r.n_sites, r.kT) for r in rows} == {(16, 3.0), (25, 3.0), (16, 4.0), (25, 4.0)}

    def test_curve_files_round_trip(self, tmp_path):
        spec = tiny_spec(tmp_path / "run")
        result = run_sweep(spec)
        for cfg in result.configs:
            curve = read_curve(cfg.curve_path)
            assert curve.ensemble_size == spec.ensemble_size
            assert curve.n_points > 10

    def test_rerun_is_byte_identical(self, tmp_path):
        root = tmp_path / "run"
        run_sweep(tiny_spec(root))
        first = snapshot(root)
        run_sweep(tiny_spec(root), force=True)
        assert snapshot(root) == first

    def test_resume_skips_and_preserves(self, tmp_path):
        root = tmp_path / "run"
        result1 = run_sweep(tiny_spec(root))
        mtimes = {p: p.stat().st_mtime_ns for p in root.rglob("curve.dat")}
        result2 = run_sweep(tiny_spec(root))
        assert {p: p.stat().st_mtime_ns for p in root.rglob("curve.dat")} == mtimes
        r1 = [(c.n_sites, c.kT, c.gaussian.params.lam) for c in result1.configs]
        r2 = [(c.n_sites, c.kT, c.gaussian.params.lam) for c in result2.configs]
        assert r1 == r2

    def test_fit_failure_recorded_not_fatal(self, tmp_path):
        # frozen lattice: no decay within the step budget
        spec = tiny_spec(
            tmp_path / "cold",
            dimension=2,
            sizes=[16],
            kts=[0.8],
            t_max=None,
            step_cap=4000,
            ensemble_size=30,
        )
        result = run_sweep(spec)
        assert result.n_failed == 1
        cfg = result.configs[0]
        assert cfg.error is not None and "no_decay" in cfg.error
        assert cfg.curve_path.exists()
        gaussian, exponential, error = parse_fit_report(cfg.curve_path.parent / "fit.txt")
        assert gaussian is None and error is not None
        assert read_curve(cfg.curve_path).truncated

    def test_fit_report_round_trip(self, tmp_path):
        spec = tiny_spec(tmp_path / "run", sizes=[16], kts=[3.0])
        result = run_sweep(spec)
        cfg = result.configs[0]
        gaussian, exponential, error = parse_fit_report(cfg.curve_path.parent / "fit.txt")
        assert error is None
        assert gaussian.model_kind is ModelKind.GAUSSIAN_TWO_PARAM
        assert gaussian.params.lam == cfg.gaussian.params.lam
        assert gaussian.params.n_eff == cfg.gaussian.params.n_eff
        assert gaussian.chi2 == cfg.gaussian.chi2
        assert gaussian.converged == cfg.gaussian.converged
        assert exponential.params.lam == cfg.exponential.params.lam


def synthetic_rows():
    rows = []
    for dim, kts, sizes in ((1, [2.0, 4.0], [100, 196, 289, 400]),):
        for kt in kts:
            for n in sizes:
                lam = 0.3 if kt == 4.0 else 0.02 * np.exp(-0.01 * n)
                rows.append(SummaryRow(
                    dim=dim, n_sites=n, kT=kt, ensemble_size=1000,
                    lam=lam, lam_ci=0.02 * lam, n_eff=0.61 * n, n_eff_ci=0.02 * n,
                    chi2=100.0, dof=100, converged=True,
                ))
    return rows


class TestScalingReport:
    def test_lambda_rows(self):
        report = scaling_report(synthetic_rows())
        by_kt = {row.kT: row for row in report.lambda_vs_n}
        assert by_kt[4.0].slope_consistent_with_zero
        assert not by_kt[2.0].slope_consistent_with_zero
        assert by_kt[2.0].classification.verdict is ScalingVerdict.EXPONENTIAL

    def test_neff_rows_recover_m(self):
        report = scaling_report(synthetic_rows())
        for row in report.neff_vs_n:
            assert row.proportional.slope == pytest.approx(0.61, abs=1e-9)
            assert row.proportional.through_origin

    def test_params_vs_t_rows(self):
        report = scaling_report(synthetic_rows())
        n100 = [r for r in report.params_vs_t if r.n_sites == 100]
        assert [r.kT for r in n100] == [2.0, 4.0]

    def test_tables_written(self, tmp_path):
        scaling_report(synthetic_rows(), out_dir=tmp_path)
        for name in ("lambda_vs_n.tsv", "neff_vs_n.tsv", "params_vs_t.tsv"):
            text = (tmp_path / name).read_text().splitlines()
            assert len(text) > 1 and "\t" in text[0]

    def test_summary_round_trip(self, tmp_path):
        rows = synthetic_rows()
        from isingmem.sweep import _write_summary, ConfigResult
        from isingmem.fitting import ModelFit
        from isingmem.models import ModelParams

        results = [
            ConfigResult(
                r.dim, r.n_sites, r.kT, r.ensemble_size, tmp_path / "c.dat",
                ModelFit(
                    model_kind=ModelKind.GAUSSIAN_TWO_PARAM,
                    params=ModelParams(r.n_eff, r.lam),
                    lambda_ci90=r.lam_ci, n_eff_ci90=r.n_eff_ci, chi2=r.chi2,
                    dof=r.dof, converged=r.converged, ci_method="profile",
                ),
                None,
            )
            for r in rows
        ]
        _write_summary(tmp_path / "summary.tsv", results)
        back = read_summary(tmp_path / "summary.tsv")
        assert len(back) == len(rows)
        assert back[0].lam == pytest.approx(rows[0].lam, rel=1e-9)

    def test_requires_rows(self):
        with pytest.raises(ValueError):
            scaling_report([])
