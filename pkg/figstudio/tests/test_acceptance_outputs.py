"""Render every plot kind from the simulator's acceptance-suite outputs.

The primary package's acceptance run (pytest tests/test_acceptance.py in
the repository root) persists curves, fit reports, model tabulations and
summaries under acceptance_out/ (or $ISINGMEM_ACCEPTANCE_OUT).  These tests
consume those files through the documented formats only; they skip with an
explanatory message when the outputs have not been generated yet.
"""

import os
from pathlib import Path

import pytest

from figstudio.plots import PlotJob, PlotKind, render


def acceptance_dir() -> Path:
    env = os.environ.get("ISINGMEM_ACCEPTANCE_OUT")
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "acceptance_out"


def need(*names):
    base = acceptance_dir()
    paths = [base / n for n in names]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        pytest.skip(
            "acceptance outputs missing (run `pytest tests/test_acceptance.py -s` "
            f"in the repository root first): {', '.join(missing)}"
        )
    return paths


def jobs(tmp_path):
    overlay = need("curve_1d_kt2.5.dat", "model_1d_kt2.5.dat")
    comparison = need("binom399.dat", "gauss399.dat", "binom11.dat", "gauss11.dat")
    summary35, neff_table = need("summary_1d_kt35.tsv", "report_1d_kt35/neff_vs_n.tsv")
    (params_t,) = need("summary_params_vs_t.tsv")
    return [
        PlotJob(kind=PlotKind.FIDELITY_OVERLAY, inputs=overlay,
                output=tmp_path / "overlay.png"),
        PlotJob(kind=PlotKind.MODEL_COMPARISON, inputs=comparison,
                output=tmp_path / "comparison.png"),
        PlotJob(kind=PlotKind.SCALING_VS_N, inputs=[summary35], dimension=1, kT=3.5,
                parameter="n_eff", fit_table=neff_table,
                output=tmp_path / "scaling.png"),
        PlotJob(kind=PlotKind.PARAMS_VS_T, inputs=[params_t], dimension=1, n_sites=100,
                output=tmp_path / "params_vs_t.png"),
    ]


def test_renders_all_kinds_from_acceptance_outputs(tmp_path):
    for job in jobs(tmp_path):
        out = render(job)
        assert out.exists() and out.stat().st_size > 4000


def test_rerenders_are_pixel_identical(tmp_path):
    for job in jobs(tmp_path):
        first = render(job).read_bytes()
        job.output.unlink()
        second = render(job).read_bytes()
        assert first == second, f"{job.kind.value} render is not deterministic"
