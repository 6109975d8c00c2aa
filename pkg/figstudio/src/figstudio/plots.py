"""Deterministic rendering of the four figure kinds.

The plotting layer is a pure view: every number drawn comes verbatim from
the input files (no fitting or statistics happens here), and identical
inputs produce identical image bytes.  Model overlays therefore take a
tabulated model curve file (produced by the simulator's `analytic`
subcommand) rather than model parameters.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import Curve, read_curve, read_summary, read_table

__all__ = ["PlotKind", "PlotJob", "render"]

# fixed savefig settings so reruns are pixel-identical
_SAVEFIG = dict(dpi=150, metadata={"Software": "figstudio"})
_FIGSIZE = (7.0, 4.6)


class PlotKind(enum.Enum):
    FIDELITY_OVERLAY = "fidelity-overlay"
    MODEL_COMPARISON = "model-comparison"
    SCALING_VS_N = "scaling-vs-n"
    PARAMS_VS_T = "params-vs-t"


@dataclass
class PlotJob:
    """One figure: what to draw, from which files, to which image path."""

    kind: PlotKind
    inputs: list[Path]
    output: Path
    log_y: bool = False
    parameter: str = "lambda"  # scaling-vs-n: "lambda" or "n_eff"
    dimension: int | None = None  # summary filters
    kT: float | None = None
    n_sites: int | None = None
    fit_table: Path | None = None  # scaling-vs-n: report table with the fit line
    title: str | None = None

    def __post_init__(self):
        self.inputs = [Path(p) for p in self.inputs]
        self.output = Path(self.output)
        if not self.inputs:
            raise ValueError("at least one input file is required")
        for p in self.inputs:
            if not p.exists():
                raise FileNotFoundError(p)


def _errorbar_curve(ax, curve: Curve, label: str):
    has_error = bool(np.any(curve.sigma > 0))
    if has_error:
        ax.errorbar(
            curve.times, curve.fidelity, yerr=curve.sigma, fmt=".", ms=3.0,
            color="tab:blue", ecolor="tab:blue", elinewidth=0.7, capsize=0,
            label=label, zorder=2,
        )
    else:
        ax.plot(curve.times, curve.fidelity, ".", ms=3.0, color="tab:blue",
                label=label, zorder=2)


def _render_fidelity_overlay(job: PlotJob, ax):
    """Measured curve with error bars plus tabulated model line(s)."""
    curves = [read_curve(p) for p in job.inputs]
    data = [c for c in curves if c.model is None]
    models = [c for c in curves if c.model is not None]
    if not data and curves:
        data = [curves[0]]
        models = curves[1:]
    for c in data:
        _errorbar_curve(ax, c, c.label())
    for c in models:
        ax.plot(c.times, c.fidelity, "-", lw=1.4, color="tab:red",
                label=c.label(), zorder=3)
    ax.set_xlabel("t")
    ax.set_ylabel("F(t)")
    ax.legend(loc="best", fontsize=8)


def _render_model_comparison(job: PlotJob, ax):
    """Tabulated model families: binomial as lines, Gaussian as markers."""
    curves = [read_curve(p) for p in job.inputs]
    line_styles = ["-", "--", "-.", ":"]
    marker_styles = ["x", "o", "s", "^"]
    lines = 0
    markers = 0
    for c in curves:
        if c.model == "gaussian":
            style = marker_styles[markers % len(marker_styles)]
            markers += 1
            ax.plot(c.times, c.fidelity, style, ms=4.0, mfc="none",
                    color=f"C{markers}", label=c.label())
        else:
            style = line_styles[lines % len(line_styles)]
            lines += 1
            ax.plot(c.times, c.fidelity, style, lw=1.3, color="k", label=c.label())
    ax.set_xlabel("t")
    ax.set_ylabel("F(t)")
    ax.legend(loc="best", fontsize=8)


def _match(value, target, tol=1e-9):
    return target is None or abs(value - target) <= tol * max(1.0, abs(target))


def _render_scaling_vs_n(job: PlotJob, ax):
    """Fitted parameter against lattice size at fixed temperature."""
    rows = read_summary(job.inputs[0])
    rows = [
        r for r in rows
        if (job.dimension is None or r.dim == job.dimension) and _match(r.kT, job.kT)
    ]
    if not rows:
        raise ValueError("no summary rows match the dimension/kT filters")
    rows.sort(key=lambda r: r.n_sites)
    ns = np.array([r.n_sites for r in rows], dtype=float)
    if job.parameter == "n_eff":
        ys = np.array([r.n_eff for r in rows])
        errs = np.array([r.n_eff_ci for r in rows])
        ax.set_ylabel("n_eff")
    else:
        ys = np.array([r.lam for r in rows])
        errs = np.array([r.lam_ci for r in rows])
        ax.set_ylabel("lambda")
    ax.errorbar(ns, ys, yerr=errs, fmt="o", ms=4.0, color="tab:blue", capsize=2.0)
    if job.fit_table is not None:
        for row in read_table(job.fit_table):
            if job.dimension is not None and int(row.get("dim", -1)) != job.dimension:
                continue
            if job.kT is not None and not _match(float(row.get("kT", "nan")), job.kT):
                continue
            grid = np.linspace(ns.min(), ns.max(), 64)
            if "m" in row:  # proportional n_eff = m N fit
                m = float(row["m"])
                ax.plot(grid, m * grid, "-", lw=1.2, color="tab:red",
                        label=f"m={m:.3g} +/- {float(row['m_ci90']):.2g}")
            elif "slope" in row:
                slope, intercept = float(row["slope"]), float(row["intercept"])
                ax.plot(grid, slope * grid + intercept, "-", lw=1.2, color="tab:red",
                        label=f"slope={slope:.3g} +/- {float(row['slope_ci90']):.2g}")
            break
        if ax.get_legend_handles_labels()[0]:
            ax.legend(loc="best", fontsize=8)
    ax.set_xlabel("N")


def _render_params_vs_t(job: PlotJob, fig):
    """Two panels: fitted lambda and n_eff against temperature at fixed size."""
    rows = read_summary(job.inputs[0])
    rows = [
        r for r in rows
        if (job.dimension is None or r.dim == job.dimension)
        and (job.n_sites is None or r.n_sites == job.n_sites)
    ]
    if not rows:
        raise ValueError("no summary rows match the dimension/N filters")
    rows.sort(key=lambda r: r.kT)
    kts = np.array([r.kT for r in rows])
    ax1, ax2 = fig.subplots(1, 2)
    ax1.errorbar(kts, [r.lam for r in rows], yerr=[r.lam_ci for r in rows],
                 fmt="o-", ms=4.0, lw=0.9, color="tab:blue", capsize=2.0)
    ax1.set_xlabel("kT")
    ax1.set_ylabel("lambda")
    ax2.errorbar(kts, [r.n_eff for r in rows], yerr=[r.n_eff_ci for r in rows],
                 fmt="o-", ms=4.0, lw=0.9, color="tab:green", capsize=2.0)
    ax2.set_xlabel("kT")
    ax2.set_ylabel("n_eff")
    if job.log_y:
        ax1.set_yscale("log")


def render(job: PlotJob) -> Path:
    """Draw the job's figure and write the image file; returns the output path."""
    fig = plt.figure(figsize=_FIGSIZE)
    try:
        if job.kind is PlotKind.PARAMS_VS_T:
            _render_params_vs_t(job, fig)
        else:
            ax = fig.add_subplot(111)
            if job.kind is PlotKind.FIDELITY_OVERLAY:
                _render_fidelity_overlay(job, ax)
            elif job.kind is PlotKind.MODEL_COMPARISON:
                _render_model_comparison(job, ax)
            else:
                _render_scaling_vs_n(job, ax)
            if job.log_y and job.kind is not PlotKind.PARAMS_VS_T:
                ax.set_yscale("log")
        if job.title:
            fig.suptitle(job.title, fontsize=10)
        fig.tight_layout()
        job.output.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(job.output, **_SAVEFIG)
    finally:
        plt.close(fig)
    return job.output
