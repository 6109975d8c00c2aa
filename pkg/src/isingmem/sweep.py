"""Experiment orchestration over (dimension, N, kT) grids with resumable output.

Each grid point gets its own directory `<out>/<dim>D_N<N>_kT<kT>/` holding
`curve.dat` (the fidelity curve) and `fit.txt` (key=value fit report); an
aggregate `summary.tsv` is rewritten by a single final pass.  Outputs are a
pure function of (spec, master seed): per-configuration seeds are derived
with SeedSequence spawn keys, so reruns are byte-identical and completed
configurations can be skipped on resume without touching their files.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import TrajectoryConfig
from .fidelity import (
    DEFAULT_STEP_CAP,
    FidelityCurve,
    auto_sample_times,
    curve_metadata,
    estimate_fidelity,
    read_curve,
    write_curve,
)
from .fitting import (
    LinearFit,
    ModelFit,
    ModelKind,
    ModelParams,
    NoDecayError,
    ScalingClassification,
    Z90,
    classify_lambda_scaling,
    fit_exponential_model,
    fit_gaussian_model,
    fit_linear,
)
from .lattice import Couplings, Geometry, TieRule

__all__ = [
    "SweepSpec",
    "ConfigResult",
    "SweepResult",
    "SummaryRow",
    "run_sweep",
    "scaling_report",
    "ScalingReport",
    "write_spec",
    "parse_spec",
    "read_summary",
    "write_fit_report",
    "parse_fit_report",
]

log = logging.getLogger(__name__)

_SUMMARY_COLUMNS = (
    "dim", "N", "kT", "M", "lambda", "lambda_ci", "n_eff", "n_eff_ci",
    "chi2", "dof", "converged",
)


def _sci(x: float) -> str:
    return f"{x:.10e}"


@dataclass
class SweepSpec:
    """Grid of configurations to simulate and fit."""

    dimension: int
    sizes: list[int]  # total site counts N; perfect squares required in 2D
    kts: list[float]
    out_dir: Path
    ensemble_size: int = 1000
    tie_rule: TieRule = TieRule.RANDOM_CHOICE
    master_seed: int = 0
    encoded_bit: int = 1
    couplings: Couplings = field(default_factory=Couplings)
    n_time_points: int = 240
    t_max: float | None = None
    step_cap: int = DEFAULT_STEP_CAP
    fit_exponential: bool = True

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if not self.sizes:
            raise ValueError("sizes must be a nonempty list")
        for n in self.sizes:
            if n < 1:
                raise ValueError(f"sizes must be positive, got {n}")
            if self.dimension == 2 and math.isqrt(n) ** 2 != n:
                raise ValueError(f"2D sizes must be perfect squares, got {n}")
        if not self.kts:
            raise ValueError("kts must be a nonempty list")
        if any(kt <= 0 for kt in self.kts):
            raise ValueError("all kT values must be positive")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if self.encoded_bit not in (0, 1):
            raise ValueError("encoded_bit must be 0 or 1")

    def geometry_for(self, n_sites: int) -> Geometry:
        side = n_sites if self.dimension == 1 else math.isqrt(n_sites)
        return Geometry(self.dimension, side)

    def config_seed(self, n_sites: int, kT: float) -> int:
        ss = np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(self.dimension, n_sites, int(round(kT * 1000))),
        )
        return int(ss.generate_state(1, np.uint64)[0])

    def config_dir(self, n_sites: int, kT: float) -> Path:
        return self.out_dir / f"{self.dimension}D_N{n_sites}_kT{kT:g}"


# ---------------------------------------------------------------------------
# spec files (key=value)


def write_spec(spec: SweepSpec, path) -> None:
    lines = [
        f"dimension={spec.dimension}",
        "sizes=" + ",".join(str(n) for n in spec.sizes),
        "kts=" + ",".join(f"{kt:g}" for kt in spec.kts),
        f"out_dir={spec.out_dir}",
        f"ensemble_size={spec.ensemble_size}",
        f"tie_rule={spec.tie_rule.value}",
        f"master_seed={spec.master_seed}",
        f"encoded_bit={spec.encoded_bit}",
        f"coupling_j={spec.couplings.J!r}",
        f"field_h={spec.couplings.h!r}",
        f"n_time_points={spec.n_time_points}",
        f"t_max={'' if spec.t_max is None else repr(spec.t_max)}",
        f"step_cap={spec.step_cap}",
        f"fit_exponential={'true' if spec.fit_exponential else 'false'}",
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_spec(path, overrides: dict | None = None) -> SweepSpec:
    """Read a key=value spec file; `overrides` replace file values."""
    values: dict[str, str] = {}
    for ln, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {ln}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SweepSpec(
            dimension=int(values["dimension"]),
            sizes=[int(x) for x in str(values["sizes"]).split(",") if x],
            kts=[float(x) for x in str(values["kts"]).split(",") if x],
            out_dir=Path(values["out_dir"]),
            ensemble_size=int(values.get("ensemble_size", 1000)),
            tie_rule=TieRule(values.get("tie_rule", "random_choice")),
            master_seed=int(values.get("master_seed", 0)),
            encoded_bit=int(values.get("encoded_bit", 1)),
            couplings=Couplings(
                float(values.get("coupling_j", 1.0)), float(values.get("field_h", 0.0))
            ),
            n_time_points=int(values.get("n_time_points", 240)),
            t_max=float(values["t_max"]) if values.get("t_max") else None,
            step_cap=int(values.get("step_cap", DEFAULT_STEP_CAP)),
            fit_exponential=str(values.get("fit_exponential", "true")).lower() != "false",
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing required key {exc}") from None


# ---------------------------------------------------------------------------
# fit reports (key=value)


def _fit_lines(prefix: str, fit: ModelFit) -> list[str]:
    lines = [
        f"{prefix}.model={fit.model_kind.value}",
        f"{prefix}.lambda={fit.params.lam!r}",
        f"{prefix}.lambda_ci90={fit.lambda_ci90!r}",
    ]
    if fit.model_kind is ModelKind.GAUSSIAN_TWO_PARAM:
        lines += [
            f"{prefix}.n_eff={fit.params.n_eff!r}",
            f"{prefix}.n_eff_ci90={fit.n_eff_ci90!r}",
        ]
    lines += [
        f"{prefix}.chi2={fit.chi2!r}",
        f"{prefix}.dof={fit.dof}",
        f"{prefix}.n_points={fit.n_points}",
        f"{prefix}.converged={'true' if fit.converged else 'false'}",
        f"{prefix}.ci_method={fit.ci_method}",
        f"{prefix}.warnings={','.join(fit.warnings)}",
    ]
    return lines


def write_fit_report(
    path,
    curve_meta: dict[str, str],
    gaussian: ModelFit | None,
    exponential: ModelFit | None = None,
    error: str | None = None,
) -> None:
    lines = [f"curve.{k}={v}" for k, v in curve_meta.items()]
    if gaussian is not None:
        lines += _fit_lines("gaussian", gaussian)
    if exponential is not None:
        lines += _fit_lines("exponential", exponential)
    if error is not None:
        lines.append(f"error={error}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _fit_from_values(prefix: str, values: dict[str, str]) -> ModelFit | None:
    if f"{prefix}.lambda" not in values:
        return None
    kind = ModelKind(values[f"{prefix}.model"])
    gaussian = kind is ModelKind.GAUSSIAN_TWO_PARAM
    warn = values.get(f"{prefix}.warnings", "")
    return ModelFit(
        model_kind=kind,
        params=ModelParams(
            n_eff=float(values[f"{prefix}.n_eff"]) if gaussian else 1.0,
            lam=float(values[f"{prefix}.lambda"]),
        ),
        lambda_ci90=float(values[f"{prefix}.lambda_ci90"]),
        n_eff_ci90=float(values[f"{prefix}.n_eff_ci90"]) if gaussian else None,
        chi2=float(values[f"{prefix}.chi2"]),
        dof=int(values[f"{prefix}.dof"]),
        converged=values[f"{prefix}.converged"] == "true",
        ci_method=values.get(f"{prefix}.ci_method", ""),
        warnings=tuple(w for w in warn.split(",") if w),
        n_points=int(values.get(f"{prefix}.n_points", 0)),
    )


def parse_fit_report(path) -> tuple[ModelFit | None, ModelFit | None, str | None]:
    values: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or "=" not in line:
            continue
        key, _, value = line.partition("=")
        values[key] = value
    return (
        _fit_from_values("gaussian", values),
        _fit_from_values("exponential", values),
        values.get("error"),
    )


# ---------------------------------------------------------------------------
# sweep execution


@dataclass
class ConfigResult:
    dimension: int
    n_sites: int
    kT: float
    ensemble_size: int
    curve_path: Path
    gaussian: ModelFit | None
    exponential: ModelFit | None
    error: str | None = None
    truncated: bool = False


@dataclass
class SweepResult:
    spec: SweepSpec
    configs: list[ConfigResult]
    summary_path: Path

    @property
    def n_failed(self) -> int:
        return sum(1 for c in self.configs if c.error is not None)


def _run_one(spec: SweepSpec, n_sites: int, kT: float, cfg_dir: Path) -> ConfigResult:
    geometry = spec.geometry_for(n_sites)
    seed = spec.config_seed(n_sites, kT)
    times, truncated = auto_sample_times(
        geometry,
        spec.couplings,
        kT,
        spec.encoded_bit,
        seed,
        tie_rule=spec.tie_rule,
        n_points=spec.n_time_points,
        t_max=spec.t_max,
        step_cap=spec.step_cap,
    )
    config = TrajectoryConfig(
        geometry=geometry,
        couplings=spec.couplings,
        kT=kT,
        encoded_bit=spec.encoded_bit,
        master_seed=seed,
        sample_times=times,
    )
    curve = estimate_fidelity(config, spec.ensemble_size, spec.tie_rule)
    curve.truncated = truncated
    cfg_dir.mkdir(parents=True, exist_ok=True)
    curve_path = cfg_dir / "curve.dat"
    write_curve(curve, curve_path)

    gaussian = exponential = None
    error = None
    try:
        gaussian = fit_gaussian_model(curve)
        if spec.fit_exponential:
            exponential = fit_exponential_model(curve)
    except NoDecayError as exc:
        error = f"no_decay: {exc}"
    write_fit_report(cfg_dir / "fit.txt", curve_metadata(curve), gaussian, exponential, error)
    return ConfigResult(
        spec.dimension, n_sites, kT, spec.ensemble_size, curve_path,
        gaussian, exponential, error, truncated,
    )


def _load_existing(spec: SweepSpec, n_sites: int, kT: float, cfg_dir: Path) -> ConfigResult:
    curve_path = cfg_dir / "curve.dat"
    curve = read_curve(curve_path)
    gaussian, exponential, error = parse_fit_report(cfg_dir / "fit.txt")
    return ConfigResult(
        spec.dimension, n_sites, kT, curve.ensemble_size, curve_path,
        gaussian, exponential, error, curve.truncated,
    )


def run_sweep(spec: SweepSpec, force: bool = False) -> SweepResult:
    """Simulate, fit and persist every (N, kT) grid point, then aggregate.

    Grid points whose curve.dat and fit.txt already exist are loaded, not
    recomputed, unless `force` is set.  Per-configuration fit failures are
    recorded in the result rather than raised.
    """
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    spec_path = spec.out_dir / "sweep_config.txt"
    if force or not spec_path.exists():
        write_spec(spec, spec_path)
    results: list[ConfigResult] = []
    for n_sites in spec.sizes:
        for kT in spec.kts:
            cfg_dir = spec.config_dir(n_sites, kT)
            resumable = (cfg_dir / "curve.dat").exists() and (cfg_dir / "fit.txt").exists()
            if resumable and not force:
                log.info("skipping existing %s", cfg_dir.name)
                results.append(_load_existing(spec, n_sites, kT, cfg_dir))
                continue
            log.info("running %s (M=%d)", cfg_dir.name, spec.ensemble_size)
            try:
                results.append(_run_one(spec, n_sites, kT, cfg_dir))
            except (ValueError, RuntimeError) as exc:
                log.error("config %s failed: %s", cfg_dir.name, exc)
                results.append(ConfigResult(
                    spec.dimension, n_sites, kT, spec.ensemble_size,
                    cfg_dir / "curve.dat", None, None, f"{type(exc).__name__}: {exc}",
                ))
    summary_path = spec.out_dir / "summary.tsv"
    _write_summary(summary_path, results)
    return SweepResult(spec, results, summary_path)


@dataclass
class SummaryRow:
    """One line of summary.tsv: a fitted (dimension, N, kT) grid point."""

    dim: int
    n_sites: int
    kT: float
    ensemble_size: int
    lam: float
    lam_ci: float
    n_eff: float
    n_eff_ci: float
    chi2: float
    dof: int
    converged: bool


def _write_summary(path: Path, results: list[ConfigResult]) -> None:
    lines = ["\t".join(_SUMMARY_COLUMNS)]
    for r in results:
        if r.gaussian is None:
            continue
        g = r.gaussian
        lines.append("\t".join((
            str(r.dimension), str(r.n_sites), _sci(r.kT), str(r.ensemble_size),
            _sci(g.params.lam), _sci(g.lambda_ci90), _sci(g.params.n_eff),
            _sci(g.n_eff_ci90 if g.n_eff_ci90 is not None else 0.0),
            _sci(g.chi2), str(g.dof), "true" if g.converged else "false",
        )))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_summary(path) -> list[SummaryRow]:
    rows = []
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0].split("\t") != list(_SUMMARY_COLUMNS):
        raise ValueError(f"{path}: not a summary.tsv file (bad header)")
    for ln, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(_SUMMARY_COLUMNS):
            raise ValueError(f"{path}: line {ln}: expected {len(_SUMMARY_COLUMNS)} columns")
        rows.append(SummaryRow(
            dim=int(parts[0]), n_sites=int(parts[1]), kT=float(parts[2]),
            ensemble_size=int(parts[3]), lam=float(parts[4]), lam_ci=float(parts[5]),
            n_eff=float(parts[6]), n_eff_ci=float(parts[7]), chi2=float(parts[8]),
            dof=int(parts[9]), converged=parts[10] == "true",
        ))
    return rows


# ---------------------------------------------------------------------------
# scaling analyses


@dataclass
class LambdaVsNRow:
    dim: int
    kT: float
    fit: LinearFit  # lambda vs N, free intercept
    slope_consistent_with_zero: bool
    classification: ScalingClassification | None  # requires >= 4 sizes


@dataclass
class NeffVsNRow:
    dim: int
    kT: float
    proportional: LinearFit  # through-origin m fit of n_eff vs N
    free: LinearFit


@dataclass
class ParamsVsTRow:
    dim: int
    n_sites: int
    kT: float
    lam: float
    lam_ci: float
    n_eff: float
    n_eff_ci: float


@dataclass
class ScalingReport:
    lambda_vs_n: list[LambdaVsNRow]
    neff_vs_n: list[NeffVsNRow]
    params_vs_t: list[ParamsVsTRow]


def scaling_report(rows: list[SummaryRow], out_dir=None) -> ScalingReport:
    """Size and temperature trends of the fitted parameters.

    Produces, per temperature with at least two sizes: a weighted line of
    lambda against N with its zero-slope verdict, the exponential/power
    classification when four or more sizes are present, and the
    proportional and free fits of n_eff against N.  Per size, the fitted
    parameters are tabulated against temperature.  Rows with failed or
    zero-width fits are used as-is; errors enter as 1-sigma = ci90 / Z90.
    """
    if not rows:
        raise ValueError("scaling_report requires at least one summary row")
    report = ScalingReport([], [], [])
    temps = sorted({(r.dim, r.kT) for r in rows})
    for dim, kT in temps:
        group = sorted((r for r in rows if (r.dim, r.kT) == (dim, kT)),
                       key=lambda r: r.n_sites)
        if len(group) < 2:
            continue
        ns = np.array([r.n_sites for r in group], dtype=np.float64)
        lams = np.array([r.lam for r in group])
        lam_err = np.array([max(r.lam_ci / Z90, 1e-300) for r in group])
        neffs = np.array([r.n_eff for r in group])
        neff_err = np.array([max(r.n_eff_ci / Z90, 1e-300) for r in group])
        lam_line = fit_linear(ns, lams, lam_err)
        classification = None
        if len(group) >= 4 and np.all(lams > 0):
            classification = classify_lambda_scaling(ns, lams, lam_err)
        report.lambda_vs_n.append(LambdaVsNRow(
            dim, kT, lam_line,
            abs(lam_line.slope) <= lam_line.slope_ci90,
            classification,
        ))
        report.neff_vs_n.append(NeffVsNRow(
            dim, kT,
            fit_linear(ns, neffs, neff_err, through_origin=True),
            fit_linear(ns, neffs, neff_err),
        ))
    sizes = sorted({(r.dim, r.n_sites) for r in rows})
    for dim, n_sites in sizes:
        group = sorted((r for r in rows if (r.dim, r.n_sites) == (dim, n_sites)),
                       key=lambda r: r.kT)
        if len(group) < 2:
            continue
        for r in group:
            report.params_vs_t.append(ParamsVsTRow(
                dim, n_sites, r.kT, r.lam, r.lam_ci, r.n_eff, r.n_eff_ci,
            ))
    if out_dir is not None:
        _write_report_tables(Path(out_dir), report)
    return report


def _write_report_tables(out_dir: Path, report: ScalingReport) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["\t".join((
        "dim", "kT", "slope", "slope_ci90", "intercept", "chi2", "dof",
        "zero_slope_90", "scaling_verdict", "delta_chi2",
    ))]
    for row in report.lambda_vs_n:
        cls = row.classification
        lines.append("\t".join((
            str(row.dim), _sci(row.kT), _sci(row.fit.slope), _sci(row.fit.slope_ci90),
            _sci(row.fit.intercept), _sci(row.fit.chi2), str(row.fit.dof),
            "true" if row.slope_consistent_with_zero else "false",
            cls.verdict.value if cls else "",
            _sci(cls.delta_chi2) if cls else "",
        )))
    (out_dir / "lambda_vs_n.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["\t".join((
        "dim", "kT", "m", "m_ci90", "m_chi2", "free_slope", "free_slope_ci90",
        "free_intercept", "free_chi2", "dof",
    ))]
    for row in report.neff_vs_n:
        lines.append("\t".join((
            str(row.dim), _sci(row.kT), _sci(row.proportional.slope),
            _sci(row.proportional.slope_ci90), _sci(row.proportional.chi2),
            _sci(row.free.slope), _sci(row.free.slope_ci90),
            _sci(row.free.intercept), _sci(row.free.chi2), str(row.free.dof),
        )))
    (out_dir / "neff_vs_n.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["\t".join(("dim", "N", "kT", "lambda", "lambda_ci", "n_eff", "n_eff_ci"))]
    for row in report.params_vs_t:
        lines.append("\t".join((
            str(row.dim), str(row.n_sites), _sci(row.kT), _sci(row.lam),
            _sci(row.lam_ci), _sci(row.n_eff), _sci(row.n_eff_ci),
        )))
    (out_dir / "params_vs_t.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
