"""Parsers for the simulator's text outputs.

Two documented formats are consumed:

* curve files: '#'-prefixed key=value metadata header followed by
  tab-separated rows `t  F  sigma_F` (analytic tabulations carry the same
  shape with `exact=true` and optional `model*` keys);
* summary.tsv: tab-separated with header
  dim N kT M lambda lambda_ci n_eff n_eff_ci chi2 dof converged,
  plus the report tables (lambda_vs_n.tsv / neff_vs_n.tsv) whose rows are
  read generically by column name.

Parsing is strict: malformed content raises FormatError carrying the
offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["FormatError", "Curve", "SummaryRow", "read_curve", "read_summary", "read_table"]

CURVE_FORMAT_TAG = "ising_fidelity_curve_v1"

SUMMARY_COLUMNS = (
    "dim", "N", "kT", "M", "lambda", "lambda_ci", "n_eff", "n_eff_ci",
    "chi2", "dof", "converged",
)


class FormatError(ValueError):
    """Input file does not match its documented format."""

    def __init__(self, path, line_number: int, message: str):
        super().__init__(f"{path}: line {line_number}: {message}")
        self.path = str(path)
        self.line_number = line_number


@dataclass
class Curve:
    """One parsed curve file."""

    times: np.ndarray
    fidelity: np.ndarray
    sigma: np.ndarray
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def exact(self) -> bool:
        return self.metadata.get("exact") == "true"

    @property
    def model(self) -> str | None:
        return self.metadata.get("model")

    def label(self) -> str:
        meta = self.metadata
        if self.model:
            parts = [self.model]
            if "model_n_eff" in meta:
                parts.append(f"n_eff={float(meta['model_n_eff']):g}")
            if "model_lambda" in meta:
                parts.append(f"lambda={float(meta['model_lambda']):g}")
            return ", ".join(parts)
        bits = []
        if "dimension" in meta and "side_length" in meta:
            n = int(meta["side_length"]) ** int(meta["dimension"])
            bits.append(f"{meta['dimension']}D N={n}")
        if "kT" in meta:
            bits.append(f"kT={float(meta['kT']):g}")
        if "ensemble_size" in meta and meta.get("ensemble_size") not in ("0", None):
            bits.append(f"M={meta['ensemble_size']}")
        return ", ".join(bits) if bits else "curve"


def read_curve(path) -> Curve:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    meta: dict[str, str] = {}
    rows: list[tuple[float, float, float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(path, ln, f"expected 3 tab-separated columns, got {len(parts)}")
            try:
                rows.append(tuple(float(x) for x in parts))
            except ValueError:
                raise FormatError(path, ln, f"non-numeric value in {line!r}") from None
    if meta.get("format") != CURVE_FORMAT_TAG:
        raise FormatError(path, 1, f"missing or unknown curve format tag {meta.get('format')!r}")
    if not rows:
        raise FormatError(path, 1, "curve has no data rows")
    arr = np.array(rows)
    return Curve(times=arr[:, 0], fidelity=arr[:, 1], sigma=arr[:, 2], metadata=meta)


@dataclass
class SummaryRow:
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


def read_summary(path) -> list[SummaryRow]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].split("\t") != list(SUMMARY_COLUMNS):
        raise FormatError(path, 1, "not a summary.tsv header")
    rows = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(SUMMARY_COLUMNS):
            raise FormatError(path, ln, f"expected {len(SUMMARY_COLUMNS)} columns, got {len(parts)}")
        try:
            rows.append(SummaryRow(
                dim=int(parts[0]), n_sites=int(parts[1]), kT=float(parts[2]),
                ensemble_size=int(parts[3]), lam=float(parts[4]), lam_ci=float(parts[5]),
                n_eff=float(parts[6]), n_eff_ci=float(parts[7]), chi2=float(parts[8]),
                dof=int(parts[9]), converged=parts[10] == "true",
            ))
        except ValueError:
            raise FormatError(path, ln, "non-numeric field") from None
    if not rows:
        raise FormatError(path, 1, "summary has no data rows")
    return rows


def read_table(path) -> list[dict[str, str]]:
    """Generic header-keyed TSV reader for the scaling report tables."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or "\t" not in lines[0]:
        raise FormatError(path, 1, "missing tab-separated header")
    header = lines[0].split("\t")
    rows = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(header):
            raise FormatError(path, ln, f"expected {len(header)} columns, got {len(parts)}")
        rows.append(dict(zip(header, parts)))
    return rows
