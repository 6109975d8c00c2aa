"""Figure rendering for fidelity-curve and scaling-sweep data files.

A thin, deterministic plotting layer over the simulator's documented text
outputs: fidelity curves with error bars and model overlays, binomial vs
Gaussian model comparisons, parameter-vs-size scaling plots, and
parameter-vs-temperature panels.
"""

from .io import Curve, FormatError, SummaryRow, read_curve, read_summary, read_table
from .plots import PlotJob, PlotKind, render

__version__ = "0.1.0"
