"""
Plotting
========

Figures for technique trends and training curves.

Usage:
    >>> from cti_graph_toolkit.plotting import plot_trends, save_figure
    >>> fig = plot_trends(report, ["T1636", "T1406"])
    >>> save_figure(fig, "out/figures/trends")
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import matplotlib as mpl
import matplotlib.pyplot as plt
from cycler import cycler

from .ttp.trends import TrendReport

logger = logging.getLogger(__name__)

# Okabe-Ito order
_COLORBLIND = (
    "#0072B2", "#E69F00", "#009E73", "#CC79A7",
    "#56B4E9", "#D55E00", "#F0E442", "#000000",
)

_RASTER_FORMATS = frozenset({"png", "jpg", "jpeg", "tiff"})

TREND_RC = {
    "figure.figsize": (7.0, 3.5),
    "font.size": 8,
    "axes.labelsize": 8,
    "axes.titlesize": 9,
    "axes.linewidth": 0.6,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "lines.markersize": 3.5,
    "legend.fontsize": 7,
    "legend.frameon": False,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
}


def colorblind_palette(n: int = 8) -> List[str]:
    """``n`` colorblind-safe colors, cycling after eight."""
    if n < 1:
        return []
    return [_COLORBLIND[i % len(_COLORBLIND)] for i in range(n)]


def top_techniques(report: TrendReport, n: int = 5) -> List[str]:
    """Techniques with the largest summed normalized count over all years."""
    totals: dict = {}
    for year in report.years:
        for technique, share in report.normalized[year].items():
            totals[technique] = totals.get(technique, 0.0) + share
    return sorted(totals, key=lambda t: (-totals[t], t))[:n]


def plot_trends(
    report: TrendReport,
    techniques: Optional[Sequence[str]] = None,
    ax: Optional[plt.Axes] = None,
    title: str = "Normalized technique count per year",
) -> plt.Figure:
    """
    Line plot of normalized technique counts per year.

    Args:
        report: Output of ``trend_analysis``
        techniques: Techniques to draw (default: the five most frequent)
        ax: Axes to draw into (default: a new figure)
        title: Axes title

    Returns:
        The figure holding the plot
    """
    techniques = list(techniques) if techniques else top_techniques(report)
    with mpl.rc_context({**TREND_RC,
                         "axes.prop_cycle": cycler(color=colorblind_palette(len(techniques)))}):
        if ax is None:
            fig, ax = plt.subplots()
        else:
            fig = ax.figure
        years = report.years
        for technique in techniques:
            values = [v for _, v in report.series(technique)]
            ax.plot(years, values, marker="o", label=technique)
        ax.set_xlabel("Year")
        ax.set_ylabel("Normalized count")
        ax.set_title(title)
        if years:
            ax.set_xticks(years)
        if techniques:
            ax.legend(ncol=min(len(techniques), 4), loc="upper left")
        fig.tight_layout()
    return fig


def plot_loss_trace(loss_trace: Sequence[float], ax: Optional[plt.Axes] = None) -> plt.Figure:
    """Training loss per iteration on a log scale."""
    with mpl.rc_context(TREND_RC):
        if ax is None:
            fig, ax = plt.subplots(figsize=(3.5, 2.6))
        else:
            fig = ax.figure
        ax.plot(range(1, len(loss_trace) + 1), loss_trace, color=_COLORBLIND[0])
        ax.set_yscale("log")
        ax.set_xlabel("Iteration")
        ax.set_ylabel("Training loss")
        fig.tight_layout()
    return fig


def save_figure(
    fig: plt.Figure,
    filepath: Union[str, Path],
    formats: Sequence[str] = ("pdf", "png"),
    dpi: int = 300,
) -> List[Path]:
    """
    Save a figure once per format next to ``filepath`` (given without extension).

    Returns:
        Written paths, in ``formats`` order

    Example:
        >>> save_figure(fig, "out/trends")
        [PosixPath('out/trends.pdf'), PosixPath('out/trends.png')]
    """
    base = Path(filepath)
    base.parent.mkdir(parents=True, exist_ok=True)
    saved = []
    for fmt in formats:
        out = base.with_name(f"{base.name}.{fmt}")
        fig.savefig(out, dpi=dpi if fmt in _RASTER_FORMATS else None,
                    bbox_inches="tight", facecolor="white")
        saved.append(out)
        logger.info("saved %s", out)
    return saved
