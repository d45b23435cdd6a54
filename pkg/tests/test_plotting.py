"""Tests for trend and loss figures."""

import pytest

plt = pytest.importorskip("matplotlib.pyplot")

from cti_graph_toolkit.plotting import (  # noqa: E402
    colorblind_palette,
    plot_loss_trace,
    plot_trends,
    save_figure,
    top_techniques,
)
from cti_graph_toolkit.ttp.trends import trend_analysis  # noqa: E402


@pytest.fixture
def report():
    observations = [
        ("Malware:A", "T1636", 2019),
        ("Malware:A", "T1406", 2019),
        ("Malware:B", "T1636", 2020),
        ("Malware:C", "T1417", 2020),
        ("Malware:A", "T1636", 2021),
        ("Malware:A", "T1417", 2021),
        ("Malware:D", "T1636", 2021),
    ]
    return trend_analysis(observations)


class TestPalette:

    def test_length(self):
        assert len(colorblind_palette(3)) == 3
        assert colorblind_palette(0) == []

    def test_cycles(self):
        """Colors repeat after eight."""
        colors = colorblind_palette(10)
        assert colors[8] == colors[0]


class TestTrendPlot:

    def test_top_techniques(self, report):
        """The most frequent technique comes first."""
        assert top_techniques(report, n=1) == ["T1636"]

    def test_one_line_per_technique(self, report):
        """Each requested technique is drawn once."""
        fig = plot_trends(report, ["T1636", "T1417"])
        ax = fig.axes[0]
        assert [line.get_label() for line in ax.get_lines()] == ["T1636", "T1417"]
        assert list(ax.get_lines()[0].get_xdata()) == report.years
        plt.close(fig)

    def test_default_techniques(self, report):
        """Without a selection the top techniques are drawn."""
        fig = plot_trends(report)
        assert len(fig.axes[0].get_lines()) == 3
        plt.close(fig)

    def test_existing_axes(self, report):
        """Drawing into given axes reuses their figure."""
        fig, ax = plt.subplots()
        assert plot_trends(report, ["T1406"], ax=ax) is fig
        plt.close(fig)


class TestLossPlot:

    def test_log_scale(self):
        fig = plot_loss_trace([0.7, 0.3, 0.1])
        ax = fig.axes[0]
        assert ax.get_yscale() == "log"
        assert len(ax.get_lines()[0].get_xdata()) == 3
        plt.close(fig)


class TestSaveFigure:

    def test_formats(self, tmp_path):
        """One file per format, named after the base path."""
        fig = plot_loss_trace([0.5, 0.2])
        paths = save_figure(fig, tmp_path / "figs" / "loss", formats=("png", "pdf"))
        assert [p.name for p in paths] == ["loss.png", "loss.pdf"]
        assert all(p.stat().st_size > 0 for p in paths)
        plt.close(fig)
