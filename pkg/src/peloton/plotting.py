"""Figure rendering for benchmark curves.

One SVG per panel: empirical error rate versus alpha (with the y = alpha
target line) and mean interval width versus alpha. Methods whose interval
width adapts to the features are drawn dashed, the constant-width
resampling families solid.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .benchmark import BenchmarkCurve
from .conformal import method_catalog

_COLORS = plt.get_cmap("tab10").colors

FIGSIZE = (7.0, 4.4)


def _styles():
    adaptive = {d.method: d.adaptive for d in method_catalog()}
    order = [d.method for d in method_catalog()]
    styles = {}
    for i, method in enumerate(order):
        styles[method] = {
            "color": _COLORS[i % len(_COLORS)],
            "linestyle": "--" if adaptive[method] else "-",
        }
    return styles


def _plot_curves(curves, value, ylabel, title, out_path, target_line=False):
    styles = _styles()
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for curve in curves:
        alphas = curve.alphas
        values = [getattr(p, value) for p in curve.points]
        style = styles.get(curve.method, {"color": "black", "linestyle": "-"})
        ax.plot(alphas, values, label=curve.method, linewidth=1.6, **style)
    if target_line:
        alphas = curves[0].alphas
        ax.plot(alphas, alphas, color="0.4", linestyle=":", linewidth=1.2, label="target")
    ax.set_xlabel(r"significance $\alpha$")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8, ncol=2, frameon=False)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path


def render_benchmark_figures(
    curves: list[BenchmarkCurve], target_kind: str, out_dir
) -> list[str]:
    """Render the error-rate and interval-width panels as SVG files."""
    if not curves:
        raise ValueError("no curves to plot")
    os.makedirs(out_dir, exist_ok=True)
    paths = [
        _plot_curves(
            curves,
            "error_rate",
            "error rate",
            f"Interval error rate ({target_kind})",
            os.path.join(out_dir, f"error_rate_{target_kind}.svg"),
            target_line=True,
        ),
        _plot_curves(
            curves,
            "mean_width",
            f"mean interval width ({'km/h' if target_kind == 'speed' else 'W'})",
            f"Interval width ({target_kind})",
            os.path.join(out_dir, f"interval_width_{target_kind}.svg"),
        ),
    ]
    return paths
