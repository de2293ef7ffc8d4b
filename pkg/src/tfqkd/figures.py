"""Figure rendering for the report paths.

Figures are a presentation convenience next to the delimited output;
the CSV and text reports remain the data contract. matplotlib is forced
to the Agg backend so rendering works headless.
"""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_BOUND_STYLE = {"plob": "k-", "srb": "m--", "tgw": "c--", "rci": "k:"}
_RATE_COLORS = {
    "tf_gllp": "tab:red",
    "pm": "tab:blue",
    "pmmdi": "tab:green",
    "npp_mc": "tab:olive",
    "sns_mc": "tab:orange",
}


def save_rate_curve_figure(points, path: str) -> None:
    """Render a rate-versus-distance sweep to an image file.

    ``points`` is the list from generate_rate_curve. Rates and bounds are
    drawn on a log scale; zero or infinite values are left out of their
    line.
    """
    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    dists = np.array([p.distance_km for p in points])

    def draw(name, values, style=None, color=None):
        vals = np.array(values, dtype=float)
        ok = np.isfinite(vals) & (vals > 0)
        if not np.any(ok):
            return
        if style:
            ax.plot(dists[ok], vals[ok], style, label=name, linewidth=1.2)
        else:
            ax.plot(dists[ok], vals[ok], color=color, label=name, linewidth=1.5)

    bound_names = points[0].bounds.keys() if points else ()
    for name in bound_names:
        draw(name, [p.bounds.get(name, math.nan) for p in points],
             style=_BOUND_STYLE.get(name, "k--"))
    rate_names = sorted({k for p in points for k in p.rates})
    for name in rate_names:
        draw(name, [p.rates.get(name, math.nan) for p in points],
             color=_RATE_COLORS.get(name))

    ax.set_yscale("log")
    ax.set_xlabel("distance (km)")
    ax.set_ylabel("secret key rate (bits per pulse)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_phase_histogram(residuals_by_mode: dict[str, np.ndarray], path: str) -> None:
    """Histogram of residual phases for each compensation mode."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for mode, residuals in residuals_by_mode.items():
        ax.hist(np.ravel(residuals), bins=60, histtype="step", density=True, label=mode)
    ax.set_xlabel("residual phase (rad)")
    ax.set_ylabel("density")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
