"""Figure rendering for the command-line report paths.

Every CLI command that writes delimited output also renders the matching
matplotlib figure next to it: log-log error curves for refinement studies,
biomarker curves and front trajectories for simulations.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]


def convergence_figure(tables, path, norm="energy"):
    """Error-vs-refinement curves, one line per (degree, species).

    ``tables`` maps a label (the fixed degree for h-refinement) to a
    RateTable.  h-mode plots are log-log against the mesh size with dashed
    reference slopes; p-mode plots are semilog against the degree.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    mode = next(iter(tables.values())).mode
    for k, (label, table) in enumerate(sorted(tables.items())):
        x = np.array([lv.label for lv in table.levels], dtype=float)
        color = _COLORS[k % len(_COLORS)]
        for species, style in (("c", "o-"), ("q", "s--")):
            err = table.errors(species, norm)
            name = f"p={label} {species}" if mode == "h" else species
            ax.plot(x, err, style, color=color, label=name, markersize=4)
        if mode == "h":
            p = table.levels[0].p
            ref = err[0] * (x / x[0]) ** p
            ax.plot(x, ref, ":", color=color, linewidth=1)
    if mode == "h":
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("mesh size h")
    else:
        ax.set_yscale("log")
        ax.set_xlabel("polynomial degree p")
    ax.set_ylabel(f"{norm} norm error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def biomarker_figure(series_list, path, crossing=None):
    """Biomarker curves per region; optional horizontal crossing level."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for k, series in enumerate(series_list):
        ax.plot(series.times, series.values, "-",
                color=_COLORS[k % len(_COLORS)], label=series.region)
    if crossing is not None:
        ax.axhline(crossing, color="gray", linestyle=":", linewidth=1)
    ax.set_xlabel("time (years)")
    ax.set_ylabel("misfolded fraction")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def front_figure(fit, expected_speed, path):
    """Measured front positions with the fitted and reference slopes."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    t = fit.times
    ax.plot(t, fit.positions, "o", markersize=3, label="front position")
    x0 = fit.positions[0] - fit.speed * t[0]
    ax.plot(t, x0 + fit.speed * t, "-",
            label=f"fit: {fit.speed:.3f} mm/yr")
    if expected_speed is not None:
        ax.plot(t, fit.positions[0] + expected_speed * (t - t[0]), "--",
                label=f"analytic minimum: {expected_speed:.3f} mm/yr")
    ax.set_xlabel("time (years)")
    ax.set_ylabel("position (mm)")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
