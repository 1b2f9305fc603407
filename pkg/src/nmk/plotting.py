"""Static SVG figures for iteration traces and s-sweeps.

Quantities in a trace routinely fall below 1e-300, so every axis shows
log10 values on a linear scale instead of relying on matplotlib's log axes.
Output is byte-stable: fixed hash salt and no date metadata.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SVG_METADATA = {"Date": None, "Creator": "nmk"}


def _save(fig, path):
    with plt.rc_context({"svg.hashsalt": "nmk", "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)


def plot_trace(rows: list, path) -> None:
    """Residual against k with the ``theta_k^-4`` envelope.

    ``rows`` is the output of :func:`nmk.nash_moser.read_trace_csv`.
    """
    k = [r["k"] for r in rows]
    res = [r["log10_res_2d"] for r in rows]
    env = [-4 * r["log10_theta_k"] for r in rows]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot(k, res, "o-", color="C0", label=r"$\log_{10}\|\phi(u_k)\|_{2d}$")
    ax.plot(k, env, "s--", color="C3", label=r"$-4\log_{10}\theta_k$")
    ax.set_xlabel("k")
    ax.set_ylabel("log10")
    ax.set_xticks(k)
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def plot_sweep(table, path) -> None:
    """``||B_s(0)^-1||`` and ``theta0`` against s on log-log axes (log10 values)."""
    ls = np.log10([r.s for r in table.rows])
    lb = np.log10([r.B_inv_norm for r in table.rows])
    lt = np.array([r.theta0_log for r in table.rows])
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.8))
    for ax, y, slope, title in (
            (axes[0], lb, table.slope_B_inv, r"$\|B_s(0)^{-1}\|_{C^0}$"),
            (axes[1], lt, table.slope_theta0, r"$\theta_0(s)$")):
        ax.plot(ls, y, "o", color="C0")
        if len(ls) >= 2 and not math.isnan(slope):
            icpt = float(np.mean(y - slope * ls))
            xx = np.array([ls.min(), ls.max()])
            ax.plot(xx, icpt + slope * xx, "-", color="C1")
            ax.annotate(f"slope {slope:.4g}", xy=(0.05, 0.08), xycoords="axes fraction")
        ax.set_xlabel("log10 s")
        ax.set_ylabel("log10")
        ax.set_title(title)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
