"""Static SVG figures of feasible regions, backbones and storage trajectories."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_open  # noqa: E402

golden = (math.sqrt(5) - 1) / 2
fig_width = 5.0

STYLE = {
    "axes.labelsize": 10,
    "font.size": 9,
    "font.family": "serif",
    "mathtext.fontset": "stix",
    "legend.fontsize": 8,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "figure.figsize": [fig_width, fig_width * golden],
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "svg.hashsalt": "spsa",
}


def _save(fig, path):
    with atomic_open(path, "wb") as fh:
        fig.savefig(fh, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)


def pareto_regions(front, path, title=None):
    """Filled ``(1/tau_s, tau_r)`` feasible region per resistance scaling.

    Larger ``R`` values are drawn last so nested regions stay visible.
    """
    grid = front.grid()
    x = front.tau_s_inv
    order = np.argsort(x)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        colors = plt.cm.viridis(np.linspace(0.15, 0.85, len(front.R_scales)))
        for i in np.argsort(front.R_scales):
            y = np.nan_to_num(grid[i, order], nan=0.0)
            ax.fill_between(x[order], 0, y, step=None, alpha=0.55, color=colors[i],
                            label=f"R = {front.R_scales[i]:g} x R0")
            ax.plot(x[order], y, color=colors[i])
        ax.set_xlabel(r"$\tau_s^{-1}$ [1/s]")
        ax.set_ylabel(r"max $\tau_r$ [s]")
        ax.set_ylim(bottom=0)
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        _save(fig, path)


def backbones(curves: dict, path, title=None):
    """Backbone corner points per resistance, with each rectangle drawn faintly.

    ``curves`` maps a label (e.g. the resistance) to a list of backbone points.
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for (label, pts), color in zip(curves.items(), plt.cm.plasma(np.linspace(0.1, 0.8, len(curves)))):
            good = [p for p in pts if np.isfinite(p.tau_r_max) and p.tau_r_max > 0]
            if not good:
                continue
            xs = np.array([p.tau_s_inv_max for p in good])
            ys = np.array([p.tau_r_max for p in good])
            for xv, yv in zip(xs, ys):
                ax.add_patch(plt.Rectangle((0, 0), xv, yv, fill=False, lw=0.4,
                                           ec=color, alpha=0.4))
            ax.plot(xs, ys, "o-", color=color, label=str(label))
        ax.set_xlabel(r"max $\tau_s^{-1}$ [1/s]")
        ax.set_ylabel(r"max $\tau_r$ [s]")
        ax.set_xlim(left=0)
        ax.set_ylim(bottom=0)
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        _save(fig, path)


def trajectory(traj, path):
    """Stored energy and power flows of one simulation; choke marked if present."""
    with plt.rc_context(STYLE | {"figure.figsize": [fig_width, fig_width * 0.9]}):
        fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True)
        ax1.plot(traj.t, traj.E_s, color="k")
        ax1.set_ylabel(r"$E_s$ [J]")
        ax2.plot(traj.t, traj.P_e, label=r"$P_e$")
        ax2.plot(traj.t, traj.P_s, "--", label=r"$P_s$")
        ax2.set_ylabel("power [W]")
        ax2.set_xlabel("t [s]")
        if traj.choke is not None:
            for ax in (ax1, ax2):
                ax.axvline(traj.choke[0], color="r", lw=0.8)
            ax1.annotate("choke", (traj.choke[0], traj.choke[1]), color="r",
                         textcoords="offset points", xytext=(4, 4))
        ax2.legend(frameon=False)
        _save(fig, path)


def storage_power_curve(E_s, loss, path, points=400):
    """``P_s`` against ``P_e`` up to the choke bound ``E_s/(2 tau_r)``."""
    from .energy import storage_power

    top = E_s / (2 * loss.tau_r) if 0 < loss.tau_r < math.inf else E_s
    pe = np.linspace(-top, top, points)
    ps = np.array([storage_power(E_s, p, loss) for p in pe])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(pe, ps, label=r"$P_s$")
        ax.plot(pe, pe, ":", color="gray", label=r"$P_s = P_e$")
        ax.set_xlabel(r"$P_e$ [W]")
        ax.set_ylabel(r"$P_s$ [W]")
        ax.legend(frameon=False)
        _save(fig, path)
