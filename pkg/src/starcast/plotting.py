"""Matplotlib renderings for the simulate / place-users / latency reports."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Circle  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}

FRAMEWORK_STYLE = {
    "unicast": dict(color="0.45", marker="s", ls=":"),
    "broadcast": dict(color="black", marker="^", ls="--"),
    "groupcast": dict(color="tab:red", marker="o", ls="-"),
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_coverage(scenario, path, reports=(), params=None, title=None) -> Path:
    """Users coloured by group plus the beam footprints from ``reports``.

    Passing one report per group draws every groupcast beam; the broadcast
    beam and one unicast beam come from the first report.
    """
    from .linksim import min_enclosing_circle

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 4.2))
        cmap = plt.get_cmap("tab20" if scenario.n_groups > 10 else "tab10")
        km = 1e-3
        for m in range(1, scenario.n_groups + 1):
            pts = [scenario.positions[i] for i in scenario.members(m)]
            if not pts:
                continue
            xs, ys = zip(*pts)
            ax.scatter([x * km for x in xs], [y * km for y in ys], s=8, color=cmap((m - 1) % cmap.N),
                       label=f"group {m}" if scenario.n_groups <= 8 else None, zorder=3)
        if reports:
            first = reports[0]
            bc = first["broadcast"]
            ax.add_patch(Circle((bc.beam_center[0] * km, bc.beam_center[1] * km), bc.beam_radius_m * km,
                                fill=False, color="black", lw=1.2))
            uc = first["unicast"]
            ax.add_patch(Circle((uc.beam_center[0] * km, uc.beam_center[1] * km), uc.beam_radius_m * km,
                                fill=True, color="0.6", alpha=0.5, lw=0))
            for rep in reports:
                gc = rep["groupcast"]
                ax.add_patch(Circle((gc.beam_center[0] * km, gc.beam_center[1] * km), gc.beam_radius_m * km,
                                    fill=False, color="tab:red", lw=0.9, ls="-"))
        else:
            (cx, cy), r = min_enclosing_circle(scenario.positions)
            ax.add_patch(Circle((cx * km, cy * km), r * km, fill=False, color="black", lw=1.0))
        lim = scenario.area_radius_m * km * 1.1
        ax.set_xlim(-lim, lim)
        ax.set_ylim(-lim, lim)
        ax.set_aspect("equal")
        ax.set_xlabel("x (km)")
        ax.set_ylabel("y (km)")
        ax.set_title(title or f"{scenario.n_users} users, {scenario.n_groups} groups")
        if scenario.n_groups <= 8:
            ax.legend(loc="upper right", frameon=False, markerscale=1.5)
        return _save(fig, path)


def plot_rate_sweep(sweep: Sequence, path, title=None) -> Path:
    """Legitimate-group sum rate against total users, one line per framework."""
    from .linksim import FRAMEWORKS

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.0))
        xs = [n for n, _ in sweep]
        for name in FRAMEWORKS:
            ys = [rep[name].sum_rate_bps / 1e9 for _, rep in sweep]
            ax.plot(xs, ys, label=name, ms=4, **FRAMEWORK_STYLE[name])
        ax.set_xlabel("number of users")
        ax.set_ylabel("sum rate of legitimate group (Gbps)")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_rates(report, path) -> Path:
    """Bar chart of one report's three sum rates."""
    from .linksim import FRAMEWORKS

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.4, 2.6))
        vals = [report[name].sum_rate_bps / 1e9 for name in FRAMEWORKS]
        ax.bar(FRAMEWORKS, vals, color=[FRAMEWORK_STYLE[n]["color"] for n in FRAMEWORKS])
        ax.set_ylabel("sum rate (Gbps)")
        ax.set_title(f"legitimate group {report.group}")
        return _save(fig, path)


def plot_latency(records, path, title=None) -> Path:
    samples = [r.rtt_ms for r in records if r.rtt_ms is not None]
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(6.4, 2.6))
        if samples:
            ax1.plot([r.seq for r in records if r.rtt_ms is not None], samples, lw=0.8, color="tab:blue")
            bins = max(10, int(math.sqrt(len(samples))))
            ax2.hist(samples, bins=bins, color="tab:blue", alpha=0.8)
        ax1.set_xlabel("probe sequence")
        ax1.set_ylabel("latency (ms)")
        ax2.set_xlabel("latency (ms)")
        ax2.set_ylabel("probes")
        if title:
            fig.suptitle(title)
        return _save(fig, path)
