"""Figure rendering for command-line reports.

Everything draws through the Agg backend straight to files; importing this
module never requires a display.  Figures accompany the delimited outputs,
they are not the record: every number shown here is also in the JSON or CSV
next to it.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "fig_trajectory",
    "fig_count_steps",
    "fig_split_moduli",
    "fig_multipliers",
    "fig_transversality",
]

_DPI = 110


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def fig_trajectory(times, states, path, title: str = "trajectory") -> Path:
    times = np.asarray(times, dtype=float)
    states = np.atleast_2d(np.asarray(states, dtype=float))
    fig, ax = plt.subplots(figsize=(7.2, 3.6))
    for i in range(states.shape[1]):
        ax.plot(times, states[:, i], lw=1.0, label=f"x{i + 1}")
    ax.set_xlabel("t")
    ax.set_ylabel("state")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8, ncol=min(4, states.shape[1]))
    ax.grid(alpha=0.3)
    return _save(fig, path)


def fig_count_steps(samples, path, title: str = "sign count along the flow") -> Path:
    """Staircase of the count at exact instants; open markers where inexact."""
    times = np.array([t for t, _ in samples])
    lower = np.array([b.lower for _, b in samples])
    upper = np.array([b.upper for _, b in samples])
    exact = lower == upper
    fig, ax = plt.subplots(figsize=(7.2, 3.0))
    if np.any(exact):
        ax.step(times[exact], lower[exact], where="post", lw=1.4)
    if np.any(~exact):
        ax.vlines(times[~exact], lower[~exact], upper[~exact], color="tab:red", lw=1.0)
        ax.plot(times[~exact], lower[~exact], "v", color="tab:red", ms=4)
        ax.plot(times[~exact], upper[~exact], "^", color="tab:red", ms=4)
    ax.set_xlabel("t")
    ax.set_ylabel("N")
    ax.set_title(title)
    top = int(upper.max()) if upper.size else 1
    ax.set_yticks(range(0, top + 2))
    ax.grid(alpha=0.3)
    return _save(fig, path)


def fig_split_moduli(split_obj, path, title: str = "eigenvalue moduli by block") -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for level, (nu, mu) in enumerate(split_obj.moduli, start=1):
        block_vals = [
            abs(ev)
            for ev in split_obj.eigenvalues
            if mu * (1 - 1e-12) <= abs(ev) <= nu * (1 + 1e-12)
        ]
        ax.scatter([level] * len(block_vals), block_vals, s=26, zorder=3)
    for level, (nu, mu) in enumerate(split_obj.moduli[:-1], start=1):
        boundary = np.sqrt(mu * split_obj.moduli[level][0])
        ax.axhline(boundary, color="gray", ls=":", lw=0.8)
    ax.set_yscale("log")
    ax.set_xticks(range(1, split_obj.levels + 1))
    ax.set_xlabel("block")
    ax.set_ylabel("|eigenvalue|")
    ax.set_title(title)
    ax.grid(alpha=0.3, which="both")
    return _save(fig, path)


def fig_multipliers(multipliers, path, title: str = "Floquet multipliers") -> Path:
    multipliers = np.asarray(multipliers, dtype=complex)
    fig, ax = plt.subplots(figsize=(4.6, 4.6))
    theta = np.linspace(0, 2 * np.pi, 256)
    ax.plot(np.cos(theta), np.sin(theta), color="gray", lw=0.8)
    ax.scatter(multipliers.real, multipliers.imag, s=42, zorder=3)
    for mult in multipliers:
        ax.annotate(
            f"{abs(mult):.3g}",
            (mult.real, mult.imag),
            textcoords="offset points",
            xytext=(6, 4),
            fontsize=8,
        )
    limit = max(1.2, float(np.max(np.abs(multipliers))) * 1.15)
    ax.set_xlim(-limit, limit)
    ax.set_ylim(-limit, limit)
    ax.set_aspect("equal")
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def fig_transversality(rep, path, title: str = "connection and transversality") -> Path:
    """Approach record on the left, stacked-basis singular values on the right."""
    fig, (left, right) = plt.subplots(
        1, 2, figsize=(9.6, 3.6), gridspec_kw={"width_ratios": [2.2, 1.0]}
    )
    record = rep.connection.approach
    if record is not None:
        left.semilogy(record.times, record.to_source, lw=1.1, label="to source")
        left.semilogy(record.times, record.to_target, lw=1.1, label="to target")
        left.legend(fontsize=8)
    left.set_xlabel("t along connection")
    left.set_ylabel("distance to set")
    left.set_title("approach record")
    left.grid(alpha=0.3, which="both")

    stacked = np.hstack([rep.unstable_basis, rep.stable_basis])
    svals = np.linalg.svd(stacked, compute_uv=False)
    right.bar(range(1, len(svals) + 1), svals, color="tab:blue")
    right.axhline(1e-3, color="tab:red", ls="--", lw=1.0, label="decision threshold")
    right.set_yscale("log")
    right.set_xlabel("singular value index")
    right.set_title(f"verdict: {rep.verdict}")
    right.legend(fontsize=8)
    right.grid(alpha=0.3, which="both")
    fig.suptitle(title)
    return _save(fig, path)
