"""Deterministic report files: CSV tables and SVG plots.

Floats are written with repr() so values round-trip bit-exactly, and the
SVG writer is pinned (fixed hash salt, no date metadata) so identical
inputs produce byte-identical files.  Every file carries the config hash.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "write_metrics_csv",
    "write_rollout_csv",
    "write_eigs_csv",
    "plot_rollout_svg",
    "plot_eigs_svg",
]


def _comment(config_hash: str | None) -> str:
    return f"# config_hash={config_hash}\n" if config_hash else ""


def write_metrics_csv(path, rows: list[tuple[str, float]], config_hash: str | None = None):
    """Two-column metric table; values via repr for exact round-trips."""
    with open(path, "w") as f:
        f.write(_comment(config_hash))
        f.write("metric,value\n")
        for name, value in rows:
            f.write(f"{name},{value!r}\n")


def write_rollout_csv(
    path,
    t: np.ndarray,
    preds: dict[str, np.ndarray],
    state_names: tuple[str, ...] = ("h1", "h2"),
    config_hash: str | None = None,
):
    """Prediction traces: time column plus one column per state per model.

    `preds` maps model name to an (n, N) array; all traces must share the
    length of t.  "truth" is emitted first when present.
    """
    names = sorted(preds)
    if "truth" in names:
        names.remove("truth")
        names.insert(0, "truth")
    N = t.shape[0]
    for name in names:
        if preds[name].shape != (len(state_names), N):
            raise ValueError(
                f"trace {name!r} has shape {preds[name].shape}, "
                f"expected {(len(state_names), N)}"
            )
    with open(path, "w") as f:
        f.write(_comment(config_hash))
        cols = ["t"] + [f"{s}_{name}" for name in names for s in state_names]
        f.write(",".join(cols) + "\n")
        for j in range(N):
            row = [repr(float(t[j]))]
            for name in names:
                row.extend(repr(float(preds[name][i, j])) for i in range(len(state_names)))
            f.write(",".join(row) + "\n")


def write_eigs_csv(
    path,
    eig_sets: dict[str, np.ndarray],
    config_hash: str | None = None,
):
    """Eigenvalue table: set name, index, real part, imaginary part."""
    with open(path, "w") as f:
        f.write(_comment(config_hash))
        f.write("set,index,re,im\n")
        for name in sorted(eig_sets):
            for i, lam in enumerate(np.asarray(eig_sets[name], dtype=np.complex128)):
                f.write(f"{name},{i},{float(lam.real)!r},{float(lam.imag)!r}\n")


def _deterministic_save(fig, path, config_hash: str | None):
    salt = config_hash or "delaykoop"
    with plt.rc_context({"svg.hashsalt": salt}):
        meta = {"Date": None}
        if config_hash:
            meta["Description"] = f"config_hash={config_hash}"
        fig.savefig(path, format="svg", metadata=meta)
    plt.close(fig)


def plot_rollout_svg(
    path,
    t: np.ndarray,
    preds: dict[str, np.ndarray],
    state_names: tuple[str, ...] = ("h1", "h2"),
    config_hash: str | None = None,
    max_points: int = 2000,
):
    """Stacked per-state prediction traces, downsampled for plotting."""
    stride = max(1, int(np.ceil(t.shape[0] / max_points)))
    sl = slice(None, None, stride)
    names = sorted(preds)
    if "truth" in names:
        names.remove("truth")
        names.insert(0, "truth")
    fig, axes = plt.subplots(
        len(state_names), 1, figsize=(8, 2.6 * len(state_names)), sharex=True
    )
    axes = np.atleast_1d(axes)
    for i, sname in enumerate(state_names):
        ax = axes[i]
        for name in names:
            style = {"lw": 1.6, "color": "black"} if name == "truth" else {"lw": 1.0}
            ax.plot(t[sl], preds[name][i, sl], label=name, **style)
        ax.set_ylabel(f"{sname} [m]")
        ax.grid(True, alpha=0.3)
    axes[0].legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("time [s]")
    fig.tight_layout()
    _deterministic_save(fig, path, config_hash)


def plot_eigs_svg(path, eig_sets: dict[str, np.ndarray], config_hash: str | None = None):
    """Eigenvalues in the complex plane against the unit circle."""
    fig, ax = plt.subplots(figsize=(5, 5))
    theta = np.linspace(0.0, 2.0 * np.pi, 361)
    ax.plot(np.cos(theta), np.sin(theta), color="gray", lw=0.8)
    markers = ["x", "o", "^", "s", "d"]
    for i, name in enumerate(sorted(eig_sets)):
        vals = np.asarray(eig_sets[name], dtype=np.complex128)
        ax.scatter(
            vals.real,
            vals.imag,
            marker=markers[i % len(markers)],
            s=45,
            facecolors="none" if markers[i % len(markers)] == "o" else None,
            label=name,
        )
    ax.axhline(0.0, color="gray", lw=0.5)
    ax.axvline(0.0, color="gray", lw=0.5)
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_aspect("equal")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    _deterministic_save(fig, path, config_hash)
