"""Figures for benchmark result directories (written as PNG next to the CSV files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["render_all", "plot_sweep", "plot_heatmap", "plot_cross_section", "plot_time_domain"]


def _read(path) -> np.ndarray:
    return np.genfromtxt(path, delimiter=",", names=True)


def plot_sweep(outdir) -> Path:
    d = np.atleast_1d(_read(Path(outdir) / "sweep.csv"))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(d["r"], d["gamma_certified"], "o-", label="certified level")
    ax.semilogy(d["r"], d["hinf_total"], "s--", label="estimated error norm")
    ax.set_xlabel("reduced order r")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    path = Path(outdir) / "fig_sweep.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_heatmap(outdir) -> Path:
    d = _read(Path(outdir) / "heatmap.csv")
    w1, w2 = np.unique(d["omega1"]), np.unique(d["omega2"])
    Z = d["kerr_fro"].reshape(w1.size, w2.size)
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    mesh = ax.pcolormesh(w1, w2, Z.T, shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="||K_err||_F")
    ax.set_xlabel("omega_1")
    ax.set_ylabel("omega_2")
    path = Path(outdir) / "fig_heatmap.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_cross_section(outdir) -> Path:
    d = _read(Path(outdir) / "cross_section.csv")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    keep = d["omega2"] > 0
    ax.loglog(d["omega2"][keep], np.maximum(d["kerr_fro"][keep], 1e-300))
    ax.set_xlabel("omega_2  (omega_1 = 0)")
    ax.set_ylabel("||K_err||_F")
    ax.grid(True, which="both", alpha=0.3)
    path = Path(outdir) / "fig_cross_section.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_time_domain(outdir, signals: dict) -> Path | None:
    """``signals`` maps an input name to ``(y_fom, y_rom)`` signals."""
    if not signals:
        return None
    fig, axes = plt.subplots(len(signals), 1, figsize=(6, 2.2 * len(signals)), squeeze=False)
    for ax, (name, (y, yr)) in zip(axes[:, 0], signals.items()):
        err = np.linalg.norm(y.values - yr.values, axis=1)
        ax.semilogy(y.times, np.maximum(err, 1e-300))
        ax.set_title(name, fontsize=9)
        ax.set_ylabel("|y - y_r|")
    axes[-1, 0].set_xlabel("t")
    path = Path(outdir) / "fig_time_domain.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_all(outdir, signals: dict | None = None) -> list[Path]:
    paths = [plot_sweep(outdir), plot_heatmap(outdir), plot_cross_section(outdir),
             plot_time_domain(outdir, signals or {})]
    return [p for p in paths if p is not None]
