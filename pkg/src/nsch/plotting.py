"""Figures written next to the CSV outputs (Agg backend, PNG)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 120,
}


def _col(records, name):
    return np.array([getattr(r, name) for r in records], dtype=float)


def energy_figure(records, path) -> Path:
    """Energy, dissipation and the audit defect against time."""
    t = _col(records, "time")
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(6.0, 7.0), sharex=True)
        axes[0].plot(t, _col(records, "E_eps"), color="k")
        axes[0].set_ylabel("E_eps")
        axes[1].semilogy(t[1:], np.maximum(_col(records, "visc_dissipation")[1:], 1e-300), label="viscous")
        axes[1].semilogy(t[1:], np.maximum(_col(records, "mu_dissipation")[1:], 1e-300), label="|grad mu|^2")
        axes[1].set_ylabel("dissipation rate")
        axes[1].legend()
        tol = _col(records, "energy_tol")[1:]
        defect = _col(records, "energy_defect")[1:]
        axes[2].plot(t[1:], defect, color="tab:red", label="defect")
        axes[2].plot(t[1:], tol, color="k", ls="--", lw=0.8, label="tolerance")
        pos = np.abs(np.concatenate([defect, tol]))
        pos = pos[pos > 0]
        axes[2].set_yscale("symlog", linthresh=float(np.min(pos)) if pos.size else 1e-12)
        axes[2].set_ylabel("energy defect")
        axes[2].legend()
        axes[2].set_xlabel("t")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def fields_figure(state, path) -> Path:
    """Density, concentration and velocity magnitude of one state."""
    g = state.grid
    rho = state.rho.values
    c = state.c.values
    u = state.u.components
    with plt.rc_context(STYLE):
        if g.dim == 1:
            x = g.cell_centers()[0]
            fig, axes = plt.subplots(3, 1, figsize=(6.0, 6.0), sharex=True)
            axes[0].plot(x, rho)
            axes[0].set_ylabel("rho")
            axes[1].plot(x, c)
            axes[1].set_ylabel("c")
            axes[2].plot(g.face_centers(0)[0], u[0])
            axes[2].set_ylabel("u")
            axes[2].set_xlabel("x")
        else:
            speed = np.sqrt(sum(g.cell_average(u[k], k) ** 2 for k in range(2)))
            fig, axes = plt.subplots(1, 3, figsize=(10.0, 3.4))
            ext = (0, g.lengths[0], 0, g.lengths[1])
            for ax, f, name in zip(axes, (rho, c, speed), ("rho", "c", "|u|")):
                im = ax.imshow(f.T, origin="lower", extent=ext, cmap="viridis")
                ax.set_title(name)
                fig.colorbar(im, ax=ax, shrink=0.8)
        fig.suptitle(f"t = {state.time:.4g}")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def sweep_figure(report, path) -> Path:
    from .sweep import NORMS

    eps = np.array([m.eps for m in report.members])
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(11.0, 3.4))
        for k in NORMS:
            axes[0].loglog(eps, [m.norms.get(k, np.nan) for m in report.members], "o-", label=k)
        axes[0].set_xlabel("eps")
        axes[0].set_title("uniform-estimate norms")
        axes[0].legend()
        axes[1].semilogx(eps, report.defect_scaled, "s-")
        axes[1].set_xlabel("eps")
        axes[1].set_title("defect * F''(1-eps)^2")
        d = [np.nan if x is None else x for x in report.deltas]
        if d:
            axes[2].semilogy(np.arange(1, len(d) + 1), np.maximum(d, 1e-300), "d-")
        axes[2].set_xlabel("i")
        axes[2].set_title("||c_i+1 - c_i|| in L2(0,T;L2)")
        for ax in axes[:2]:
            ax.invert_xaxis()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)
