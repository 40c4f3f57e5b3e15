"""Report figures rendered to files with the Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["stress_strain", "energy_history", "convergence", "torque_angle"]

STYLE = {"figure.dpi": 120, "axes.grid": True, "grid.alpha": 0.3, "font.size": 10}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def stress_strain(path, strain, stress, reference=None) -> Path:
    """Mean axial stress against mean axial strain, with an optional
    analytic curve ``reference(strain)``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        ax.plot(strain, stress, "o", ms=4, label="computed")
        if reference is not None:
            e = np.linspace(0.0, max(np.max(strain), 1e-300), 200)
            ax.plot(e, reference(e), "k-", lw=1, label="analytic")
        ax.set_xlabel("strain")
        ax.set_ylabel("stress")
        ax.legend()
        return _save(fig, path)


def energy_history(path, ledger) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 3.6))
        t = ledger.column("t")
        for name in ("elastic", "kinetic", "plastic", "external"):
            ax.plot(t, ledger.column(name), label=name)
        ax.plot(t, ledger.column("imbalance"), "k--", label="imbalance")
        ax.set_xlabel("t")
        ax.set_ylabel("energy")
        ax.legend(fontsize=8)
        return _save(fig, path)


def convergence(path, dofs, l2, energy, d: int) -> Path:
    """Errors against dofs on log axes with reference slopes."""
    dofs = np.asarray(dofs, float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        ax.loglog(dofs, l2, "o-", label="L2 error")
        ax.loglog(dofs, energy, "s-", label="energy error")
        ref = l2[0] * (dofs / dofs[0]) ** (-2.0 / d)
        ax.loglog(dofs, ref, "k:", lw=1, label="h^2")
        ax.set_xlabel("dofs")
        ax.set_ylabel("error")
        ax.legend()
        return _save(fig, path)


def torque_angle(path, angle, torque, reference=None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        ax.plot(angle, torque, "o", ms=4, label="computed")
        if reference is not None:
            a = np.linspace(0.0, np.max(angle), 200)
            ax.plot(a, reference(a), "k-", lw=1, label="analytic")
        ax.set_xlabel("twist angle")
        ax.set_ylabel("torque")
        ax.legend()
        return _save(fig, path)
