"""Von Mises plasticity with linear isotropic hardening.

All routines are vectorized over a leading cell axis and work on full 3x3
tensors; 2D strains are embedded with zero out-of-plane components (plane
strain).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensors import I2, I4_dev, ElasticTensor, embed3

__all__ = [
    "Material",
    "CellState",
    "dev",
    "von_mises",
    "yield_function",
    "stress",
    "plas_imp",
    "plas_exp",
    "plastic_energy",
    "elastic_moduli",
]

ELASTIC_TOL = 1e-12


@dataclass(frozen=True)
class Material:
    """Elasto-plastic material.

    Parameters
    ----------
    E, nu : float
        Young's modulus and Poisson's ratio.
    sigma0 : float
        Initial yield stress.
    rho : float
        Density.
    hardening : {"linear", "perfect"}
        Perfect plasticity ignores ``Et``.
    Et : float
        Tangent modulus of the uniaxial curve after yield, ``0 <= Et < E``.
    """

    E: float
    nu: float
    sigma0: float = np.inf
    rho: float = 1.0
    hardening: str = "perfect"
    Et: float = 0.0

    def __post_init__(self):
        ElasticTensor(self.E, self.nu)
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.hardening not in ("linear", "perfect"):
            raise ValueError(f"unknown hardening {self.hardening!r}")
        if self.hardening == "linear" and not 0.0 <= self.Et < self.E:
            raise ValueError("Et must satisfy 0 <= Et < E")

    @property
    def elastic(self) -> ElasticTensor:
        return ElasticTensor(self.E, self.nu)

    @property
    def lam(self) -> float:
        return self.elastic.lam

    @property
    def mu(self) -> float:
        return self.elastic.mu

    @property
    def H(self) -> float:
        if self.hardening == "perfect":
            return 0.0
        return self.E * self.Et / (self.E - self.Et)

    @property
    def is_elastic(self) -> bool:
        return not np.isfinite(self.sigma0)


@dataclass
class CellState:
    """Per-cell plastic strain, cumulated plastic strain and stress."""

    eps_p: np.ndarray
    p: np.ndarray
    sigma: np.ndarray

    @classmethod
    def virgin(cls, n: int) -> "CellState":
        return cls(np.zeros((n, 3, 3)), np.zeros(n), np.zeros((n, 3, 3)))

    def copy(self) -> "CellState":
        return CellState(self.eps_p.copy(), self.p.copy(), self.sigma.copy())


def dev(A: np.ndarray) -> np.ndarray:
    return A - np.trace(A, axis1=-2, axis2=-1)[..., None, None] * I2 / 3.0


def _norm(A):
    return np.sqrt(np.einsum("...ij,...ij->...", A, A))


def von_mises(sigma: np.ndarray) -> np.ndarray:
    return np.sqrt(1.5) * _norm(dev(sigma))


def yield_function(sigma, p, mat: Material) -> np.ndarray:
    """phi = sqrt(3/2)|dev sigma| - (sigma0 + H p)."""
    return von_mises(np.asarray(sigma, float)) - (mat.sigma0 + mat.H * np.asarray(p, float))


def stress(eps, eps_p, mat: Material) -> np.ndarray:
    """sigma = lam tr(eps - eps_p) I + 2 mu (eps - eps_p), as 3x3 tensors."""
    e = embed3(np.asarray(eps, float)) - embed3(np.asarray(eps_p, float))
    tr = np.trace(e, axis1=-2, axis2=-1)[..., None, None]
    return mat.lam * tr * I2 + 2.0 * mat.mu * e


def _return_map(eps_p_old, p_old, eps_new, mat):
    sig_tr = stress(eps_new, eps_p_old, mat)
    s_tr = dev(sig_tr)
    ns = _norm(s_tr)
    q_tr = np.sqrt(1.5) * ns
    phi = q_tr - (mat.sigma0 + mat.H * p_old)
    plastic = phi > ELASTIC_TOL * mat.sigma0
    dp = np.where(plastic, phi / (3.0 * mat.mu + mat.H), 0.0)
    if np.any(plastic & (ns == 0)):
        raise FloatingPointError("plastic flow with zero deviatoric trial stress")
    safe = np.where(plastic, ns, 1.0)
    nhat = s_tr / safe[..., None, None]
    deps_p = (np.sqrt(1.5) * dp)[..., None, None] * nhat
    deps_p = np.where(plastic[..., None, None], deps_p, 0.0)
    eps_p_new = embed3(np.asarray(eps_p_old, float)) + deps_p
    sigma_new = sig_tr - 2.0 * mat.mu * deps_p
    return eps_p_new, p_old + dp, sigma_new, plastic, dp, q_tr, nhat


def plas_imp(eps_p_old, p_old, eps_old, eps_new, mat: Material):
    """Implicit radial return with consistent tangent.

    Parameters
    ----------
    eps_p_old, p_old : ndarray
        Converged plastic state, shapes (n, 3, 3) and (n,).
    eps_old : ndarray
        Previous total strain.  The closed-form return map for linear
        hardening depends on it only through the stored plastic state.
    eps_new : ndarray
        New total strain, (n, d, d).

    Returns
    -------
    eps_p_new, p_new, C_ep, sigma_new
        ``C_ep`` has shape (n, 3, 3, 3, 3).
    """
    del eps_old
    p_old = np.asarray(p_old, float)
    eps_p_new, p_new, sigma_new, plastic, dp, q_tr, nhat = _return_map(eps_p_old, p_old, eps_new, mat)
    mu, H = mat.mu, mat.H
    C = mat.elastic.tensor()
    n = p_new.shape
    Cep = np.broadcast_to(C, n + C.shape).copy()
    if np.any(plastic):
        q = q_tr[plastic]
        a = 6.0 * mu ** 2 * dp[plastic] / q
        b = 6.0 * mu ** 2 * (1.0 / (3.0 * mu + H) - dp[plastic] / q)
        N = nhat[plastic]
        Cep[plastic] = (C - a[:, None, None, None, None] * I4_dev
                        - b[:, None, None, None, None] * np.einsum("nij,nkl->nijkl", N, N))
    return eps_p_new, p_new, Cep, sigma_new


def plas_exp(eps_p_old, p_old, eps_new, mat: Material):
    """Explicit update with the flow direction taken at the trial stress.

    For von Mises with isotropic hardening the trial and final deviators
    are parallel, so the result coincides with :func:`plas_imp`.
    """
    eps_p_new, p_new, _, _, _, _, _ = _return_map(eps_p_old, np.asarray(p_old, float), eps_new, mat)
    return eps_p_new, p_new


def plastic_energy(p, volumes, mat: Material) -> float:
    """sum_c |c| (sigma0 p_c + H p_c^2 / 2)."""
    p = np.asarray(p, float)
    if mat.is_elastic:
        return 0.0
    return float(np.sum(volumes * (mat.sigma0 * p + 0.5 * mat.H * p ** 2)))


def elastic_moduli(mat: Material, n: int) -> np.ndarray:
    return np.broadcast_to(mat.elastic.tensor(), (n, 3, 3, 3, 3))

