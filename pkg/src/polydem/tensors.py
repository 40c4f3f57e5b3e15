"""Fourth-order tensor helpers shared by assembly and plasticity.

All tensors are 3D (3x3 or 3x3x3x3); 2D problems take the in-plane
block, which is the plane-strain restriction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["I2", "II", "I4_sym", "I4_dev", "isotropic", "ElasticTensor", "ddot", "to_matrix", "embed3"]

I2 = np.eye(3)
II = np.einsum("ij,kl->ijkl", I2, I2)
I4_sym = 0.5 * (np.einsum("ik,jl->ijkl", I2, I2) + np.einsum("il,jk->ijkl", I2, I2))
I4_dev = I4_sym - II / 3.0


def isotropic(lam: float, mu: float) -> np.ndarray:
    return lam * II + 2.0 * mu * I4_sym


def ddot(C: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """C : eps for batched tensors (..., 3, 3, 3, 3) and (..., 3, 3)."""
    return np.einsum("...ijkl,...kl->...ij", C, eps)


def to_matrix(C: np.ndarray, d: int) -> np.ndarray:
    """In-plane block of C as (..., d*d, d*d), row index i*d+j, column k*d+l."""
    Cd = C[..., :d, :d, :d, :d]
    return Cd.reshape(Cd.shape[:-4] + (d * d, d * d))


def embed3(A: np.ndarray) -> np.ndarray:
    """Pad (..., d, d) tensors with zeros to (..., 3, 3)."""
    d = A.shape[-1]
    if d == 3:
        return A
    out = np.zeros(A.shape[:-2] + (3, 3))
    out[..., :d, :d] = A
    return out


@dataclass(frozen=True)
class ElasticTensor:
    """Isotropic Hooke tensor from Young's modulus and Poisson's ratio."""

    E: float
    nu: float

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError("E must be positive")
        if not -1.0 < self.nu < 0.5:
            raise ValueError("nu must lie in (-1, 0.5)")

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1 + self.nu) * (1 - 2 * self.nu))

    @property
    def mu(self) -> float:
        return self.E / (2 * (1 + self.nu))

    @property
    def bulk(self) -> float:
        return self.E / (3 * (1 - 2 * self.nu))

    def tensor(self) -> np.ndarray:
        return isotropic(self.lam, self.mu)

    def matrix(self, d: int) -> np.ndarray:
        return to_matrix(self.tensor(), d)

    def scaled(self, factor: float) -> "ElasticTensor":
        return ElasticTensor(self.E * factor, self.nu)
