"""Closed-form reference solutions for the benchmark cases."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plasticity import Material, von_mises

__all__ = ["Manufactured2D", "TractionBar", "TorsionBeam", "ThickCylinder", "get_case"]


@dataclass(frozen=True)
class Manufactured2D:
    """u = a/2 (x^2 + y^2)(e_x + e_y) on (-1/2, 1/2)^2, plane strain."""

    a: float = 0.8
    E: float = 70e3
    nu: float = 0.3

    @property
    def material(self) -> Material:
        return Material(self.E, self.nu)

    def displacement(self, x, t=0.0):
        x = np.atleast_2d(x)
        s = 0.5 * self.a * (x[:, 0] ** 2 + x[:, 1] ** 2)
        return np.column_stack([s, s])

    def gradient(self, x):
        x = np.atleast_2d(x)
        g = np.empty((len(x), 2, 2))
        g[:, :, 0] = self.a * x[:, [0]]
        g[:, :, 1] = self.a * x[:, [1]]
        return g

    def body_force(self, x, t=0.0):
        m = self.material
        f = -self.a * (m.lam + 3.0 * m.mu)
        return np.full((len(np.atleast_2d(x)), 2), f)


@dataclass(frozen=True)
class TractionBar:
    """Uniaxial bar in tension with bilinear hardening."""

    E: float = 70e3
    nu: float = 0.3
    sigma0: float = 250.0
    Et: float = 70e3 / 5
    length: float = 1.0

    @property
    def material(self) -> Material:
        return Material(self.E, self.nu, self.sigma0, hardening="linear", Et=self.Et)

    @property
    def yield_strain(self) -> float:
        return self.sigma0 / self.E

    @property
    def yield_displacement(self) -> float:
        return self.yield_strain * self.length

    def stress(self, strain):
        e = np.asarray(strain, float)
        ey = self.yield_strain
        return np.where(e <= ey, self.E * e, self.sigma0 + self.Et * (e - ey))


@dataclass(frozen=True)
class TorsionBeam:
    """Twisted circular bar, perfectly plastic, fixed at z = 0."""

    E: float = 70e3
    nu: float = 0.3
    sigma0: float = 250.0
    radius: float = 0.05
    length: float = 0.2

    @property
    def material(self) -> Material:
        return Material(self.E, self.nu, self.sigma0, hardening="perfect")

    @property
    def mu(self) -> float:
        return self.material.mu

    @property
    def yield_angle(self) -> float:
        return self.sigma0 * self.length / (self.mu * self.radius * np.sqrt(3.0))

    @property
    def tau_yield(self) -> float:
        # pure shear reaches the von Mises surface at sigma0 / sqrt(3)
        return self.sigma0 / np.sqrt(3.0)

    def displacement(self, x, alpha):
        x = np.atleast_2d(x)
        k = alpha * x[:, 2] / self.length
        return np.column_stack([-k * x[:, 1], k * x[:, 0], np.zeros(len(x))])

    def end_displacement(self, x, alpha):
        """Rigid rotation of the section by ``alpha``, linearized: alpha r e_theta."""
        x = np.atleast_2d(x)
        return np.column_stack([-alpha * x[:, 1], alpha * x[:, 0], np.zeros(len(x))])

    def tau(self, r, alpha):
        r = np.asarray(r, float)
        return np.minimum(self.mu * alpha * r / self.length, self.tau_yield)

    def torque(self, alpha):
        """Torque transmitted by the section for twist angle ``alpha``."""
        alpha = np.asarray(alpha, float)
        R, L, mu = self.radius, self.length, self.mu
        rho = np.minimum(R, np.where(alpha > 0, R * self.yield_angle / np.maximum(alpha, 1e-300), R))
        elastic = 2 * np.pi * mu * alpha / L * rho ** 4 / 4
        plastic = 2 * np.pi * self.tau_yield * (R ** 3 - rho ** 3) / 3
        return elastic + plastic


@dataclass(frozen=True)
class ThickCylinder:
    """Plane-strain thick cylinder under inner pressure (elastic Lamé solution)."""

    E: float = 70e3
    nu: float = 0.3
    sigma0: float = 250.0
    Et: float = 70e3 / 100
    r_in: float = 1.0
    r_out: float = 1.3

    @property
    def material(self) -> Material:
        return Material(self.E, self.nu, self.sigma0, hardening="linear", Et=self.Et)

    @property
    def p_max(self) -> float:
        return 2.0 / np.sqrt(3.0) * self.sigma0 * np.log(self.r_out / self.r_in)

    def elastic_stress(self, r, p):
        """Polar stresses (srr, stt, szz) at radius r for pressure p."""
        a2, b2 = self.r_in ** 2, self.r_out ** 2
        A = p * a2 / (b2 - a2)
        B = A * b2
        r = np.asarray(r, float)
        srr = A - B / r ** 2
        stt = A + B / r ** 2
        szz = self.nu * (srr + stt)
        return srr, stt, szz

    def first_yield_pressure(self) -> float:
        srr, stt, szz = self.elastic_stress(self.r_in, 1.0)
        q = von_mises(np.diag([float(srr), float(stt), float(szz)])[None])[0]
        return float(self.sigma0 / q)


_CASES = {
    "manufactured2d": Manufactured2D,
    "traction": TractionBar,
    "torsion": TorsionBeam,
    "cylinder": ThickCylinder,
}


def get_case(name: str, **params):
    try:
        return _CASES[name](**params)
    except KeyError:
        raise ValueError(f"unknown analytic case {name!r}; known: {sorted(_CASES)}") from None
