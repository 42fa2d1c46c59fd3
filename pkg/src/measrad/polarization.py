"""Stokes parameters of photon polarization matrices and closed-form results.

Convention: for a 2x2 polarization matrix M (linear basis f1, f2),
M = prefactor * A * (1 + b.sigma), so tr M / 2 = prefactor * A and
b = tr(M sigma) / tr M.  Vector components of zeta and xi are always given
in the local triad {f1, f2, n}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pauli import SIGMA


class UndefinedPolarization(ValueError):
    pass


@dataclass(frozen=True)
class StokesState:
    A: float
    b: np.ndarray
    prefactor: float = 1.0

    @property
    def intensity(self) -> float:
        """tr M / 2."""
        return self.prefactor * self.A

    @property
    def degree(self) -> float:
        return float(np.linalg.norm(self.b))

    def is_pure(self, tol: float = 1e-10) -> bool:
        return abs(self.degree - 1) <= tol

    def matrix(self) -> np.ndarray:
        return self.intensity * (np.eye(2) + np.einsum("j,jab->ab", self.b, SIGMA))

    def rotated(self, angle: float) -> "StokesState":
        """Same light described in the pair rotated by ``angle`` about n."""
        c, s = math.cos(2 * angle), math.sin(2 * angle)
        b1, b2, b3 = self.b
        # linear components (b3, b1) transform as a spin-2 quantity
        return StokesState(self.A, np.array([c * b1 - s * b3, b2, c * b3 + s * b1]),
                           self.prefactor)


def stokes_from_chi(chi, tol: float = 1e-300) -> StokesState:
    """Stokes state of an amplitude 2-vector or a Hermitian 2x2 matrix."""
    chi = np.asarray(chi, dtype=complex)
    if chi.shape == (2,):
        M = np.outer(chi, chi.conj())
    elif chi.shape == (2, 2):
        M = 0.5 * (chi + chi.conj().T)
    else:
        raise ValueError("expected a 2-vector or a 2x2 matrix")
    tr = float(np.real(np.trace(M)))
    if tr <= tol:
        raise UndefinedPolarization("zero polarization matrix")
    b = np.real(np.einsum("ab,jba->j", M, SIGMA)) / tr
    return StokesState(tr / 2, b)


# --- stimulated radiation, spin measurement ---------------------------------

def chi_stimulated_nonrel(theta, k0=1.0, kappa=1.0, F_m=1.0, phase=0.0):
    """Amplitude 2-vector in the spherical basis about zeta; phase = varphi - phi."""
    return (-1j * k0 * F_m * kappa * np.exp(1j * phase)
            * np.array([1j, math.cos(theta)]))


def stokes_stimulated_nonrel(theta, k0=1.0, kappa=1.0, F_m=1.0) -> StokesState:
    c = math.cos(theta)
    s2 = math.sin(theta) ** 2
    den = 1 + c * c
    b = np.array([0.0, -2 * c / den, s2 / den])
    return StokesState(F_m**2 * den, b, k0**2 * kappa**2 / 2)


def _unit(z):
    z = np.asarray(z, dtype=float)
    n = np.linalg.norm(z)
    if abs(n - 1) > 1e-10:
        raise ValueError("zeta must be a unit vector")
    return z / n


def chi_stimulated_ultra(zeta, x, F_m=1.0, a=0.0, k0=1.0, kappa=1.0, gamma=1.0,
                         phase=0.0):
    """Leading-order amplitude vector in the (beta_perp, n x beta_perp) basis.

    ``x`` is beta_perp * gamma; ``zeta`` is given in {f1, f2, n}.
    """
    z1, z2, z3 = _unit(zeta)
    zp = math.sqrt(max(1 - z3 * z3, 0.0))
    if zp == 0:
        raise ValueError("zeta parallel to n: kappa rotation undefined")
    c1 = (F_m - x * x * a) * (z1 + 1j * z2 * z3)
    c2 = F_m * (z2 - 1j * (z1 * z3 - x * (1 - z3 * z3)))
    return -1j * k0 / gamma * kappa * np.exp(1j * phase) / zp * np.array([c1, c2])


@dataclass(frozen=True)
class UltraStokes:
    state: StokesState
    b3_ib1_factored: complex


def stokes_stimulated_ultra(zeta, x, F_m=1.0, a=0.0, k0=1.0, kappa=1.0,
                            gamma=1.0) -> UltraStokes:
    """Closed-form Stokes parameters; both forms of b3 + i b1 are returned."""
    z1, z2, z3 = _unit(zeta)
    F_e = a + F_m
    g = F_m - x * x * a
    A = g * g * (1 - z2 * z2) + F_m**2 * (1 + x * x - (z1 + x * z3) ** 2)
    if A <= 0:
        raise UndefinedPolarization("degenerate intensity A = 0")
    b2 = -2 / A * F_m * g * (z3 - x * z1)
    w = (F_m * (z1 + x * z3) + 1j * g * z2) ** 2 - x * x * (F_e**2 - a * a * (1 + x * x))
    w = w / A
    fac = float("nan") + 0j
    if abs(1 - z3) > 1e-14 and abs(1 + z3) > 1e-14:
        f1 = F_m * (z1 + 1j * z2 + x * (1 + z3)) - x * x * a * (z1 - 1j * z2 * z3) / (1 - z3)
        f2 = F_m * (z1 + 1j * z2 - x * (1 - z3)) - x * x * a * (z1 + 1j * z2 * z3) / (1 + z3)
        fac = f1 * f2 / A
    b = np.array([w.imag, b2, w.real])
    return UltraStokes(StokesState(A, b, k0**2 * kappa**2 / (2 * gamma**2)), fac)


def stokes_stimulated_ultra_large_x(zeta, x, F_m=1.0, a=1.0) -> StokesState:
    """Asymptotic form for x >> 1 with a dominant anomalous moment."""
    z1, z2, _ = _unit(zeta)
    A = x**4 * a * a * (1 - z2 * z2)
    b2 = -2 * F_m * z1 / (x * a * (1 - z2 * z2))
    return StokesState(A, np.array([0.0, b2, 1.0]))


def stokes_stimulated_ultra_no_anomaly(zeta, x, F_m=1.0) -> StokesState:
    """Closed form for a = 0."""
    z1, z2, z3 = _unit(zeta)
    A = F_m**2 * (1 + x * x * z2 * z2 + (z3 - x * z1) ** 2)
    b2 = -2 / A * F_m**2 * (z3 - x * z1)
    w = F_m**2 / A * (z1 + 1j * z2 + x * (1 + z3)) * (z1 + 1j * z2 - x * (1 - z3))
    return StokesState(A, np.array([w.imag, b2, w.real]))


# --- spontaneous radiation, spin measurement --------------------------------

@dataclass(frozen=True)
class SpontaneousStokes:
    state: StokesState
    degree_squared: float


def stokes_spontaneous_nonrel(zeta, xi, k0=1.0, F_m=1.0) -> SpontaneousStokes:
    z = _unit(zeta)
    xi = np.asarray(xi, dtype=float)
    z1, z2, z3 = z
    zx = float(z @ xi)
    den = 1 + z3 * z3
    w = (z1 + 1j * z2) ** 2 / den
    b = np.array([w.imag, 2 * z3 * zx / den, w.real])
    deg2 = 1 - 4 * z3 * z3 * (1 - zx * zx) / den**2
    return SpontaneousStokes(StokesState(F_m**2 * den, b, k0**2 / 2), deg2)


def stokes_spontaneous_ultra(zeta, xi, x, F_m=1.0, a=0.0, k0=1.0,
                             gamma=1.0) -> SpontaneousStokes:
    z = _unit(zeta)
    zx = float(z @ np.asarray(xi, dtype=float))
    st = stokes_stimulated_ultra(z, x, F_m, a, k0, 1.0, gamma).state
    A = st.A
    z1, _, z3 = z
    g = F_m - x * x * a
    b2 = 2 / A * F_m * g * (z3 - x * z1) * zx
    deg2 = 1 - 4 / A**2 * F_m**2 * g * g * (z3 - x * z1) ** 2 * (1 - zx * zx)
    b = np.array([st.b[0], b2, st.b[2]])
    return SpontaneousStokes(StokesState(A, b, st.prefactor), deg2)


# --- kernel-based polarization factors --------------------------------------

def kappa_vector(xi, zeta) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    return xi - zeta * (zeta @ xi)


def chi_from_kernel(kernel, mode, xi, zeta) -> np.ndarray:
    """chi_lambda = (kappa + i kappa x zeta)_j Z^{ji} f*_{lambda i}."""
    kap = kappa_vector(xi, zeta)
    v = kap + 1j * np.cross(kap, zeta)
    return np.array([v @ kernel.Z @ np.conj(f) for f in mode.f])


def pi_matrix_from_kernel(kernel, mode, xi, zeta) -> np.ndarray:
    """Pi_{lambda lambda'} for zeta' = zeta (spontaneous, spin measurement)."""
    zeta = np.asarray(zeta, dtype=float)
    xi = np.asarray(xi, dtype=float)
    zx = np.cross(zeta, xi)
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1
        eps[i, k, j] = -1
    C = (np.eye(3) - np.outer(zeta, zeta)
         + 1j * (np.outer(zeta, zx) - np.outer(zx, zeta))
         + 1j * np.einsum("k,kab->ab", xi, eps))
    zf = np.array([kernel.Z @ np.conj(f) for f in mode.f])   # [lam, j]
    zfp = np.array([kernel.Z @ f for f in mode.f])           # [lam', j']
    return -np.einsum("ab,mb,na->mn", C, zf, zfp)
