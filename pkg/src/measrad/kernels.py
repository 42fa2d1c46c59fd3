"""Physical kernels shared by the radiation calculations.

Units: hbar = c = m = 1.  The coupling is e = sqrt(4 pi alpha).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .quadrature import DEFAULT_WINDOW, WindowProfile, window_factor

ALPHA = 1 / 137.035999
EPS_DEN = 1e-9

LEVI = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI[_i, _j, _k] = 1.0
    LEVI[_i, _k, _j] = -1.0


def coupling(alpha: float = ALPHA) -> float:
    return math.sqrt(4 * math.pi * alpha)


# --- form factors -----------------------------------------------------------

@dataclass(frozen=True)
class FormFactors:
    """Charge and magnetic form factors; constants or callables of q^2."""

    F_e: float | Callable = 1.0
    F_m: float | Callable = 1.0

    @classmethod
    def electron(cls) -> "FormFactors":
        return cls(1.0, 1.0)

    @classmethod
    def from_table(cls, q2, fe, fm) -> "FormFactors":
        q2 = np.asarray(q2, dtype=float)
        order = np.argsort(q2)
        q2, fe, fm = q2[order], np.asarray(fe, float)[order], np.asarray(fm, float)[order]
        return cls(lambda x: np.interp(x, q2, fe), lambda x: np.interp(x, q2, fm))

    @classmethod
    def from_csv(cls, path) -> "FormFactors":
        """Read columns q2, F_e, F_m (header row required); linear interpolation."""
        rows = []
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for r in reader:
                if r and not r[0].lstrip().startswith("#"):
                    rows.append([float(x) for x in r[:3]])
        if len(rows) < 2:
            raise ValueError("form factor table needs at least two rows")
        a = np.array(rows)
        return cls.from_table(a[:, 0], a[:, 1], a[:, 2])

    def values(self, q2=0.0):
        fe = self.F_e(q2) if callable(self.F_e) else np.full(np.shape(q2), float(self.F_e))
        fm = self.F_m(q2) if callable(self.F_m) else np.full(np.shape(q2), float(self.F_m))
        return np.asarray(fe, dtype=float), np.asarray(fm, dtype=float)

    def anomalous(self, q2=0.0):
        fe, fm = self.values(q2)
        return fe - fm


# --- transition current -----------------------------------------------------

@dataclass
class CurrentKernel:
    """G[..., i] and Z[..., j, i] of u-bar Gamma^i u = (G^i + sigma_j Z^{ji}) / 2."""

    G: np.ndarray
    Z: np.ndarray

    def contract(self, fstar: np.ndarray):
        """(f*.G, Z f*) for a polarization vector (already conjugated)."""
        g = np.einsum("...i,i->...", self.G, fstar)
        z = np.einsum("...ji,i->...j", self.Z, fstar)
        return g, z


def on_shell_energy(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.sqrt(1.0 + np.einsum("...j,...j->...", p, p))


def current_kernel_small_recoil(p_c, k, ff: FormFactors | None = None) -> CurrentKernel:
    """Small-recoil transition current at central momentum p_c and photon k.

    Matches u-bar(p') Gamma^i u(p) = (G^i + sigma_j Z^{ji}) / 2 for
    p = p_c + k/2, p' = p_c - k/2 (standard Dirac representation, spinors
    boosted from rest, u-bar u = 1) up to O(k^2).  q = k and q0 = beta_c . k;
    form factors are taken at q0^2 - k^2.
    """
    ff = ff or FormFactors.electron()
    p_c = np.asarray(p_c, dtype=float)
    k = np.asarray(k, dtype=float)
    p0 = on_shell_energy(p_c)
    beta = p_c / p0[..., None]
    q0 = beta @ k
    fe, fm = ff.values(q0 * q0 - k @ k)
    G = 2 * p_c * fe[..., None]
    t1 = np.einsum("ijl,l->ij", LEVI, k) * fm[..., None, None]
    t2 = np.einsum("ijl,...l->...ij", LEVI, p_c) * (q0 * fm / (p0 + 1))[..., None, None]
    epk = np.einsum("ikl,k,...l->...i", LEVI, k, p_c)
    t3 = np.einsum("...j,...i->...ij", p_c, epk) * ((fe - fm) / (p0 + 1))[..., None, None]
    Z = 1j * (t1 - t2 + t3)
    return CurrentKernel(G.astype(complex), Z)


class SmallRecoilKernel:
    """Default pluggable kernel: callable (p_c, k) -> CurrentKernel."""

    def __init__(self, ff: FormFactors | None = None):
        self.ff = ff or FormFactors.electron()

    def __call__(self, p_c, k) -> CurrentKernel:
        return current_kernel_small_recoil(p_c, k, self.ff)


# --- denominators and formation time ------------------------------------------

@dataclass
class Denominator:
    exact: np.ndarray         # k0 - p0 + p0' - i eps
    small_recoil: np.ndarray  # k0 (1 - n . beta_c)


def energy_denominator(p_c, k, eps: float = EPS_DEN) -> Denominator:
    p_c = np.asarray(p_c, dtype=float)
    k = np.asarray(k, dtype=float)
    k0 = float(np.linalg.norm(k))
    p0 = on_shell_energy(p_c + k / 2)
    p0p = on_shell_energy(p_c - k / 2)
    exact = k0 - p0 + p0p - 1j * eps
    beta = p_c / on_shell_energy(p_c)[..., None]
    approx = k0 * (1 - beta @ (k / k0))
    return Denominator(exact, approx)


@dataclass
class FormationTime:
    exact: float
    ultra: float
    unbounded: bool


def formation_time(k, beta_c, axis=None) -> FormationTime:
    """t_f = 1/(k0 (1 - n.beta)) and its ultrarelativistic approximant.

    Transverse parts in the approximant are taken relative to ``axis``
    (default: the direction of beta).
    """
    k = np.asarray(k, dtype=float)
    beta = np.asarray(beta_c, dtype=float)
    k0 = float(np.linalg.norm(k))
    if k0 == 0:
        raise ValueError("photon momentum must be nonzero")
    n = k / k0
    b2 = float(beta @ beta)
    if b2 >= 1:
        raise ValueError("|beta| must be below 1")
    denom = 1 - float(n @ beta)
    if denom <= 1e-15:
        return FormationTime(math.inf, math.inf, True)
    exact = 1 / (k0 * denom)
    if axis is None:
        nb = math.sqrt(b2)
        axis = beta / nb if nb > 0 else np.array([0.0, 0.0, 1.0])
    axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    bperp = beta - (beta @ axis) * axis
    nperp = n - (n @ axis) * axis
    g2 = 1 / (1 - b2)
    d = bperp - nperp
    ultra = 2 * g2 / (k0 * (1 + (d @ d) * g2))
    return FormationTime(exact, ultra, False)


def measurement_window(tau: float, delta, profile: WindowProfile = DEFAULT_WINDOW):
    """-int_0^tau lambda'(t) exp(i delta t) dt."""
    return window_factor(tau, delta, profile)


# --- photon modes -----------------------------------------------------------

def _frame_about(axis) -> np.ndarray:
    """Rows e1, e2, e3 with e3 = axis; identity for axis = z."""
    z = np.asarray(axis, dtype=float)
    z = z / np.linalg.norm(z)
    ez = np.array([0.0, 0.0, 1.0])
    c = float(z @ ez)
    if c > 1 - 1e-15:
        return np.eye(3)
    if c < -1 + 1e-15:
        return np.diag([1.0, -1.0, -1.0])
    v = np.cross(ez, z)
    s = np.linalg.norm(v)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    Rm = np.eye(3) + vx + vx @ vx * ((1 - c) / s**2)
    return Rm.T


@dataclass
class PhotonMode:
    """Photon momentum with a transverse polarization pair (rows of f)."""

    k: np.ndarray
    f: np.ndarray
    convention: str = "spherical"

    @property
    def k0(self) -> float:
        return float(np.linalg.norm(self.k))

    @property
    def n(self) -> np.ndarray:
        return self.k / self.k0

    def circular(self) -> np.ndarray:
        """Rows (f1 + i f2)/sqrt2, (f1 - i f2)/sqrt2."""
        f1, f2 = self.f
        return np.array([f1 + 1j * f2, f1 - 1j * f2]) / math.sqrt(2)


def polarization_basis(k, convention: str = "spherical", zeta=None,
                       beta=None) -> PhotonMode:
    """Transverse polarization pair for photon momentum k.

    spherical
        f1 = theta-hat, f2 = phi-hat of n in a frame whose third axis is
        ``zeta`` (default lab z).
    beta_perp
        f1 = beta_perp/|beta_perp|, f2 = n x f1, with beta_perp = beta - n(n.beta).
    """
    k = np.asarray(k, dtype=float)
    k0 = np.linalg.norm(k)
    if k0 == 0:
        raise ValueError("photon momentum must be nonzero")
    n = k / k0
    if convention == "spherical":
        E = _frame_about(zeta if zeta is not None else (0.0, 0.0, 1.0))
        nl = E @ n
        th = math.acos(max(-1.0, min(1.0, nl[2])))
        ph = math.atan2(nl[1], nl[0])
        f1l = np.array([math.cos(ph) * math.cos(th), math.sin(ph) * math.cos(th), -math.sin(th)])
        f2l = np.array([-math.sin(ph), math.cos(ph), 0.0])
        f = np.array([E.T @ f1l, E.T @ f2l])
    elif convention == "beta_perp":
        if beta is None:
            raise ValueError("beta_perp convention needs beta")
        b = np.asarray(beta, dtype=float)
        bp = b - n * (n @ b)
        nb = np.linalg.norm(bp)
        if nb < 1e-14:
            raise ValueError("beta_perp vanishes; basis undefined")
        f1 = bp / nb
        f = np.array([f1, np.cross(n, f1)])
    else:
        raise ValueError(f"unknown polarization convention {convention!r}")
    return PhotonMode(k, f.astype(complex), convention)


def local_components(v, mode: PhotonMode) -> np.ndarray:
    """Components of a lab vector in the {f1, f2, n} triad."""
    v = np.asarray(v, dtype=float)
    return np.array([np.real(mode.f[0]) @ v, np.real(mode.f[1]) @ v, mode.n @ v])


@dataclass
class PhotonGrid:
    """Log-spaced k0 times a (theta, phi) grid about the lab z axis."""

    k0: np.ndarray
    theta: np.ndarray
    phi: np.ndarray = field(default_factory=lambda: np.array([0.0]))

    def __post_init__(self):
        self.k0 = np.atleast_1d(np.asarray(self.k0, dtype=float))
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        if self.k0.size == 0 or self.theta.size == 0 or self.phi.size == 0:
            raise ValueError("photon grid is empty")
        if np.any(self.k0 <= 0):
            raise ValueError("photon energies must be positive")

    @classmethod
    def log_spaced(cls, k_min, k_max, n_k, theta, phi=(0.0,)) -> "PhotonGrid":
        return cls(np.geomspace(k_min, k_max, n_k), theta, phi)

    def points(self):
        """Yield (k0, theta, phi, k-vector) in a fixed order."""
        for k0 in self.k0:
            for th in self.theta:
                for ph in self.phi:
                    n = np.array([math.sin(th) * math.cos(ph),
                                  math.sin(th) * math.sin(ph), math.cos(th)])
                    yield float(k0), float(th), float(ph), k0 * n

    def __len__(self):
        return self.k0.size * self.theta.size * self.phi.size
