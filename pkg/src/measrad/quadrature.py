"""Tensor-product quadrature on R^3 and the smooth switching window."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np

SCHEMES = ("gauss-hermite", "gauss-legendre", "product-angular")


class QuadratureWarning(UserWarning):
    pass


@lru_cache(maxsize=128)
def _hermite(n: int):
    x, w = np.polynomial.hermite.hermgauss(n)
    return x, w * np.exp(x * x)


@lru_cache(maxsize=128)
def _legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def _triple(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    return np.broadcast_to(a, (3,)).copy()


@dataclass(frozen=True)
class GridSpec:
    """A 3D product rule.

    gauss-hermite
        nodes c + sqrt(2) s x per axis; suited to Gaussian-weighted integrands
        of width s centred at c.
    gauss-legendre
        the box c +- s per axis.
    product-angular
        c + r n with r in [0, s] (Legendre), cos(theta) Legendre and a
        uniform periodic rule in phi.
    """

    scheme: str = "gauss-hermite"
    order: int = 16
    center: tuple = (0.0, 0.0, 0.0)
    scale: tuple | float = 1.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if int(self.order) != self.order or self.order < 2:
            raise ValueError("quadrature order must be an integer >= 2")
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "center", tuple(_triple(self.center)))
        sc = _triple(self.scale)
        if np.any(sc <= 0):
            raise ValueError("scale must be positive")
        object.__setattr__(self, "scale", tuple(sc))

    def refined(self, extra: int = 4) -> "GridSpec":
        return replace(self, order=self.order + extra)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned extent actually sampled by the nodes."""
        pts, _ = self.nodes()
        return pts.min(axis=0), pts.max(axis=0)

    def covers(self, center, halfwidth) -> bool:
        """True if the sampled region (or box) contains center +- halfwidth."""
        c = _triple(center)
        h = _triple(halfwidth)
        if self.scheme == "gauss-legendre":
            lo = np.array(self.center) - np.array(self.scale)
            hi = np.array(self.center) + np.array(self.scale)
        elif self.scheme == "product-angular":
            r = min(self.scale)
            lo = np.array(self.center) - r
            hi = np.array(self.center) + r
        else:
            lo, hi = self.bounds()
        return bool(np.all(lo <= c - h) and np.all(hi >= c + h))

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return _nodes(self.scheme, self.order, self.center, self.scale)


@lru_cache(maxsize=64)
def _nodes(scheme, order, center, scale):
    c = np.array(center)
    s = np.array(scale)
    if scheme == "gauss-hermite":
        x, w = _hermite(order)
        axes = [c[i] + math.sqrt(2) * s[i] * x for i in range(3)]
        ws = [math.sqrt(2) * s[i] * w for i in range(3)]
    elif scheme == "gauss-legendre":
        x, w = _legendre(order)
        axes = [c[i] + s[i] * x for i in range(3)]
        ws = [s[i] * w for i in range(3)]
    else:
        x, w = _legendre(order)
        rmax = s[0]
        r = 0.5 * rmax * (x + 1)
        wr = 0.5 * rmax * w * r * r
        ct, wt = x, w
        nphi = 2 * order
        phi = 2 * np.pi * np.arange(nphi) / nphi
        wphi = np.full(nphi, 2 * np.pi / nphi)
        R, CT, PH = np.meshgrid(r, ct, phi, indexing="ij")
        ST = np.sqrt(1 - CT**2)
        pts = np.stack([R * ST * np.cos(PH), R * ST * np.sin(PH), R * CT], -1)
        W = wr[:, None, None] * wt[None, :, None] * wphi[None, None, :]
        pts = pts.reshape(-1, 3) + c
        pts.setflags(write=False)
        W = W.ravel()
        W.setflags(write=False)
        return pts, W
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    WX, WY, WZ = np.meshgrid(*ws, indexing="ij")
    pts = np.stack([X, Y, Z], -1).reshape(-1, 3)
    W = (WX * WY * WZ).ravel()
    pts.setflags(write=False)
    W.setflags(write=False)
    return pts, W


@dataclass
class QuadResult:
    value: np.ndarray | complex
    error: float
    converged: bool


def _apply(f, spec: GridSpec, chunk: int):
    pts, w = spec.nodes()
    total = None
    for start in range(0, len(w), chunk):
        vals = np.asarray(f(pts[start:start + chunk]))
        part = np.tensordot(w[start:start + chunk], vals, axes=(0, 0))
        total = part if total is None else total + part
    return total


def integrate_3d(f: Callable, spec: GridSpec, rtol: float = 1e-8,
                 atol: float = 0.0, chunk: int = 20000,
                 warn: bool = True) -> QuadResult:
    """Integrate a vectorized f over R^3 with an order p vs p+4 error estimate.

    ``f`` maps an (n, 3) array of points to an array whose leading axis is n.
    """
    v1 = _apply(f, spec, chunk)
    v2 = _apply(f, spec.refined(4), chunk)
    err = float(np.max(np.abs(np.asarray(v2) - np.asarray(v1))))
    scale = float(np.max(np.abs(v2))) if np.size(v2) else 0.0
    ok = err <= max(atol, rtol * scale)
    if not ok and warn:
        warnings.warn(f"quadrature not converged: error {err:.2e} vs scale {scale:.2e}",
                      QuadratureWarning, stacklevel=2)
    return QuadResult(v2, err, ok)


def quadrature_sum(f: Callable, spec: GridSpec, chunk: int = 20000):
    """Single-order evaluation without the convergence check."""
    return _apply(f, spec, chunk)


# --- switching window -----------------------------------------------------

def bump(u):
    """exp(-1/(u(1-u))) on (0, 1), zero outside."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = (u > 0) & (u < 1)
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (ui * (1 - ui)))
    return out


@dataclass(frozen=True)
class WindowProfile:
    """Switch-off profile lambda(t) = 1 - int_0^{t/tau} b / int_0^1 b."""

    shape: Callable = field(default=bump)
    panels: int = 16
    nodes_per_panel: int = 64

    def rule(self, phase_span: float = 0.0):
        """Composite Gauss-Legendre nodes on [0, 1] fine enough for the phase."""
        n_pan = max(self.panels, int(math.ceil(abs(phase_span) / math.pi)) * 2)
        x, w = _legendre(self.nodes_per_panel)
        edges = np.linspace(0.0, 1.0, n_pan + 1)
        h = np.diff(edges)
        u = (edges[:-1, None] + 0.5 * h[:, None] * (x[None, :] + 1)).ravel()
        wt = (0.5 * h[:, None] * w[None, :]).ravel()
        return u, wt

    def normalization(self) -> float:
        u, w = self.rule()
        return float(np.dot(w, self.shape(u)))

    def lam(self, t, tau: float):
        """lambda(t) for an array of times."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        norm = self.normalization()
        out = np.empty_like(t)
        for i, ti in enumerate(t):
            s = min(max(ti / tau, 0.0), 1.0)
            if s == 0.0:
                out[i] = 1.0
                continue
            u, w = self.rule()
            out[i] = 1.0 - s * float(np.dot(w, self.shape(s * u))) / norm
        return out


DEFAULT_WINDOW = WindowProfile()


def window_factor(tau: float, delta, profile: WindowProfile = DEFAULT_WINDOW):
    """-int_0^tau lambda'(t) exp(i delta t) dt for scalar tau and array delta."""
    delta = np.asarray(delta, dtype=float)
    if tau < 0:
        raise ValueError("switch-off duration must be non-negative")
    if tau == 0:
        return np.ones_like(delta, dtype=complex)
    span = float(np.max(np.abs(delta))) * tau if delta.size else 0.0
    u, w = profile.rule(span)
    b = profile.shape(u) * w
    norm = b.sum()
    flat = delta.ravel()
    out = np.empty(flat.shape, dtype=complex)
    step = max(1, 2_000_000 // max(len(u), 1))
    for s in range(0, len(flat), step):
        ph = np.exp(1j * tau * np.outer(flat[s:s + step], u))
        out[s:s + step] = ph @ b / norm
    return out.reshape(delta.shape)


window_integral = window_factor
