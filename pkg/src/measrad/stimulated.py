"""First-order stimulated radiation under measurement.

Discrete mode systems use V arrays ``V[g, abar, a]``: the coefficient of
a+_abar a_a c+_g in the interaction.  ``V1`` covers (t_in, t0), ``V2``
covers (t0, t_out) and ``V12 = V1 + V2``.

Continuum amplitudes are per unit box volume: the reported value is
sqrt(V) times the amplitude, so |A|^2 dk/(2 pi)^3 is a photon number.
Vertex convention: the one-particle emission matrix element is

    <p' s'| V1 |p s> = e u-bar_{s'}(p') Gamma^i u_s(p) f*_i
                       / (sqrt(2 k0 p0 p0') (k0 - p0 + p0' - i0)),

with the Dirac matrix element from :mod:`measrad.kernels`.  With this sign
the classical edge amplitude of a charge is +e f*.beta/(1 - n.beta)/sqrt(2k0^3).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import density as dn
from .kernels import (EPS_DEN, PhotonGrid, PhotonMode, SmallRecoilKernel,
                      coupling, energy_denominator, on_shell_energy,
                      polarization_basis)
from .pauli import SIGMA
from .quadrature import (DEFAULT_WINDOW, GridSpec, WindowProfile, integrate_3d,
                         window_factor)

RHO0_TOL = 1e-12
OVERLAP_TOL = 1e-10


class MeasuredProbabilityZero(ValueError):
    """The measured outcome has (numerically) zero probability."""


# --- discrete mode systems --------------------------------------------------

def _c(X, V):
    """X_{a A} V^g_{A a}."""
    return np.einsum("aA,gAa->g", X, V)


def _cdag(X, V):
    """X_{a A} (V^+)^g_{A a} = X_{a A} conj(V^g_{a A})."""
    return np.einsum("aA,gaA->g", X, V.conj())


def dag(V):
    """Per-photon-mode Hermitian conjugate of a V array."""
    return np.conj(np.transpose(V, (0, 2, 1)))


@dataclass
class VBlocks:
    V1: np.ndarray
    V2: np.ndarray
    V12: np.ndarray | None = None

    def __post_init__(self):
        self.V1 = np.asarray(self.V1, dtype=complex)
        self.V2 = np.asarray(self.V2, dtype=complex)
        if self.V12 is None:
            self.V12 = self.V1 + self.V2
        self.V12 = np.asarray(self.V12, dtype=complex)

    @classmethod
    def free(cls, V1) -> "VBlocks":
        """Free particles: the full-interval block vanishes."""
        V1 = np.asarray(V1, dtype=complex)
        return cls(V1, -V1, np.zeros_like(V1))


@dataclass
class CoherentProbe:
    """Coherent photon state d and photon detection projector D."""

    d: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=complex)
        self.D = np.asarray(self.D, dtype=complex)
        if np.abs(self.D @ self.D - self.D).max() > 1e-10 or \
                np.abs(self.D - self.D.conj().T).max() > 1e-10:
            raise ValueError("D must be an orthogonal projector")

    @property
    def mean_detected(self) -> float:
        return float(np.real(self.d.conj() @ self.D @ self.d))


@dataclass
class GeneralAmplitude:
    amplitude: np.ndarray
    addends: np.ndarray      # rows: full-interval, post-measurement, pre-measurement
    normalization: float     # 1 - rho0_{D~}


def amplitude_general(rho1, rho1_proj, rho0_proj: float, De, V: VBlocks) -> GeneralAmplitude:
    """Stimulated amplitude of an arbitrary many-particle state.

    ``rho1_proj`` and ``rho0_proj`` are the densities projected with
    D~ = 1 - De.
    """
    norm = 1.0 - float(np.real(rho0_proj))
    if norm < RHO0_TOL:
        raise MeasuredProbabilityZero("measured-state probability zero")
    De = np.asarray(De)
    a1 = _c(rho1 - rho1_proj, V.V12)
    a2 = _c(De @ rho1_proj @ De, V.V2)
    a3 = _c(rho1_proj @ De, V.V1)
    parts = np.array([a1, a2, a3]) / norm
    return GeneralAmplitude(parts.sum(axis=0), parts, norm)


def amplitude_from_density(R: dn.ManyBodyDensity, De, V: VBlocks) -> GeneralAmplitude:
    Dt = np.eye(R.n_modes) - De
    return amplitude_general(dn.reduced_density(R, 1), dn.projected_density(R, 1, Dt),
                             dn.vacuum_projected(R, Dt), De, V)


def amplitude_one_particle(rho1, De, V: VBlocks):
    """Both one-particle forms; they agree when V12 = V1 + V2."""
    De = np.asarray(De)
    n = De.shape[0]
    norm = float(np.real(np.trace(rho1 @ De)))
    if norm < RHO0_TOL:
        raise MeasuredProbabilityZero("measured-state probability zero")
    first = (_c(De @ rho1 @ De, V.V2) + _c(rho1 @ De, V.V1)) / norm
    second = (_c(De @ rho1 @ De, V.V12) + _c((np.eye(n) - De) @ rho1 @ De, V.V1)) / norm
    return first, second


def amplitude_small_cell(rho1, L2, De, V: VBlocks):
    """Leading order in a small measured cell De; ``L2`` is label2(rho^(2))."""
    De = np.asarray(De)
    norm = float(np.real(np.trace(rho1 @ De)))
    if norm < RHO0_TOL:
        raise MeasuredProbabilityZero("measured-state probability zero")
    c2 = np.einsum("abBA,Bb->aA", L2, De)
    return (_c(c2, V.V12) + _c(rho1 @ De, V.V1)) / norm


def probability_chain(rho1, rho1_proj, rho0_proj, De, V: VBlocks, probe: CoherentProbe) -> float:
    """P(photon detected <- particle measured) to first order in V."""
    d, D = probe.d, probe.D
    Dt = np.eye(len(d)) - D
    E = math.exp(-probe.mean_detected)
    dsD = d.conj() @ D
    dsDt = d.conj() @ Dt
    X1 = rho1 - rho1_proj
    X3 = rho1_proj @ De
    X2 = De @ rho1_proj @ De
    t = (_c(X1, V.V12) @ dsD * E
         + _c(X3, V.V1) @ (dsD + (1 - E) * dsDt) - _cdag(X3, V.V1) @ ((1 - E) * d)
         + _c(X2, V.V2) @ dsD * E)
    return float((1 - rho0_proj) * (1 - E) + 2 * t.real)


def probability_measured(rho1_proj, rho0_proj, De, V1, d) -> float:
    """P(particle measured) to first order, in a coherent photon background d."""
    X = rho1_proj @ De - De @ rho1_proj
    val = (1 - rho0_proj) + (_c(X, V1) @ np.conj(d) - _cdag(X, V1) @ d)
    return float(np.real(val))


def conditional_probability_first_order(amplitude, probe: CoherentProbe) -> float:
    """P(photon | particle) to first order for any detector D."""
    E = math.exp(-probe.mean_detected)
    dsD = probe.d.conj() @ probe.D
    return float(1 - E + 2 * np.real(amplitude @ dsD) * E)


def chain_probability_small_detector(rho1_proj, rho0_proj, De, V1, amplitude,
                                     probe: CoherentProbe) -> float:
    """Leading order in the detector projector D."""
    s = probe.mean_detected
    X = rho1_proj @ De - De @ rho1_proj
    bracket = (1 - rho0_proj) + (_c(X, V1) @ probe.d.conj() - _cdag(X, V1) @ probe.d)
    dsD = probe.d.conj() @ probe.D
    return float(np.real(bracket) * s + (1 - rho0_proj) * 2 * np.real(amplitude @ dsD))


def conditional_probability(probe: CoherentProbe, amplitude) -> float:
    """(d* + A*) D (d + A) with the A* D A term dropped."""
    d, D = probe.d, probe.D
    A = np.asarray(amplitude, dtype=complex)
    return float(np.real(d.conj() @ D @ d) + 2 * np.real(d.conj() @ D @ A))


# --- continuum: shared machinery --------------------------------------------

@dataclass
class RadiationAmplitude:
    """Amplitude per linear polarization (f1, f2) for one photon momentum."""

    values: np.ndarray
    normalization: float = 1.0
    error: float = 0.0
    converged: bool = True
    window_mod: float = 1.0
    parts: dict = field(default_factory=dict)

    def __getitem__(self, lam):
        return self.values[lam]

    def circular(self, mode: PhotonMode) -> np.ndarray:
        """Components along (f1 + i f2)/sqrt2 and (f1 - i f2)/sqrt2."""
        e = mode.circular()
        # A_lam = f*_lam . J, so A_circ = e* . J = conj(e) f-components
        return np.conj(e) @ np.real(mode.f).T @ self.values


@dataclass
class Setup:
    """Kernel and numerical choices shared by continuum amplitudes."""

    kernel: Callable = field(default_factory=SmallRecoilKernel)
    charge: float = field(default_factory=coupling)
    order: int = 16
    rtol: float = 1e-8
    eps: float = EPS_DEN
    tau: float = 0.0
    profile: WindowProfile = DEFAULT_WINDOW


def _vertex(pc, mode: PhotonMode, setup: Setup, small_recoil=False, eps=None):
    """(g[n, lam], z[n, lam, j], w[n]) with w the scalar propagator factor."""
    k, k0 = mode.k, mode.k0
    ker = setup.kernel(pc, k)
    fs = np.conj(mode.f)
    g = ker.G @ fs.T
    z = np.einsum("nji,li->nlj", ker.Z, fs)
    den = energy_denominator(pc, k, setup.eps if eps is None else eps)
    if np.any(den.exact.real <= 0):
        raise ValueError("non-positive energy denominator: photon not emitted on shell")
    if small_recoil:
        w = 1.0 / (math.sqrt(2 * k0) * on_shell_energy(pc) * den.small_recoil)
    else:
        root = np.sqrt(on_shell_energy(pc + k / 2) * on_shell_energy(pc - k / 2))
        w = 1.0 / (math.sqrt(2 * k0) * root * den.exact)
    if setup.tau > 0:
        w = w * window_factor(setup.tau, den.exact.real, setup.profile)
    return g, z, w


def _window_mod(mode: PhotonMode, p_center, setup: Setup) -> float:
    if setup.tau == 0:
        return 1.0
    den = energy_denominator(np.asarray(p_center, float), mode.k, setup.eps)
    return float(abs(window_factor(setup.tau, den.exact.real, setup.profile)))


def _integrate(f, spec: GridSpec, setup: Setup):
    res = integrate_3d(f, spec, rtol=setup.rtol)
    return res.value, res.error, res.converged


def _center_of(rho) -> np.ndarray:
    return np.array(rho.grid(2).center)


def _const_field(v):
    if callable(v):
        return v
    c = np.asarray(v, dtype=float)
    return lambda p: np.broadcast_to(c, np.shape(p)[:-1] + (3,))


def _check_unit(z):
    if np.abs(np.linalg.norm(z, axis=-1) - 1).max() > 1e-10:
        raise ValueError("measured spin direction must be a unit vector")


def spin_bracket(a, b, rho, w):
    """(cG, cZ) with (1/2)Tr[(1+s.a)(rho+s.w)(1+s.b)(g+s.z)] = g cG + z.cZ."""
    a = np.asarray(a)
    b = np.asarray(b)
    rho = np.asarray(rho)
    dot = lambda x, y: np.einsum("...j,...j->...", x, y)
    aw = dot(a, w)
    wb = dot(w, b)
    ab = dot(a, b)
    axw = np.cross(a, w)
    cG = rho * (1 + ab) + aw + wb + 1j * dot(axw, b)
    cZ = ((rho + aw)[..., None] * b + w * (1 - ab)[..., None]
          + a * (rho + wb)[..., None]
          + 1j * (axw + np.cross(w, b) + rho[..., None] * np.cross(a, b)))
    return cG, cZ


# --- continuum: classical edge ----------------------------------------------

def amplitude_classical_edge(rho: dn.OneParticleDensity, mode: PhotonMode,
                             setup: Setup | None = None, spec: GridSpec | None = None
                             ) -> RadiationAmplitude:
    """Edge radiation of the classical Dirac current of rho (no measurement)."""
    setup = setup or Setup()
    spec = spec or rho.grid(setup.order)
    k = mode.k

    def f(pc):
        r, w = rho.spin_decomposed(pc + k / 2, pc - k / 2)
        g, z, wt = _vertex(pc, mode, setup)
        return (g * r[:, None] + np.einsum("nlj,nj->nl", z, w)) * wt[:, None]

    val, err, ok = _integrate(f, spec, setup)
    e = setup.charge
    return RadiationAmplitude(e / 2 * val, 1.0, e / 2 * err, ok,
                              _window_mod(mode, _center_of(rho), setup))


def edge_closed_form(packet: dn.GaussianPacket, mode: PhotonMode, charge=None, F_e=1.0):
    """e F_e (f*.beta0)/(1 - n.beta0) exp(-k^2/8 sigma^2 - i x0.k)/sqrt(2 k0^3)."""
    e = coupling() if charge is None else charge
    b0 = packet.p0 / on_shell_energy(packet.p0)
    k = mode.k
    k0 = mode.k0
    env = np.exp(-(k @ k) / (8 * packet.sigma**2) - 1j * (packet.x0 @ k))
    return e * F_e * (np.conj(mode.f) @ b0) / (1 - mode.n @ b0) * env / math.sqrt(2 * k0**3)


# --- continuum: general free-particle measurement ---------------------------

@dataclass
class SpinMeasurement:
    """D_e(p) = weight(p) (1 + sigma.zeta(p))/2 and its complement field.

    ``zeta_tilde`` defaults to -zeta, i.e. D~_e = 1 - D_e for weight 1.
    """

    zeta: Callable | np.ndarray
    zeta_tilde: Callable | np.ndarray | None = None

    def fields(self):
        z = _const_field(self.zeta)
        if self.zeta_tilde is None:
            zt = lambda p: -z(p)
        else:
            zt = _const_field(self.zeta_tilde)
        return zt, z


def _projector(v):
    return 0.5 * (np.eye(2) + np.einsum("...j,jab->...ab", v, SIGMA))


def amplitude_free_measured(rho: dn.OneParticleDensity, meas: SpinMeasurement,
                            mode: PhotonMode, setup: Setup | None = None,
                            spec: GridSpec | None = None, route: str = "bracket",
                            normalize: bool = True) -> RadiationAmplitude:
    """(D~ rho D) V1 / (1 - rho0) for a free particle, N = 1.

    route "bracket" uses the closed spin bracket; route "trace" builds the
    2x2 spin matrices and traces them directly.
    """
    setup = setup or Setup()
    spec = spec or rho.grid(setup.order)
    zt, z = meas.fields()
    k = mode.k

    def f(pc):
        p, pp = pc + k / 2, pc - k / 2
        a, b = zt(p), z(pp)
        _check_unit(b)
        g, zz, wt = _vertex(pc, mode, setup)
        if route == "bracket":
            r, w = rho.spin_decomposed(p, pp)
            cG, cZ = spin_bracket(a, b, r, w)
            val = (g * cG[:, None] + np.einsum("nlj,nj->nl", zz, cZ)) / 8
        elif route == "trace":
            K = rho.kernel(p, pp)
            X = _projector(a) @ K @ _projector(b)
            x0 = np.trace(X, axis1=-2, axis2=-1)
            xv = np.einsum("nab,jba->nj", X, SIGMA)
            val = (g * x0[:, None] + np.einsum("nlj,nj->nl", zz, xv)) / 2
        else:
            raise ValueError(f"unknown route {route!r}")
        return val * wt[:, None]

    val, err, ok = _integrate(f, spec, setup)
    e = setup.charge
    norm = measured_probability(rho, meas.zeta, spec) if normalize else 1.0
    if normalize and norm < RHO0_TOL:
        raise MeasuredProbabilityZero("measured-state probability zero")
    return RadiationAmplitude(e * val / norm, norm, e * err / norm, ok,
                              _window_mod(mode, _center_of(rho), setup))


def measured_probability(rho: dn.OneParticleDensity, zeta, spec: GridSpec) -> float:
    """1 - rho0 = int dp (rho + zeta.w)(p, p)/2 for one particle."""
    z = _const_field(zeta)

    def f(p):
        r, w = rho.diagonal(p)
        zz = z(p)
        _check_unit(zz)
        return 0.5 * (r + np.einsum("nj,nj->n", zz, w))

    res = integrate_3d(f, spec, rtol=1e-10, warn=False)
    return float(np.real(res.value))


def amplitude_spin_measurement(rho: dn.OneParticleDensity, zeta, mode: PhotonMode,
                               setup: Setup | None = None, spec: GridSpec | None = None,
                               mode_of_eval: str = "full", normalize: bool = True,
                               wigner: Callable | None = None,
                               xspec: GridSpec | None = None) -> RadiationAmplitude:
    """Spin-projection measurement along the unit field zeta(p).

    mode_of_eval
        "full": exact spin bracket with exact denominators.
        "small_recoil": the kappa form, (kappa + i kappa x zeta).Z f* with
        denominators p0_c k0 (1 - n.beta_c) and zeta(p) ~ zeta(p').
        "wigner": the small-recoil form integrated over phase space with a
        Wigner function ``wigner(x, pc) -> 2x2`` on the grid ``xspec``.
    """
    setup = setup or Setup()
    spec = spec or rho.grid(setup.order)
    if mode_of_eval == "full":
        return amplitude_free_measured(rho, SpinMeasurement(zeta), mode, setup, spec,
                                       normalize=normalize)
    z = _const_field(zeta)
    k = mode.k
    e = setup.charge
    norm = measured_probability(rho, zeta, spec) if normalize else 1.0
    if normalize and norm < RHO0_TOL:
        raise MeasuredProbabilityZero("measured-state probability zero")

    def chi(pc, w):
        zz = z(pc)
        _check_unit(zz)
        kap = w - zz * np.einsum("nj,nj->n", zz, w)[:, None]
        v = kap + 1j * np.cross(kap, zz)
        _, zk, wt = _vertex(pc, mode, setup, small_recoil=True)
        return np.einsum("nlj,nj->nl", zk, v) * wt[:, None]

    if mode_of_eval == "small_recoil":
        def f(pc):
            _, w = rho.spin_decomposed(pc + k / 2, pc - k / 2)
            return chi(pc, w)
        val, err, ok = _integrate(f, spec, setup)
    elif mode_of_eval == "wigner":
        if wigner is None or xspec is None:
            raise ValueError("wigner route needs a Wigner function and an x grid")
        xs, wx = xspec.nodes()
        phase = np.exp(-1j * xs @ k) * wx / (2 * np.pi) ** 3

        def f(pc):
            out = np.zeros((len(pc), 2), dtype=complex)
            for i, p in enumerate(pc):
                W = wigner(xs, np.broadcast_to(p, xs.shape))
                wv = np.einsum("xab,jba->xj", W, SIGMA)
                w = (phase @ wv)[None, :]
                out[i] = chi(p[None, :], w)[0]
            return out
        val, err, ok = _integrate(f, spec, setup)
    else:
        raise ValueError(f"unknown evaluation mode {mode_of_eval!r}")
    return RadiationAmplitude(e / 4 * val / norm, norm, e / 4 * err / norm, ok,
                              _window_mod(mode, _center_of(rho), setup))


# --- continuum: momentum and position measurement ---------------------------

def amplitude_momentum_measurement(rho: dn.OneParticleDensity, p_r, mode: PhotonMode,
                                   setup: Setup | None = None,
                                   small_recoil: bool = False) -> RadiationAmplitude:
    """Measurement of the momentum p_r (spin not recorded)."""
    setup = setup or Setup()
    p_r = np.asarray(p_r, dtype=float)
    k = mode.k
    rr, _ = rho.diagonal(p_r[None, :])
    diag = float(np.real(rr[0]))
    if diag <= 1e-300:
        raise MeasuredProbabilityZero("measured momentum outside support")
    p, pp = p_r + k, p_r
    pc = (p_r + k / 2)[None, :]
    r, w = rho.spin_decomposed(p[None, :], pp[None, :])
    g, z, wt = _vertex(pc, mode, setup, small_recoil=small_recoil)
    if small_recoil:
        val = (g * r[:, None]) * wt[:, None]
    else:
        val = (g * r[:, None] + np.einsum("nlj,nj->nl", z, w)) * wt[:, None]
    e = setup.charge
    return RadiationAmplitude(e / 2 * val[0] / diag, diag, 0.0, True,
                              _window_mod(mode, pc[0], setup))


def _wave(state, p):
    return state.wavefunction(p)


def inner_product(a, b) -> complex:
    """<a|b> for pure packets or superpositions of equal-width packets."""
    pa = a.packets if isinstance(a, dn.Superposition) else [a]
    ca = a.coeffs if isinstance(a, dn.Superposition) else [1.0]
    pb = b.packets if isinstance(b, dn.Superposition) else [b]
    cb = b.coeffs if isinstance(b, dn.Superposition) else [1.0]
    tot = 0j
    for x, u in zip(ca, pa):
        for y, v in zip(cb, pb):
            tot += np.conj(x) * y * dn.gaussian_overlap(u, v) * np.vdot(u.spinor, v.spinor)
    return complex(tot)


def transition_element(bra, ket, mode: PhotonMode, setup: Setup, spec: GridSpec,
                       eps=None):
    """<bra| V1 |ket> per polarization; eps < 0 gives the +i0 prescription."""
    k = mode.k

    def f(pc):
        p, pp = pc + k / 2, pc - k / 2
        psi = _wave(ket, p)
        phi = np.conj(_wave(bra, pp))
        g, z, wt = _vertex(pc, mode, setup, eps=eps)
        s0 = np.einsum("na,na->n", phi, psi)
        sv = np.einsum("na,jab,nb->nj", phi, SIGMA, psi)
        return (g * s0[:, None] + np.einsum("nlj,nj->nl", z, sv)) / 2 * wt[:, None]

    val, err, ok = _integrate(f, spec, setup)
    return setup.charge * val, setup.charge * err, ok


def amplitude_position_measurement(psi, phi, mode: PhotonMode, setup: Setup | None = None,
                                   spec: GridSpec | None = None) -> RadiationAmplitude:
    """Projective measurement onto the pure state phi of a particle in psi.

    parts["transition"] = <phi|V1|psi>/<phi|psi> (t < 0) and
    parts["post"] = <phi|V2|phi> (t > 0, +i0 denominators).
    """
    setup = setup or Setup()
    ov = inner_product(phi, psi)
    if abs(ov) < OVERLAP_TOL:
        raise MeasuredProbabilityZero("incompatible measurement outcome")
    spec = spec or phi.grid(setup.order)
    eps = setup.eps
    t, e1, ok1 = transition_element(phi, psi, mode, setup, spec, eps)
    pst, e2, ok2 = transition_element(phi, phi, mode, setup, spec, -eps)
    trans = t / ov
    post = -pst
    return RadiationAmplitude(trans + post, abs(ov) ** 2, e1 / abs(ov) + e2, ok1 and ok2,
                              _window_mod(mode, _center_of(phi), setup),
                              {"transition": trans, "post": post})


# --- entangled pair ---------------------------------------------------------

@dataclass
class EntangledResult:
    amplitude: RadiationAmplitude
    overlap: complex
    effective_xi: np.ndarray


def _orbital_transition(ga: dn.GaussianPacket, gb: dn.GaussianPacket, mode, setup, spec,
                        warn=True):
    """2x2 spin matrix <ga, s'| V1 |gb, s> per polarization: [lam, s', s]."""
    k = mode.k

    def f(pc):
        p, pp = pc + k / 2, pc - k / 2
        amp = np.conj(ga.orbital(pp)) * gb.orbital(p)
        g, z, wt = _vertex(pc, mode, setup)
        M = (g[..., None, None] * np.eye(2) + np.einsum("nlj,jab->nlab", z, SIGMA)) / 2
        return M * (amp * wt)[:, None, None, None]

    res = integrate_3d(f, spec, rtol=setup.rtol, warn=warn)
    return setup.charge * res.value


def amplitude_entangled_spin(packet1: dn.GaussianPacket, packet2: dn.GaussianPacket,
                             f, zeta, mode: PhotonMode, setup: Setup | None = None,
                             check_overlap: bool = True) -> EntangledResult:
    """Spin of particle 1 measured along constant zeta; exact 4-mode evaluation.

    The pair is k sum f[b, a] |b, g2> |a, g1> with spin b of particle 2 and
    spin a of particle 1; only the packets' orbitals are used.  Orbitals are
    orthonormalized (e1 = g1) and D_e = P_zeta (x) |e1><e1|.
    """
    setup = setup or Setup()
    zeta = np.asarray(zeta, dtype=float)
    _check_unit(zeta)
    o = dn.gaussian_overlap(packet1, packet2)
    if check_overlap and abs(o) > dn.ORTHO_TOL:
        raise dn.NotOrthogonalError("particle packets overlap")
    s = math.sqrt(max(1 - abs(o) ** 2, 0.0))
    if s == 0:
        raise dn.NotOrthogonalError("identical orbitals")
    # orbital coefficients in the orthonormal basis (e1, e2)
    c1 = np.array([1.0, 0.0], dtype=complex)
    c2 = np.array([o, s], dtype=complex)
    # spin structure lives in f; both spin components share the orbital
    phi1 = np.outer(np.ones(2), c1)
    phi2 = np.outer(np.ones(2), c2)
    pair = dn.EntangledPair(np.asarray(f, dtype=complex), phi1, phi2)
    R = pair.density()
    R = dn.ManyBodyDensity(R.n_modes, {2: R.blocks[2] / R.trace})
    e1 = np.array([1.0, 0.0])
    De = np.kron(_projector(zeta), np.outer(e1, e1))
    Dt = np.eye(4) - De
    r1 = dn.projected_density(R, 1, Dt)
    r0 = dn.vacuum_projected(R, Dt)
    norm = 1 - r0
    if norm < RHO0_TOL:
        raise MeasuredProbabilityZero("measured-state probability zero")
    X = Dt @ r1 @ De
    # one-particle V1 in the (spin, orbital) basis: e2 = (g2 - o g1)/s
    spec = packet1.grid(setup.order)
    C = np.array([[1.0, 0.0], [-o / s, 1 / s]], dtype=complex)   # e_a = sum_i C[a,i] g_i
    gs = (packet1, packet2)
    T = np.zeros((2, 2, 2, 2, 2), dtype=complex)                  # [lam, a, b, s', s]
    need = [(0, 0), (0, 1), (1, 0), (1, 1)]
    Tg = {}
    for i, j in need:
        sp = spec if (i, j) == (0, 0) else gs[j].grid(setup.order)
        # cross terms decay like the orbital overlap; their quadrature is
        # oscillatory and only matters when the packets overlap
        Tg[i, j] = _orbital_transition(gs[i], gs[j], mode, setup, sp, warn=(i == j))
    for a in range(2):
        for b in range(2):
            T[:, a, b] = sum(np.conj(C[a, i]) * C[b, j] * Tg[i, j]
                             for i in range(2) for j in range(2))
    # V1[lam, (s', a), (s, b)], modes spin-major
    V1 = np.transpose(T, (0, 3, 1, 4, 2)).reshape(2, 4, 4)
    vals = _c(X, V1) / norm
    Wm = pair.effective_density()
    rho_eff = Wm.reshape(2, 2, 2, 2)[:, 0, :, 0]
    xi_eff = np.real(np.einsum("ab,jba->j", rho_eff, SIGMA)) / np.real(np.trace(rho_eff))
    amp = RadiationAmplitude(vals, norm, 0.0, True,
                             _window_mod(mode, packet1.p0, setup))
    return EntangledResult(amp, o, xi_eff)


# --- uncorrelated beam ------------------------------------------------------

@dataclass
class BeamResult:
    amplitude: np.ndarray
    rho0: float
    per_particle: list


def beam_spin_amplitude(packets, zeta, mode: PhotonMode, setup: Setup | None = None,
                        mode_of_eval: str = "full") -> BeamResult:
    """Uncorrelated beam of non-overlapping packets, spin measured along zeta."""
    setup = setup or Setup()
    for i in range(len(packets)):
        for j in range(i + 1, len(packets)):
            if dn.packet_overlap_norm(packets[i], packets[j]) > dn.ORTHO_TOL:
                raise dn.NotOrthogonalError("beam packets overlap")
    nums = []
    tilde = []
    for pk in packets:
        spec = pk.grid(setup.order)
        a = amplitude_spin_measurement(pk, zeta, mode, setup, spec, mode_of_eval,
                                       normalize=False)
        nums.append(a.values)
        tilde.append(1 - measured_probability(pk, zeta, spec))
    rho0 = float(np.prod(tilde))
    if 1 - rho0 < RHO0_TOL:
        raise MeasuredProbabilityZero("measured-state probability zero")
    total = rho0 / (1 - rho0) * sum(n / t for n, t in zip(nums, tilde))
    return BeamResult(total, rho0, nums)


# --- tabulation -------------------------------------------------------------

def tabulate(fn: Callable[[PhotonMode], RadiationAmplitude], grid: PhotonGrid,
             convention: str = "spherical", zeta=None, beta=None):
    """Rows (k0, theta, phi, lam, re, im, normalization, window_mod)."""
    rows = []
    for k0, th, ph, k in grid.points():
        mode = polarization_basis(k, convention, zeta=zeta, beta=beta)
        amp = fn(mode)
        for lam in range(2):
            v = amp.values[lam]
            rows.append((k0, th, ph, lam + 1, float(v.real), float(v.imag),
                         amp.normalization, amp.window_mod))
    return rows
