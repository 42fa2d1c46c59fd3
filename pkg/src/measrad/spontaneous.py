"""Second-order (spontaneous) radiation under measurement.

Discrete mode systems reuse the ``V[g, abar, a]`` arrays and
:class:`~measrad.stimulated.VBlocks` of the stimulated module; the photon
is detected with a one-particle projector ``D`` on the photon modes.

Continuum results are photon-number densities per d^3k for a photon of
momentum k, resolved in the polarization pair (f1, f2) of a
:class:`~measrad.kernels.PhotonMode`:

    dP / d^3k = tr(D S),    S[lam, lam'] Hermitian,

with ``D`` the photon polarization projector.  The one-particle emission
vertex is the one documented in :mod:`measrad.stimulated`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import density as dn
from .kernels import LEVI, PhotonGrid, PhotonMode, on_shell_energy, polarization_basis
from .pauli import EYE2, SIGMA
from .polarization import StokesState, UndefinedPolarization, stokes_from_chi
from .quadrature import GridSpec, integrate_3d, window_factor
from .stimulated import (OVERLAP_TOL, RHO0_TOL, MeasuredProbabilityZero, Setup,
                         VBlocks, _check_unit, _const_field, _projector,
                         amplitude_position_measurement, dag, inner_product)
from .stimulated import measured_probability as _spin_measured_probability

TWO_PI3 = (2 * np.pi) ** 3


def _k(T, L, R, D):
    """T_{a A b B} L^g_{A a} R^h_{B b} D_{g h}."""
    return np.einsum("aAbB,gAa,hBb,gh->", T, L, R, D)


def _kl(T, L, R, D):
    """Same contraction for a tensor in the rho_{ab|AB} labelling."""
    return np.einsum("abAB,gAa,hBb,gh->", T, L, R, D)


# --- discrete mode systems --------------------------------------------------

@dataclass
class SpontaneousTerms:
    """Second-order detection probability and its pieces."""

    total: float
    parts: dict
    measured: float | None = None

    @property
    def conditional(self) -> float:
        if self.measured is None or self.measured < RHO0_TOL:
            raise MeasuredProbabilityZero("measured-state probability zero")
        return self.total / self.measured


def probability_general(traces: dn.SpontaneousTraces, D, V: VBlocks,
                        measured: float | None = None) -> SpontaneousTerms:
    """K1 + K2 + K2* + K3 from the four electron traces.

    ``traces`` comes from :func:`measrad.density.spontaneous_traces` (or its
    D_e -> 0 coefficients).  The photon trace over the vacuum is D itself.
    """
    D = np.asarray(D, dtype=complex)
    V1d, V2d = dag(V.V1), dag(V.V2)
    parts = {
        "K1": _k(traces.t4, V2d, V.V2, D),
        "K2": _k(traces.t1, V1d, V.V2, D),
        "K2*": _k(traces.t2, V2d, V.V1, D),
        "K3": _k(traces.t3, V1d, V.V1, D),
    }
    return SpontaneousTerms(float(np.real(sum(parts.values()))), parts, measured)


def probability_blocks(rho1, rho1_proj, L2, L2_proj, De, D, V: VBlocks,
                       measured: float | None = None) -> SpontaneousTerms:
    """Closed five-block form in reduced and projected densities.

    ``rho1_proj`` and ``L2_proj`` are projected with D~ = 1 - De; ``L2`` and
    ``L2_proj`` use the two-index labels of :func:`measrad.density.label2`.
    Parts: "measured" (particle seen by the detector, incoherent),
    "unmeasured", "interference" and "post" (coherent, after measurement).
    """
    De = np.asarray(De, dtype=complex)
    D = np.asarray(D, dtype=complex)
    n = De.shape[0]
    one = np.eye(n)
    Dt = one - De
    V1, V2, V12 = V.V1, V.V2, V.V12
    V1d, V2d, V12d = dag(V1), dag(V2), dag(V12)

    M = np.einsum("gab,bc->gac", V2, De) + np.einsum("ab,gbc->gac", De, V1)
    t1 = np.einsum("bA,gAa,hab,gh->", rho1_proj, dag(M), M, D)

    K = np.einsum("aB,bA->abAB", one, rho1 - rho1_proj) - L2
    t2 = _kl(K, V12d, V12, D)

    L = V2d + np.einsum("gAx,xa->gAa", V1d, Dt)
    R = V2 + np.einsum("Bx,gxb->gBb", Dt, V1)
    a1 = np.einsum("gAx,xa->gAa", V1d, Dt)
    b1 = np.einsum("Bx,gxy,yb->gBb", De, V2, De)
    a2 = np.einsum("Ax,gxy,ya->gAa", De, V2d, De)
    b2 = np.einsum("Bx,gxb->gBb", Dt, V1)
    t3 = _kl(L2_proj, L, R, D) - _kl(L2_proj, a1, b1, D) - _kl(L2_proj, a2, b2, D)

    pi2 = np.einsum("ax,by->abxy", one, one) - np.einsum("ax,by->abxy", Dt, Dt)
    S = np.einsum("abxy,xyuv,uvAB->abAB", pi2, L2_proj, pi2)
    t4 = -_kl(S, V2d, V2, D)
    parts = {"measured": t1, "unmeasured": t2, "interference": t3, "post": t4}
    return SpontaneousTerms(float(np.real(t1 + t2 + t3 + t4)), parts, measured)


def probability_from_density(R: dn.ManyBodyDensity, De, D, V: VBlocks) -> SpontaneousTerms:
    """Five-block form evaluated from a many-body state."""
    n = R.n_modes
    Dt = np.eye(n) - np.asarray(De)
    r1 = dn.reduced_density(R, 1)
    r1D = dn.projected_density(R, 1, Dt)
    L2, L2D = dn._two_body(R, Dt)
    measured = 1.0 - dn.vacuum_projected(R, Dt)
    return probability_blocks(r1, r1D, L2, L2D, De, D, V, measured)


def probability_small_cell(rho1, L2, L3, De, D, V: VBlocks) -> SpontaneousTerms:
    """Leading order for a small measured cell De (``L3`` = label3(rho^(3)))."""
    De = np.asarray(De, dtype=complex)
    D = np.asarray(D, dtype=complex)
    n = De.shape[0]
    one = np.eye(n)
    V1, V12 = V.V1, V.V12
    V1d, V12d = dag(V1), dag(V12)
    t1 = np.einsum("bA,aB,gAa,hBb,gh->", rho1, De, V1d, V1, D)
    K = (np.einsum("aB,xbAy,yx->abAB", one, L2, De)
         - np.einsum("xabABy,yx->abAB", L3, De))
    t2 = _kl(K, V12d, V12, D)
    DV1 = np.einsum("Bx,gxb->gBb", De, V1)
    V1dD = np.einsum("gAx,xa->gAa", V1d, De)
    t3 = -(_kl(L2, V12d, DV1, D) + _kl(L2, V1dD, V12, D))
    parts = {"measured": t1, "unmeasured": t2, "interference": t3}
    measured = float(np.real(np.trace(rho1 @ De)))
    return SpontaneousTerms(float(np.real(t1 + t2 + t3)), parts, measured)


def measured_probability(R: dn.ManyBodyDensity, De) -> float:
    """P(Pi_De) = 1 - rho0_{D~}."""
    Dt = np.eye(R.n_modes) - np.asarray(De)
    return 1.0 - dn.vacuum_projected(R, Dt)


# --- continuum: spectral densities ------------------------------------------

@dataclass
class SpectralDensity:
    """dP/d^3k resolved in photon polarization, S[lam, lam']."""

    k: np.ndarray
    f: np.ndarray
    matrix: np.ndarray
    measured: float = 1.0
    error: float = 0.0
    converged: bool = True
    kind: str = ""
    window_mod: float = 1.0
    parts: dict = field(default_factory=dict)

    @property
    def k0(self) -> float:
        return float(np.linalg.norm(self.k))

    def probability(self, D=None) -> float:
        """tr(D S); D defaults to the identity (polarization summed)."""
        D = EYE2 if D is None else np.asarray(D)
        return float(np.real(np.einsum("ab,ba->", D, self.matrix)))

    def conditional(self, D=None) -> float:
        if self.measured < RHO0_TOL:
            raise MeasuredProbabilityZero("measured-state probability zero")
        return self.probability(D) / self.measured

    def angular(self, D=None) -> float:
        """dP/(dk0 dOmega) = k0^2 tr(D S)."""
        return self.k0**2 * self.probability(D)

    def stokes(self) -> StokesState:
        st = stokes_from_chi(self.matrix)
        return StokesState(st.A, st.b, 1.0)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        M = self.matrix
        return bool(np.abs(M - M.conj().T).max() <= tol * max(np.abs(M).max(), 1e-300))


def _emission(p, mode: PhotonMode, setup: Setup, small_recoil: bool = False):
    """Vertex pieces for emission from p to p' = p - k at every node.

    Returns (U[n, lam, 2, 2], weight[n], G f*, G f, Z f*, Z f) where U is the
    spin matrix u-bar(p') Gamma f*_lam u(p) = (G + sigma.Z) f*/2 and
    weight = 1/(p0 p0' |Delta|^2), times |window|^2 for tau > 0.
    """
    k, k0 = mode.k, mode.k0
    pp = p - k
    e0, e1 = on_shell_energy(p), on_shell_energy(pp)
    if small_recoil:
        pc = pp
        den = k0 * (1 - (pp / e1[:, None]) @ mode.n)
    else:
        pc = p - k / 2
        den = k0 - e0 + e1
    ker = setup.kernel(pc, k)
    fs = np.conj(mode.f)
    gs = ker.G @ fs.T                               # [n, lam]
    gp = ker.G @ mode.f.T
    zs = np.einsum("nji,li->nlj", ker.Z, fs)       # [n, lam, j]
    zp = np.einsum("nji,li->nlj", ker.Z, mode.f)
    U = 0.5 * (gs[..., None, None] * EYE2 + np.einsum("nlj,jab->nlab", zs, SIGMA))
    wt = 1.0 / (e0 * e1 * den**2)
    if setup.tau > 0:
        wt = wt * np.abs(window_factor(setup.tau, den, setup.profile)) ** 2
    return U, wt, gs, gp, zs, zp


def _prefactor(mode: PhotonMode, setup: Setup) -> float:
    return setup.charge**2 / (2 * mode.k0 * TWO_PI3)


def _trace_matrix(W, K):
    """Tr[W_lam K W_lam'^+] per node."""
    return np.einsum("nlab,nbc,nmac->nlm", W, K, W.conj())


def _curly(r, w, z, zp, gs, gp, zs, zp_):
    """rho times the closed spin bracket, per node, as an [n, lam, lam'] array.

    Symmetrizers are unnormalized, (ab) = ab + ba.  Requires a real G and an
    imaginary Z (a Hermitian current).
    """
    d = zp - z
    s = z + zp
    s2 = np.einsum("nj,nj->n", s, s)
    cz = np.cross(z, zp)
    sw = np.cross(s, w)
    wz = np.einsum("nj,nj->n", w, z)
    dd = np.einsum("nj,nj->n", d, d)
    gg = (r * dd)[:, None, None] * gs[:, :, None] * gp[:, None, :]
    czs = np.einsum("nj,nlj->nl", cz, zs)
    czp = np.einsum("nj,nlj->nl", cz, zp_)
    gz1 = -2j * r[:, None, None] * (gp[:, None, :] * czs[:, :, None]
                                    + gs[:, :, None] * czp[:, None, :])
    ds = np.einsum("nj,nlj->nl", d, zs)
    dp = np.einsum("nj,nlj->nl", d, zp_)
    gz2 = -2 * wz[:, None, None] * (gp[:, None, :] * ds[:, :, None]
                                    - gs[:, :, None] * dp[:, None, :])
    C = (r[:, None, None] * (s2[:, None, None] * np.eye(3)
                             - 2 * (np.einsum("na,nb->nab", z, zp)
                                    + np.einsum("na,nb->nab", zp, z)))
         + 2j * (np.einsum("na,nb->nab", z, sw) - np.einsum("na,nb->nab", sw, z))
         + 1j * s2[:, None, None] * np.einsum("nk,kab->nab", w, LEVI))
    zz = -np.einsum("nmA,nAB,nlB->nlm", zp_, C, zs)
    return gg + gz1 + gz2 + zz


def _reduced(r, w, z, zs, zp_):
    """rho Pi[lam, lam'] for zeta' = zeta."""
    zw = np.cross(z, w)
    C = (r[:, None, None] * (np.eye(3) - np.einsum("na,nb->nab", z, z))
         + 1j * (np.einsum("na,nb->nab", z, zw) - np.einsum("na,nb->nab", zw, z))
         + 1j * np.einsum("nk,kab->nab", w, LEVI))
    return -np.einsum("nmA,nAB,nlB->nlm", zp_, C, zs)


def _window_mod(mode, p_center, setup, small_recoil=False) -> float:
    if setup.tau == 0:
        return 1.0
    p = np.asarray(p_center, dtype=float)[None, :]
    den = mode.k0 - on_shell_energy(p) + on_shell_energy(p - mode.k)
    return float(abs(window_factor(setup.tau, den, setup.profile))[0])


def spectrum_spin_measured(rho: dn.OneParticleDensity, zeta, mode: PhotonMode,
                           setup: Setup | None = None, spec: GridSpec | None = None,
                           route: str = "trace", small_recoil: bool = False,
                           normalize: bool = False) -> SpectralDensity:
    """Spin projection along zeta(p) at t0; photon of momentum k detected later.

    The integral runs over the initial momentum p (p' = p - k), so only the
    momentum diagonal rho(p, p) enters.

    route
        "trace": Tr[W rho(p,p) W^+] with W = P(zeta(p')) U - U P(zeta(p)).
        "curly": the closed spin bracket in G, Z, zeta, zeta' and xi.
        "reduced": the zeta' = zeta form; zeta is taken at p for both.
    small_recoil
        kernel at p', denominator k0 (1 - n.beta'); the p0 p0' weights stay
        exact.
    """
    setup = setup or Setup()
    spec = spec or rho.grid(setup.order)
    z_of = _const_field(zeta)
    k = mode.k

    def f(p):
        U, wt, gs, gp, zs, zp_ = _emission(p, mode, setup, small_recoil)
        zeta_p = np.asarray(z_of(p), dtype=float)
        zeta_pp = np.asarray(z_of(p - k), dtype=float)
        _check_unit(zeta_p)
        _check_unit(zeta_pp)
        if route == "trace":
            W = (np.einsum("nab,nlbc->nlac", _projector(zeta_pp), U)
                 - np.einsum("nlab,nbc->nlac", U, _projector(zeta_p)))
            M = _trace_matrix(W, rho.kernel(p, p))
        elif route == "curly":
            r, w = rho.spin_decomposed(p, p)
            M = _curly(r, w, zeta_p, zeta_pp, gs, gp, zs, zp_) / 16
        elif route == "reduced":
            r, w = rho.spin_decomposed(p, p)
            M = _reduced(r, w, zeta_p, zs, zp_) / 4
        else:
            raise ValueError(f"unknown route {route!r}")
        return M * wt[:, None, None]

    res = integrate_3d(f, spec, rtol=setup.rtol)
    c = _prefactor(mode, setup)
    meas = _spin_measured_probability(rho, zeta, spec) if normalize else 1.0
    return SpectralDensity(mode.k, mode.f, c * res.value, meas, c * res.error,
                           res.converged, f"spin-{route}",
                           _window_mod(mode, spec.center, setup))


def spectrum_incoherent(rho: dn.OneParticleDensity, mode: PhotonMode,
                        setup: Setup | None = None, spec: GridSpec | None = None,
                        small_recoil: bool = False) -> SpectralDensity:
    """sum over final states of |<p' s'|V|rho>|^2: incoherent edge radiation."""
    setup = setup or Setup()
    spec = spec or rho.grid(setup.order)

    def f(p):
        U, wt, *_ = _emission(p, mode, setup, small_recoil)
        return _trace_matrix(U, rho.kernel(p, p)) * wt[:, None, None]

    res = integrate_3d(f, spec, rtol=setup.rtol)
    c = _prefactor(mode, setup)
    return SpectralDensity(mode.k, mode.f, c * res.value, 1.0, c * res.error,
                           res.converged, "incoherent",
                           _window_mod(mode, spec.center, setup))


def _unit_spinor(chi):
    chi = np.asarray(chi, dtype=complex)
    n = np.linalg.norm(chi)
    if chi.shape != (2,) or abs(n - 1) > 1e-10:
        raise ValueError("chi must be a normalized 2-spinor")
    return chi


def spectrum_momentum_measured(rho: dn.OneParticleDensity, p_r, mode: PhotonMode,
                               chi=None, setup: Setup | None = None,
                               small_recoil: bool = False) -> SpectralDensity:
    """Density in the measured momentum p_r (and spin chi, if given).

    ``matrix`` is dP/(d^3p_r d^3k) and ``measured`` is
    dP(Pi_De)/d^3p_r = chi^+ rho(p_r, p_r) chi (trace if chi is None).
    """
    setup = setup or Setup()
    p_r = np.asarray(p_r, dtype=float)
    p = (p_r + mode.k)[None, :]
    U, wt, *_ = _emission(p, mode, setup, small_recoil)
    Kp = rho.kernel(p, p)
    K0 = rho.kernel(p_r[None, :], p_r[None, :])[0]
    if chi is None:
        W = U
        meas = float(np.real(np.trace(K0)))
    else:
        chi = _unit_spinor(chi)
        Pc = np.outer(chi, chi.conj())
        W = np.einsum("ab,nlbc->nlac", Pc, U)
        meas = float(np.real(chi.conj() @ K0 @ chi))
    M = _trace_matrix(W, Kp)[0] * wt[0]
    return SpectralDensity(mode.k, mode.f, _prefactor(mode, setup) * M, meas,
                           kind="momentum",
                           window_mod=_window_mod(mode, p[0], setup))


def momentum_charged_limit(rho: dn.OneParticleDensity, p_r, mode: PhotonMode, chi=None,
                           charge: float | None = None, F_e: float = 1.0) -> SpectralDensity:
    """Small-recoil, charge-dominated form of :func:`spectrum_momentum_measured`.

    e^2 F_e^2 chi^+ rho(p, p) chi (beta'.f*)(beta'.f) / ((1 - n.beta')^2 2 k0^3 (2pi)^3).
    """
    e = Setup().charge if charge is None else charge
    p_r = np.asarray(p_r, dtype=float)
    k0 = mode.k0
    beta = p_r / on_shell_energy(p_r)
    p = (p_r + mode.k)[None, :]
    Kp = rho.kernel(p, p)[0]
    K0 = rho.kernel(p_r[None, :], p_r[None, :])[0]
    if chi is None:
        q, meas = np.trace(Kp), np.trace(K0)
    else:
        chi = _unit_spinor(chi)
        q, meas = chi.conj() @ Kp @ chi, chi.conj() @ K0 @ chi
    bf = np.conj(mode.f) @ beta
    M = np.outer(bf, bf.conj()) * np.real(q)
    c = e**2 * F_e**2 / ((1 - mode.n @ beta) ** 2 * 2 * k0**3 * TWO_PI3)
    return SpectralDensity(mode.k, mode.f, c * M, float(np.real(meas)),
                           kind="momentum-charged-limit")


# --- continuum: position (pure-state) measurement ---------------------------

@dataclass
class PositionSpontaneous:
    """Joint density |<psi|phi>|^2 [incoherent + interference + transition]."""

    spectrum: SpectralDensity
    terms: dict
    amplitude: object

    def probability(self, D=None) -> float:
        return self.spectrum.probability(D)

    def conditional(self, D=None) -> float:
        return self.spectrum.conditional(D)

    def term(self, name: str, D=None) -> float:
        D = EYE2 if D is None else np.asarray(D)
        return float(np.real(np.einsum("ab,ba->", D, self.terms[name])))


def probability_position_measured(psi, phi, mode: PhotonMode, setup: Setup | None = None,
                                  spec: GridSpec | None = None) -> PositionSpontaneous:
    """Projective measurement onto the pure state phi of a particle in psi.

    Terms (each already multiplied by |<psi|phi>|^2):
      "incoherent"   sum over final states of |<a|V_out|phi>|^2
      "interference" post x transition^* + transition x post^*
      "transition"   |<phi|V_in|psi>/<phi|psi>|^2
    plus the diagnostic "post_coherent" = |<phi|V_out|phi>|^2, which is not
    part of the total; "incoherent" - "post_coherent" is positive
    semidefinite.
    """
    setup = setup or Setup()
    ov = inner_product(phi, psi)
    if abs(ov) < OVERLAP_TOL:
        raise MeasuredProbabilityZero("incompatible measurement outcome")
    spec = spec or phi.grid(setup.order)
    amp = amplitude_position_measurement(psi, phi, mode, setup, spec)
    inc = spectrum_incoherent(phi, mode, setup, spec)
    w = abs(ov) ** 2
    tr = np.asarray(amp.parts["transition"])
    post = np.asarray(amp.parts["post"])
    outer = lambda a, b: np.outer(a, np.conj(b)) / TWO_PI3
    terms = {
        "incoherent": w * inc.matrix,
        "interference": w * (outer(post, tr) + outer(tr, post)),
        "transition": w * outer(tr, tr),
        "post_coherent": w * outer(post, post),
    }
    total = terms["incoherent"] + terms["interference"] + terms["transition"]
    sd = SpectralDensity(mode.k, mode.f, total, w, inc.error * w + amp.error,
                         inc.converged and amp.converged, "position",
                         amp.window_mod, {k: v for k, v in terms.items()})
    return PositionSpontaneous(sd, terms, amp)


# --- tables -----------------------------------------------------------------

def stokes_row(sd: SpectralDensity):
    """(A, b1, b2, b3, dP/(dk0 dOmega)); b is nan where the density vanishes."""
    try:
        st = sd.stokes()
        A, b = st.A, st.b
    except UndefinedPolarization:
        A, b = 0.0, np.full(3, np.nan)
    return (float(A), float(b[0]), float(b[1]), float(b[2]), sd.angular())


def tabulate(fn: Callable[[PhotonMode], SpectralDensity], grid: PhotonGrid,
             convention: str = "spherical", zeta=None, beta=None, mapper=map):
    """Rows (k0, theta, phi, A, b1, b2, b3, dP) and the raw matrices.

    ``mapper`` may be an ordered parallel map (for example
    ``ThreadPoolExecutor.map``); results do not depend on it.
    """
    pts = list(grid.points())
    modes = [polarization_basis(k, convention, zeta=zeta, beta=beta) for *_, k in pts]
    results = list(mapper(fn, modes))
    rows, raw = [], []
    for (k0, th, ph, _), sd in zip(pts, results):
        rows.append((k0, th, ph) + stokes_row(sd))
        raw.append({"k0": k0, "theta": th, "phi": ph,
                    "re": np.real(sd.matrix).tolist(), "im": np.imag(sd.matrix).tolist()})
    return rows, raw
