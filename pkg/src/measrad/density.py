"""Many-body density matrices and one-particle wave-packet kernels.

Discrete part
-------------
A state with a definite particle number per block is stored as tensors
``T_N[a_1..a_N; b_1..b_N]``, the coefficients of
``a^+_{a_1} .. a^+_{a_N} |0><0| a_{b_N} .. a_{b_1} / N!``.  Both index
groups are antisymmetric and ``sum_N tr T_N = 1``.

``reduced_density(R, M)`` returns ``Rm[a_1..a_M; b_1..b_M]
= Sp(R a^+_{b_M} .. a^+_{b_1} a_{a_1} .. a_{a_M})``.  The two-index labels
used in the trace formulas, ``rho_{ab|AB}``, are ``Rm[a, b; B, A]``; see
:func:`label2` and :func:`label3`.

Continuum part
--------------
One-particle kernels ``rho_{ss'}(p, p')`` of spin-1/2 wave packets in
momentum space, their Wigner transforms, and uncorrelated beams.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import fock_oracle as fo
from .pauli import SIGMA, bloch_vector, spin_matrix
from .quadrature import GridSpec, quadrature_sum

MAX_MODES = 12
ORTHO_TOL = 1e-6
WIGNER_TOL = 1e-6


class AliasingWarning(UserWarning):
    pass


class NotOrthogonalError(ValueError):
    pass


def _perm_sign(perm) -> int:
    perm = list(perm)
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, L = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            L += 1
        if L % 2 == 0:
            sign = -sign
    return sign


def antisymmetrize(T: np.ndarray, n_slots: int, offset: int = 0) -> np.ndarray:
    """Signed sum over permutations of axes offset..offset+n_slots-1 (no 1/n!)."""
    out = np.zeros_like(T)
    base = list(range(T.ndim))
    for perm in itertools.permutations(range(n_slots)):
        axes = base.copy()
        for i, p in enumerate(perm):
            axes[offset + i] = offset + p
        out = out + _perm_sign(perm) * np.transpose(T, axes)
    return out


def _kron_power(M: np.ndarray, k: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for _ in range(k):
        out = np.kron(out, M)
    return out


@dataclass(eq=False)
class ManyBodyDensity:
    n_modes: int
    blocks: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_modes > MAX_MODES:
            raise ValueError(f"at most {MAX_MODES} modes are supported")
        blocks = {}
        for N, T in self.blocks.items():
            T = np.asarray(T, dtype=complex)
            if T.shape != (self.n_modes,) * (2 * N):
                raise ValueError(f"block {N} has shape {T.shape}")
            blocks[int(N)] = T
        self.blocks = dict(sorted(blocks.items()))

    # -- constructors -----------------------------------------------------
    @classmethod
    def vacuum(cls, n_modes: int) -> "ManyBodyDensity":
        return cls(n_modes, {0: np.array(1.0 + 0j)})

    @classmethod
    def from_pure(cls, psi: np.ndarray, n_modes: int | None = None,
                  normalize: bool = True) -> "ManyBodyDensity":
        """Pure N-particle state sum psi[a_1..a_N] a^+_{a_1}..|0> / sqrt(N!).

        ``psi`` is antisymmetrized first; an ndim-0 array is the vacuum.
        """
        psi = np.asarray(psi, dtype=complex)
        N = psi.ndim
        n = n_modes if n_modes is not None else (psi.shape[0] if N else 1)
        if N > 1:
            psi = antisymmetrize(psi, N) / math.factorial(N)
        nrm = np.vdot(psi, psi).real
        if nrm == 0:
            raise ValueError("state vanishes after antisymmetrization")
        if normalize:
            psi = psi / math.sqrt(nrm)
        T = np.multiply.outer(psi, psi.conj())
        return cls(n, {N: T})

    @classmethod
    def slater(cls, orbitals: np.ndarray) -> "ManyBodyDensity":
        """Slater determinant of the columns of ``orbitals``."""
        U = np.asarray(orbitals, dtype=complex)
        n, N = U.shape
        psi = np.ones((), dtype=complex)
        for k in range(N):
            psi = np.multiply.outer(psi, U[:, k])
        return cls.from_pure(psi, n)

    @classmethod
    def mixture(cls, weights: Sequence[float],
                states: Sequence["ManyBodyDensity"]) -> "ManyBodyDensity":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("negative mixture weight")
        w = w / w.sum()
        n = states[0].n_modes
        blocks: dict = {}
        for wi, st in zip(w, states):
            for N, T in st.blocks.items():
                blocks[N] = blocks.get(N, 0) + wi * T
        return cls(n, blocks)

    @classmethod
    def from_fock(cls, space: fo.FockSpace, R: np.ndarray,
                  tol: float = 1e-12) -> "ManyBodyDensity":
        """Extract the number-diagonal blocks of a fermionic Fock density."""
        if not space.is_fermionic:
            raise ValueError("only fermionic Fock densities are supported")
        R = fo._dense(R)
        blocks = {}
        for N in range(space.n_modes + 1):
            K = _kets(space, N)
            T = (K.conj().T @ R @ K) / math.factorial(N)
            if N == 0 or np.abs(T).max() > tol:
                blocks[N] = T.reshape((space.n_modes,) * (2 * N))
        return cls(space.n_modes, blocks)

    # -- conversions ------------------------------------------------------
    def to_fock(self, space: fo.FockSpace | None = None) -> np.ndarray:
        space = space or fo.FockSpace.fermionic(self.n_modes)
        if space.n_modes != self.n_modes:
            raise ValueError("mode count mismatch")
        R = np.zeros((space.dim, space.dim), dtype=complex)
        for N, T in self.blocks.items():
            K = _kets(space, N)
            M = T.reshape(self.n_modes ** N, self.n_modes ** N)
            R += K @ M @ K.conj().T / math.factorial(N)
        return R

    def transform(self, U: np.ndarray) -> "ManyBodyDensity":
        """Apply the one-particle unitary U to every particle."""
        U = np.asarray(U, dtype=complex)
        blocks = {}
        for N, T in self.blocks.items():
            UK = _kron_power(U, N)
            M = T.reshape(self.n_modes ** N, -1)
            blocks[N] = (UK @ M @ UK.conj().T).reshape(T.shape)
        return ManyBodyDensity(self.n_modes, blocks)

    # -- checks -----------------------------------------------------------
    @property
    def trace(self) -> float:
        return float(sum(np.trace(T.reshape(self.n_modes ** N, -1)).real
                         for N, T in self.blocks.items()))

    @property
    def max_particles(self) -> int:
        return max(self.blocks) if self.blocks else 0

    def validate(self, tol: float = 1e-10):
        if abs(self.trace - 1) > tol:
            raise ValueError(f"trace is {self.trace}")
        for N, T in self.blocks.items():
            M = T.reshape(self.n_modes ** N, -1)
            if np.abs(M - M.conj().T).max() > tol:
                raise ValueError(f"block {N} is not Hermitian")
            if np.linalg.eigvalsh(0.5 * (M + M.conj().T)).min() < -tol:
                raise ValueError(f"block {N} is not positive")
            if N > 1:
                A = antisymmetrize(T, N) / math.factorial(N)
                if np.abs(A - T).max() > tol:
                    raise ValueError(f"block {N} is not antisymmetric")


def _kets(space: fo.FockSpace, N: int) -> np.ndarray:
    """Columns a^+_{a_1} .. a^+_{a_N}|0> for all multi-indices."""
    _, cre = fo.ladder_matrices(space)
    n = space.n_modes
    vac = space.vacuum()
    K = np.zeros((space.dim, n ** N), dtype=complex)
    for col, idx in enumerate(itertools.product(range(n), repeat=N)):
        v = vac
        for a in reversed(idx):
            v = cre[a] @ v
        K[:, col] = v
    return K


# --- reduced and projected densities ---------------------------------------

def reduced_density(R: ManyBodyDensity, M: int) -> np.ndarray:
    """Rm[a_1..a_M; b_1..b_M] = Sp(R a^+_{b_M}..a^+_{b_1} a_{a_1}..a_{a_M})."""
    return projected_density(R, M, np.eye(R.n_modes))


def projected_density(R: ManyBodyDensity, M: int, Dt: np.ndarray) -> np.ndarray:
    """Sp(R a^+_{b_M}..a^+_{b_1} Pi~_D a_{a_1}..a_{a_M}) with Dt = 1 - D.

    Dt = identity gives :func:`reduced_density`.
    """
    n = R.n_modes
    Dt = np.asarray(Dt, dtype=complex)
    out = np.zeros((n ** M, n ** M), dtype=complex)
    for N, T in R.blocks.items():
        if N < M:
            continue
        K = N - M
        T4 = T.reshape(n ** K, n ** M, n ** K, n ** M)
        fac = math.factorial(N) / math.factorial(K)
        out += fac * np.einsum("iajb,ji->ab", T4, _kron_power(Dt, K))
    return out.reshape((n,) * (2 * M)) if M else out.reshape(())


def label2(R2: np.ndarray) -> np.ndarray:
    """rho_{ab|AB} from the stored two-body tensor."""
    return np.transpose(R2, (0, 1, 3, 2))


def label3(R3: np.ndarray) -> np.ndarray:
    """rho_{abc|ABC} from the stored three-body tensor."""
    return np.transpose(R3, (0, 1, 2, 5, 4, 3))


def vacuum_projected(R: ManyBodyDensity, Dt: np.ndarray) -> float:
    """rho^(0) contracted with Dt, i.e. Sp(R Pi~_D)."""
    return float(np.real(projected_density(R, 0, Dt)))


# --- trace bundles ----------------------------------------------------------

@dataclass
class StimulatedTraces:
    """Electron-side traces needed by the first-order stimulated probability.

    Matrices are indexed [a, A] where A labels the creator a^+_A.
    """

    p_e: complex          # Sp(R Pi_e)
    pp: np.ndarray        # Sp(R Pi_e a^+_A a_a Pi_e)
    pl: np.ndarray        # Sp(R Pi_e a^+_A a_a)
    pr: np.ndarray        # Sp(R a^+_A a_a Pi_e)


def stimulated_traces(R: ManyBodyDensity, De: np.ndarray) -> StimulatedTraces:
    De = np.asarray(De, dtype=complex)
    Dt = np.eye(R.n_modes) - De
    r0 = vacuum_projected(R, Dt)
    r1 = reduced_density(R, 1)
    r1D = projected_density(R, 1, Dt)
    return StimulatedTraces(
        p_e=1 - r0,
        pp=r1 - r1D + De @ r1D @ De,
        pl=r1 - r1D @ Dt,
        pr=r1 - Dt @ r1D,
    )


def stimulated_trace_limits(R: ManyBodyDensity, De: np.ndarray) -> StimulatedTraces:
    """First-order coefficients of :func:`stimulated_traces` as De -> 0."""
    De = np.asarray(De, dtype=complex)
    r1 = reduced_density(R, 1)
    L2 = label2(reduced_density(R, 2)) if R.max_particles >= 2 else \
        np.zeros((R.n_modes,) * 4, dtype=complex)
    c2 = np.einsum("abBA,Bb->aA", L2, De)
    return StimulatedTraces(
        p_e=np.trace(r1 @ De),
        pp=c2,
        pl=c2 + r1 @ De,
        pr=c2 + De @ r1,
    )


@dataclass
class SpontaneousTraces:
    """Four-index electron traces, axes (a, A, b, B).

    t1 = Sp(R a^+_A a_a Pi a^+_B a_b Pi)
    t2 = Sp(R Pi a^+_A a_a Pi a^+_B a_b)
    t3 = Sp(R a^+_A a_a Pi a^+_B a_b)
    t4 = Sp(R Pi a^+_A a_a a^+_B a_b Pi)
    """

    t1: np.ndarray
    t2: np.ndarray
    t3: np.ndarray
    t4: np.ndarray

    def as_tuple(self):
        return (self.t1, self.t2, self.t3, self.t4)


def _two_body(R: ManyBodyDensity, Dt: np.ndarray):
    n = R.n_modes
    if R.max_particles < 2:
        z = np.zeros((n,) * 4, dtype=complex)
        return z, z.copy()
    return label2(reduced_density(R, 2)), label2(projected_density(R, 2, Dt))


def spontaneous_traces(R: ManyBodyDensity, De: np.ndarray) -> SpontaneousTraces:
    n = R.n_modes
    De = np.asarray(De, dtype=complex)
    Dt = np.eye(n) - De
    d = np.eye(n)
    r1 = reduced_density(R, 1)
    r1D = projected_density(R, 1, Dt)
    L2, L2D = _two_body(R, Dt)
    base = np.einsum("aB,bA->aAbB", d, r1 - r1D)

    t1 = (base + np.einsum("aB,bA->aAbB", De, De @ r1D)
          - np.einsum("abAB->aAbB", L2)
          + np.einsum("ax,xbAB->aAbB", Dt, L2D)
          - np.einsum("ax,by,xyAz,zB->aAbB", Dt, De, L2D, De))
    t2 = (base + np.einsum("aB,bA->aAbB", De, r1D @ De)
          - np.einsum("abAB->aAbB", L2)
          + np.einsum("abAz,zB->aAbB", L2D, Dt)
          - np.einsum("ax,xbyz,yA,zB->aAbB", De, L2D, De, Dt))
    t3 = (base + np.einsum("aB,bA->aAbB", De, r1D)
          - np.einsum("abAB->aAbB", L2)
          + np.einsum("ax,xbAz,zB->aAbB", Dt, L2D, Dt))
    pi2 = np.einsum("ax,by->abxy", d, d) - np.einsum("ax,by->abxy", Dt, Dt)
    sandwich = np.einsum("abxy,xyuv,uvAB->abAB", pi2, L2D, pi2)
    t4 = (np.einsum("aB,bA->aAbB", d, r1 - r1D + De @ r1D @ De)
          + np.einsum("abAB->aAbB", -L2 + L2D - sandwich))
    return SpontaneousTraces(t1, t2, t3, t4)


def spontaneous_trace_limits(R: ManyBodyDensity, De: np.ndarray) -> SpontaneousTraces:
    """First-order coefficients of :func:`spontaneous_traces` as De -> 0."""
    n = R.n_modes
    De = np.asarray(De, dtype=complex)
    d = np.eye(n)
    r1 = reduced_density(R, 1)
    L2 = _two_body(R, d)[0]
    if R.max_particles >= 3:
        L3 = label3(reduced_density(R, 3))
    else:
        L3 = np.zeros((n,) * 6, dtype=complex)
    common = (np.einsum("aB,xbAy,yx->aAbB", d, L2, De)
              - np.einsum("xabABy,yx->aAbB", L3, De))
    left = np.einsum("ax,xbAB->aAbB", De, L2)
    right = np.einsum("abAy,yB->aAbB", L2, De)
    t1 = common - left
    t2 = common - right
    t3 = common - left - right + np.einsum("aB,bA->aAbB", De, r1)
    t4 = common
    return SpontaneousTraces(t1, t2, t3, t4)


def spontaneous_trace_bundle(R: ManyBodyDensity, De: np.ndarray):
    """(traces, D_e -> 0 coefficients) for the second-order probability."""
    return spontaneous_traces(R, De), spontaneous_trace_limits(R, De)


# --- photon coherent traces -------------------------------------------------

@dataclass
class PhotonTraces:
    p: complex            # Sp(R_ph Pi_D)
    cdag: np.ndarray      # Sp(R_ph Pi_D c^+_g), index g
    c: np.ndarray         # Sp(R_ph Pi_D c_g), index g


def photon_coherent_traces(d: np.ndarray, D: np.ndarray) -> PhotonTraces:
    d = np.asarray(d, dtype=complex)
    D = np.asarray(D, dtype=complex)
    Dt = np.eye(len(d)) - D
    s = np.vdot(d, D @ d)
    p = 1 - np.exp(-s)
    return PhotonTraces(p, d.conj() @ D + p * (d.conj() @ Dt), p * d)


def photon_coherent_trace_limits(d: np.ndarray, D: np.ndarray) -> PhotonTraces:
    """First-order coefficients of :func:`photon_coherent_traces` as D -> 0."""
    d = np.asarray(d, dtype=complex)
    D = np.asarray(D, dtype=complex)
    s = np.vdot(d, D @ d)
    return PhotonTraces(s, d.conj() @ D + s * d.conj(), s * d)


# --- uncorrelated beams (discrete) -----------------------------------------

def check_orthogonal(rhos: Sequence[np.ndarray], tol: float = ORTHO_TOL):
    for i, j in itertools.combinations(range(len(rhos)), 2):
        nrm = np.linalg.norm(rhos[i] @ rhos[j])
        if nrm > tol:
            raise NotOrthogonalError(
                f"components {i} and {j} overlap: |rho_i rho_j|_F = {nrm:.2e}")


@dataclass(eq=False)
class UncorrelatedBeam:
    """Antisymmetrized product of N mutually orthogonal one-particle states."""

    rhos: list
    tol: float = ORTHO_TOL

    def __post_init__(self):
        self.rhos = [np.asarray(r, dtype=complex) for r in self.rhos]
        for r in self.rhos:
            if abs(np.trace(r) - 1) > 1e-10:
                raise ValueError("component densities must have unit trace")
        check_orthogonal(self.rhos, self.tol)

    @property
    def N(self) -> int:
        return len(self.rhos)

    @property
    def n_modes(self) -> int:
        return self.rhos[0].shape[0]

    @cached_property
    def density(self) -> ManyBodyDensity:
        n, N = self.n_modes, self.N
        P = np.ones((), dtype=complex)
        for r in self.rhos:
            P = np.multiply.outer(P, r)
        # axes (a1, A1, a2, A2, ...) -> (a1..aN, A1..AN)
        P = np.transpose(P, list(range(0, 2 * N, 2)) + list(range(1, 2 * N, 2)))
        T = antisymmetrize(antisymmetrize(P, N), N, offset=N) / math.factorial(N)
        return ManyBodyDensity(n, {N: T})

    @property
    def rho_bar(self) -> np.ndarray:
        return sum(self.rhos) / self.N

    @property
    def deltas(self) -> list:
        rb = self.rho_bar
        return [r - rb for r in self.rhos]

    @property
    def sigma(self) -> np.ndarray:
        """(1/N) sum_i drho_i (x) drho_i with axes (a, A, b, B)."""
        return sum(np.einsum("aA,bB->aAbB", d, d) for d in self.deltas) / self.N

    @property
    def delta3(self) -> np.ndarray:
        return sum(np.einsum("aA,bB,cC->aAbBcC", d, d, d)
                   for d in self.deltas) / self.N

    def reduced_closed(self, M: int) -> np.ndarray:
        """rho^(M) from rho_bar, sigma and the triple average, in stored layout."""
        N = self.N
        rb = self.rho_bar
        if M == 1:
            return N * rb
        if M == 2:
            if N < 2:
                return np.zeros((self.n_modes,) * 4, dtype=complex)
            X = np.einsum("aA,bB->aAbB", rb, rb) - self.sigma / (N - 1)
            X = np.transpose(X, (0, 2, 1, 3))         # (a, b, A, B)
            X = X - np.transpose(X, (0, 1, 3, 2))
            return N * (N - 1) * X
        if M == 3:
            if N < 3:
                return np.zeros((self.n_modes,) * 6, dtype=complex)
            r3 = np.einsum("aA,bB,cC->aAbBcC", rb, rb, rb)
            s = self.sigma
            mix = (np.einsum("aA,bBcC->aAbBcC", rb, s)
                   + np.einsum("bB,aAcC->aAbBcC", rb, s)
                   + np.einsum("cC,aAbB->aAbBcC", rb, s))
            X = r3 - mix / (N - 1) + 2 * self.delta3 / ((N - 1) * (N - 2))
            X = np.transpose(X, (0, 2, 4, 1, 3, 5))
            X = antisymmetrize(X, 3, offset=3)
            return N * (N - 1) * (N - 2) * X
        raise ValueError("closed forms exist for M <= 3")

    def rho0_projected(self, Dt: np.ndarray) -> float:
        return float(np.prod([np.trace(r @ Dt).real for r in self.rhos]))

    def rho1_projected(self, Dt: np.ndarray) -> np.ndarray:
        r0 = self.rho0_projected(Dt)
        return r0 * sum(r / np.trace(r @ Dt).real for r in self.rhos)


# --- entangled pair (discrete) ----------------------------------------------

def uncorrelated_beam(rhos: Sequence[np.ndarray], tol: float = ORTHO_TOL) -> UncorrelatedBeam:
    return UncorrelatedBeam(list(rhos), tol)


@dataclass(eq=False)
class EntangledPair:
    """k sum f[b1, a1] phi2[b1, b2] phi1[a1, a2] a^+_beta a^+_alpha |0>.

    Modes are (spin, orbital) pairs flattened spin-major.  ``De`` must act
    only on the support of particle 1 for the closed forms to be exact.
    """

    f: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=complex)
        self.phi1 = np.asarray(self.phi1, dtype=complex)
        self.phi2 = np.asarray(self.phi2, dtype=complex)

    @property
    def n_modes(self) -> int:
        return self.phi1.size

    def _spin_norms(self, phi):
        return np.einsum("sa,sa->s", phi, phi.conj()).real

    @property
    def norm_inv(self) -> float:
        """|k|^-2 neglecting the overlap of the two particles."""
        return float(np.einsum("ba,a,b->", np.abs(self.f) ** 2,
                               self._spin_norms(self.phi1),
                               self._spin_norms(self.phi2)).real)

    @property
    def k2(self) -> float:
        return 1.0 / self.norm_inv

    def density(self) -> ManyBodyDensity:
        """Exact two-particle density (with any overlap kept)."""
        c = np.einsum("ba,bx,ay->bxay", self.f, self.phi2, self.phi1)
        c = c.reshape(self.n_modes, self.n_modes)
        return ManyBodyDensity.from_pure(c, self.n_modes)

    def reduced(self) -> np.ndarray:
        """rho^(1) for vanishing overlap."""
        n2 = self._spin_norms(self.phi2)
        n1 = self._spin_norms(self.phi1)
        w1 = np.einsum("ba,bc,b->ac", self.f, self.f.conj(), n2)
        w2 = np.einsum("ab,cb,b->ac", self.f, self.f.conj(), n1)
        p1 = np.einsum("ac,ax,cy->axcy", w1, self.phi1, self.phi1.conj())
        p2 = np.einsum("ac,ax,cy->axcy", w2, self.phi2, self.phi2.conj())
        n = self.n_modes
        return self.k2 * (p1 + p2).reshape(n, n)

    def _w1(self) -> np.ndarray:
        n2 = self._spin_norms(self.phi2)
        return np.einsum("ba,bc,b->ac", self.f, self.f.conj(), n2)

    def effective_wavefunction(self) -> np.ndarray:
        """phi_s proportional to phi1_s, carrying particle 1's share of rho^(1).

        Needs a spin correlation that leaves particle 1 spin-diagonal, such
        as f[b, a] nonzero only for b = -a.
        """
        w1 = self._w1()
        if np.abs(w1 - np.diag(np.diag(w1))).max() > 1e-12:
            raise ValueError("particle 1 is not spin-diagonal for this correlation")
        amp = np.sqrt(self.k2 * np.diag(w1).real)
        return amp[:, None] * self.phi1

    def effective_density(self) -> np.ndarray:
        """Particle-1 part of rho^(1)."""
        p1 = np.einsum("ac,ax,cy->axcy", self._w1(), self.phi1, self.phi1.conj())
        n = self.n_modes
        return self.k2 * p1.reshape(n, n)

    def projected(self, De: np.ndarray) -> np.ndarray:
        """rho^(1)_{D~} assuming De acts inside particle 1's support only."""
        n = self.n_modes
        ns, no = self.phi1.shape
        Dt = (np.eye(n) - np.asarray(De)).reshape(ns, no, ns, no)
        G = np.einsum("Ax,AxBy,By->AB", self.phi1.conj(), Dt, self.phi1)
        w2 = np.einsum("ba,BA,Aa->bB", self.f, self.f.conj(), G)
        p2 = np.einsum("bB,bx,By->bxBy", w2, self.phi2, self.phi2.conj())
        return self.effective_density() + self.k2 * p2.reshape(n, n)

    def one_minus_rho0(self, De: np.ndarray) -> float:
        return float(np.trace(self.effective_density() @ De).real)


def entangled_pair(phi1, phi2, f) -> EntangledPair:
    """Spin-correlated pair; phi_i[s, orbital] and f[b, a] as in EntangledPair."""
    return EntangledPair(f, phi1, phi2)


# --- continuum one-particle kernels ------------------------------------------

def _as3(v) -> np.ndarray:
    return np.broadcast_to(np.asarray(v, dtype=float), (3,)).copy()


class OneParticleDensity:
    """rho_{ss'}(p, p'); subclasses implement :meth:`kernel`."""

    def kernel(self, p: np.ndarray, pp: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def spin_decomposed(self, p, pp):
        """(rho, w) with rho_{ss'} = (rho + sigma.w)/2, i.e. w = rho xi."""
        K = self.kernel(p, pp)
        rho = K[..., 0, 0] + K[..., 1, 1]
        w = np.einsum("...ab,jba->...j", K, SIGMA)
        return rho, w

    def diagonal(self, p):
        return self.spin_decomposed(p, p)

    def norm(self, spec: GridSpec) -> float:
        return float(np.real(quadrature_sum(lambda q: self.diagonal(q)[0], spec)))

    # default grid hint for integrals over this density
    def grid(self, order: int = 16) -> GridSpec:
        raise NotImplementedError


def _gauss_amp(p, p0, x0, sigma):
    p = np.asarray(p, dtype=float)
    d = p - p0
    return ((2 * np.pi * sigma**2) ** -0.75
            * np.exp(-np.einsum("...j,...j->...", d, d) / (4 * sigma**2)
                     - 1j * (p @ x0)))


@dataclass(eq=False)
class GaussianPacket(OneParticleDensity):
    """Gaussian packet of momentum width sigma, centred at (x0, p0).

    Give either a Bloch vector ``xi`` (|xi| <= 1, mixed spin allowed) or a
    ``spinor`` (pure state).
    """

    p0: np.ndarray
    x0: np.ndarray
    sigma: float
    xi: np.ndarray | None = None
    spinor: np.ndarray | None = None

    def __post_init__(self):
        self.p0 = _as3(self.p0)
        self.x0 = _as3(self.x0)
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.spinor is not None:
            u = np.asarray(self.spinor, dtype=complex)
            self.spinor = u / np.linalg.norm(u)
            self.xi = bloch_vector(self.spinor)
        else:
            self.xi = _as3(self.xi if self.xi is not None else 0.0)
            if np.linalg.norm(self.xi) > 1 + 1e-12:
                raise ValueError("|xi| must not exceed 1")

    @property
    def is_pure(self) -> bool:
        return self.spinor is not None

    def orbital(self, p) -> np.ndarray:
        return _gauss_amp(p, self.p0, self.x0, self.sigma)

    def wavefunction(self, p) -> np.ndarray:
        if not self.is_pure:
            raise ValueError("packet has a mixed spin state")
        return self.orbital(p)[..., None] * self.spinor

    def scalar_kernel(self, p, pp):
        return self.orbital(p) * np.conj(self.orbital(pp))

    def kernel(self, p, pp):
        s = self.scalar_kernel(p, pp)
        if self.is_pure:
            return s[..., None, None] * np.outer(self.spinor, self.spinor.conj())
        return spin_matrix(s, s[..., None] * self.xi)

    def spin_decomposed(self, p, pp):
        s = self.scalar_kernel(p, pp)
        return s, s[..., None] * self.xi

    def grid(self, order: int = 16) -> GridSpec:
        return GridSpec("gauss-hermite", order, tuple(self.p0), self.sigma)


def gaussian_packet(p0, x0, sigma, xi=None, spinor=None,
                    grid: GridSpec | None = None) -> GaussianPacket:
    """Build a Gaussian packet; reject a grid that does not cover p0 +- 5 sigma."""
    pk = GaussianPacket(p0, x0, sigma, xi, spinor)
    if grid is not None and not grid.covers(pk.p0, 5 * sigma):
        raise ValueError("momentum grid does not cover p0 +- 5 sigma")
    return pk


def gaussian_overlap(a: GaussianPacket, b: GaussianPacket) -> complex:
    """<a|b> of the orbital parts (equal widths)."""
    if abs(a.sigma - b.sigma) > 1e-14 * a.sigma:
        raise ValueError("closed-form overlap needs equal widths")
    s = a.sigma
    dp = a.p0 - b.p0
    dx = a.x0 - b.x0
    pm = 0.5 * (a.p0 + b.p0)
    return complex(np.exp(-dp @ dp / (8 * s * s) - 0.5 * s * s * dx @ dx
                          + 1j * dx @ pm))


def packet_overlap_norm(a: GaussianPacket, b: GaussianPacket) -> float:
    """|rho_a rho_b|_F for two packets."""
    Sa = a.kernel(a.p0, a.p0) / a.scalar_kernel(a.p0, a.p0)
    Sb = b.kernel(b.p0, b.p0) / b.scalar_kernel(b.p0, b.p0)
    return float(abs(gaussian_overlap(a, b)) * np.linalg.norm(Sa @ Sb))


@dataclass(eq=False)
class Mixture(OneParticleDensity):
    components: list
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("negative weight")
        self.weights = w / w.sum()

    def kernel(self, p, pp):
        return sum(w * c.kernel(p, pp) for w, c in zip(self.weights, self.components))

    def spin_decomposed(self, p, pp):
        parts = [c.spin_decomposed(p, pp) for c in self.components]
        rho = sum(w * r for w, (r, _) in zip(self.weights, parts))
        vec = sum(w * v for w, (_, v) in zip(self.weights, parts))
        return rho, vec

    def grid(self, order: int = 16) -> GridSpec:
        return self.components[0].grid(order)


@dataclass(eq=False)
class Superposition(OneParticleDensity):
    """Normalized coherent sum of pure Gaussian packets of equal width."""

    packets: list
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if not all(p.is_pure for p in self.packets):
            raise ValueError("superposed packets need definite spinors")
        G = np.array([[gaussian_overlap(a, b) * np.vdot(a.spinor, b.spinor)
                       for b in self.packets] for a in self.packets])
        nrm = np.real(self.coeffs.conj() @ G @ self.coeffs)
        self.coeffs = self.coeffs / np.sqrt(nrm)

    @property
    def is_pure(self) -> bool:
        return True

    def wavefunction(self, p):
        return sum(c * pk.wavefunction(p) for c, pk in zip(self.coeffs, self.packets))

    def kernel(self, p, pp):
        a = self.wavefunction(p)
        b = self.wavefunction(pp)
        return a[..., :, None] * b.conj()[..., None, :]

    def grid(self, order: int = 16) -> GridSpec:
        return self.packets[0].grid(order)


# --- Wigner transform --------------------------------------------------------

def gaussian_wigner(x, pc, packet: GaussianPacket) -> np.ndarray:
    """Closed-form Wigner function (x, pc) -> 2x2 for a Gaussian packet."""
    s = packet.sigma
    dx = np.asarray(x) - packet.x0
    dp = np.asarray(pc) - packet.p0
    w = 8 * np.exp(-np.einsum("...j,...j", dp, dp) / (2 * s * s)
                   - 2 * s * s * np.einsum("...j,...j", dx, dx))
    if packet.is_pure:
        return w[..., None, None] * np.outer(packet.spinor, packet.spinor.conj())
    return spin_matrix(w, w[..., None] * packet.xi)


def superposition_wigner(x, pc, sup: Superposition) -> np.ndarray:
    """Closed-form Wigner function of a superposition of equal-width packets."""
    x = np.asarray(x, dtype=float)
    pc = np.asarray(pc, dtype=float)
    out = 0
    for ci, a in zip(sup.coeffs, sup.packets):
        for cj, b in zip(sup.coeffs, sup.packets):
            s = a.sigma
            P = 0.5 * (a.p0 + b.p0)
            dP = a.p0 - b.p0
            xb = 0.5 * (a.x0 + b.x0)
            dxx = x - xb
            dpc = pc - P
            w = 8 * np.exp(-np.einsum("...j,...j", dpc, dpc) / (2 * s * s)
                           - 2 * s * s * np.einsum("...j,...j", dxx, dxx)
                           + 1j * dxx @ dP - 1j * pc @ (a.x0 - b.x0))
            out = out + ci * np.conj(cj) * w[..., None, None] * \
                np.outer(a.spinor, b.spinor.conj())
    return out


def wigner_transform(rho: OneParticleDensity, x, pc, qspec: GridSpec,
                     chunk: int = 4096) -> np.ndarray:
    """rho(x, pc) = int dq exp(i q.x) rho(pc + q/2, pc - q/2), paired points."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    pc = np.atleast_2d(np.asarray(pc, dtype=float))
    q, wq = qspec.nodes()
    out = np.zeros((len(x), 2, 2), dtype=complex)
    for s in range(0, len(q), chunk):
        qq, ww = q[s:s + chunk], wq[s:s + chunk]
        K = rho.kernel(pc[:, None, :] + qq / 2, pc[:, None, :] - qq / 2)
        ph = np.exp(1j * x @ qq.T) * ww
        out += np.einsum("mq,mqab->mab", ph, K)
    return out


def inverse_wigner(wfun, p, pp, xspec: GridSpec, chunk: int = 4096) -> np.ndarray:
    """rho(p, p') = (2 pi)^-3 int dx exp(-i (p-p').x) W(x, (p+p')/2).

    ``wfun(x, pc)`` must broadcast over leading axes.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    pp = np.atleast_2d(np.asarray(pp, dtype=float))
    xs, wx = xspec.nodes()
    pc = 0.5 * (p + pp)
    out = np.zeros((len(p), 2, 2), dtype=complex)
    for s in range(0, len(xs), chunk):
        xx, ww = xs[s:s + chunk], wx[s:s + chunk]
        W = wfun(xx[None, :, :], np.broadcast_to(pc[:, None, :], (len(p), len(xx), 3)))
        ph = np.exp(-1j * (p - pp) @ xx.T) * ww
        out += np.einsum("mx,mxab->mab", ph, W)
    return out / (2 * np.pi) ** 3


@dataclass(eq=False)
class WignerView:
    """Wigner representation of a density, with a round-trip alias check."""

    rho: OneParticleDensity
    qspec: GridSpec
    xspec: GridSpec

    def __call__(self, x, pc):
        x = np.asarray(x, dtype=float)
        pc = np.asarray(pc, dtype=float)
        shape = np.broadcast_shapes(x.shape, pc.shape)[:-1]
        xb = np.broadcast_to(x, shape + (3,)).reshape(-1, 3)
        pb = np.broadcast_to(pc, shape + (3,)).reshape(-1, 3)
        return wigner_transform(self.rho, xb, pb, self.qspec).reshape(shape + (2, 2))

    def roundtrip_error(self, p, pp) -> float:
        back = inverse_wigner(self, p, pp, self.xspec)
        ref = self.rho.kernel(np.atleast_2d(p), np.atleast_2d(pp))
        err = float(np.abs(back - ref).max() / max(np.abs(ref).max(), 1e-300))
        if err > WIGNER_TOL:
            warnings.warn(f"Wigner round trip error {err:.2e} exceeds {WIGNER_TOL:.0e}; "
                          "the grids alias the packet", AliasingWarning, stacklevel=2)
        return err


def wigner(rho: OneParticleDensity, qspec: GridSpec | None = None,
           xspec: GridSpec | None = None, order: int = 16) -> WignerView:
    """Wigner view of a packet-like density with default grids.

    The q grid spans twice the packet width and the x grid the conjugate
    width 1/(2 sigma) about the packet centre.  The x rule is kept coarser
    (3/8 of ``order``): its outer nodes carry weights ~exp(x^2), which
    amplify the q-quadrature error of the Wigner values out there.  The
    round-trip check costs len(q) * len(x) kernel evaluations.
    """
    g = rho.grid(order)
    s = np.array(g.scale)
    x0 = getattr(rho, "x0", np.zeros(3))
    qspec = qspec or GridSpec("gauss-hermite", order, (0.0, 0.0, 0.0), tuple(2 * s))
    xspec = xspec or GridSpec("gauss-hermite", max(2, 3 * order // 8), tuple(x0),
                              tuple(0.5 / s))
    return WignerView(rho, qspec, xspec)
