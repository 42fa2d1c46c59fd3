"""Exact second-quantized reference operators on small, truncated mode sets.

Everything here is brute force on purpose.  The closed forms elsewhere in the
package are checked against these matrices, so nothing in this module may
depend on them.

Basis ordering: mode 0 is the most significant digit of the basis index and
the basis vector with occupations (n_0, ..., n_{M-1}) equals
``(a_0^+)^{n_0} ... (a_{M-1}^+)^{n_{M-1}} |0>`` up to the bosonic
``1/sqrt(n!)`` factors.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

DIM_CAP = 2**14
PROJECTOR_TOL = 1e-12


class DimensionOverflow(ValueError):
    """Raised when a requested Fock space exceeds the dimension cap."""


@dataclass(frozen=True)
class FockSpace:
    n_modes: int
    statistics: str = "fermionic"
    cutoff: int = 1
    dim_cap: int = DIM_CAP

    def __post_init__(self):
        if self.statistics not in ("fermionic", "bosonic"):
            raise ValueError(f"unknown statistics {self.statistics!r}")
        if self.n_modes < 1:
            raise ValueError("need at least one mode")
        if self.statistics == "fermionic":
            object.__setattr__(self, "cutoff", 1)
        elif self.cutoff < 1:
            raise ValueError("bosonic cutoff must be >= 1")
        if self.dim > self.dim_cap:
            raise DimensionOverflow(
                f"Fock dimension {self.dim} exceeds cap {self.dim_cap}")

    @classmethod
    def fermionic(cls, n_modes: int, **kw) -> "FockSpace":
        return cls(n_modes, "fermionic", 1, **kw)

    @classmethod
    def bosonic(cls, n_modes: int, cutoff: int, **kw) -> "FockSpace":
        return cls(n_modes, "bosonic", cutoff, **kw)

    @property
    def local_dim(self) -> int:
        return self.cutoff + 1

    @property
    def dim(self) -> int:
        return self.local_dim ** self.n_modes

    @property
    def is_fermionic(self) -> bool:
        return self.statistics == "fermionic"

    def occupations(self) -> np.ndarray:
        """Occupation table of shape (dim, n_modes)."""
        grids = np.indices((self.local_dim,) * self.n_modes)
        return grids.reshape(self.n_modes, -1).T.copy()

    def total_number(self) -> np.ndarray:
        return self.occupations().sum(axis=1)

    def index(self, occ: Sequence[int]) -> int:
        i = 0
        for n in occ:
            i = i * self.local_dim + int(n)
        return i

    def basis_state(self, occ: Sequence[int]) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(occ)] = 1.0
        return v

    def vacuum(self) -> np.ndarray:
        return self.basis_state([0] * self.n_modes)


@lru_cache(maxsize=32)
def ladder_matrices(space: FockSpace) -> tuple[tuple, tuple]:
    """Annihilators and creators as sparse CSR matrices, one per mode.

    Fermions use the Jordan-Wigner string on lower-index modes.  Bosonic
    matrices are the truncated ones; they obey the canonical relations only
    on states without weight at the cutoff.
    """
    d = space.local_dim
    eye = sp.identity(d, dtype=complex, format="csr")
    if space.is_fermionic:
        local = sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))
        string = sp.csr_matrix(np.diag([1.0, -1.0]).astype(complex))
    else:
        local = sp.csr_matrix(np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex))
        string = eye
    ann = []
    for k in range(space.n_modes):
        op = sp.identity(1, dtype=complex, format="csr")
        for j in range(space.n_modes):
            f = string if j < k else (local if j == k else eye)
            op = sp.kron(op, f, format="csr")
        ann.append(op)
    cre = [a.conj().T.tocsr() for a in ann]
    return tuple(ann), tuple(cre)


def _dense(op) -> np.ndarray:
    return op.toarray() if sp.issparse(op) else np.asarray(op)


def mode_operators(space: FockSpace, vectors: np.ndarray) -> list:
    """Annihilators of the modes spanned by the columns of ``vectors``.

    Column u gives b = sum_alpha conj(u_alpha) a_alpha.
    """
    ann, _ = ladder_matrices(space)
    vectors = np.atleast_2d(np.asarray(vectors, dtype=complex))
    if vectors.shape[0] != space.n_modes:
        vectors = vectors.T
    out = []
    for u in vectors.T:
        b = sum(np.conj(u[a]) * ann[a] for a in range(space.n_modes))
        out.append(b.tocsr())
    return out


def bilinear(space: FockSpace, M: np.ndarray):
    """Sparse operator sum_{ab} M[a, b] a_a^+ a_b."""
    ann, cre = ladder_matrices(space)
    n = space.n_modes
    out = sp.csr_matrix((space.dim, space.dim), dtype=complex)
    for a in range(n):
        for b in range(n):
            if M[a, b] != 0:
                out = out + M[a, b] * (cre[a] @ ann[b])
    return out.tocsr()


@dataclass(frozen=True, eq=False)
class OneParticleProjector:
    """Orthogonal projector D on the one-particle space."""

    D: np.ndarray

    def __post_init__(self):
        D = np.asarray(self.D, dtype=complex)
        object.__setattr__(self, "D", D)
        validate_one_particle_projector(D)

    @classmethod
    def from_vectors(cls, vectors: np.ndarray) -> "OneParticleProjector":
        q, _ = np.linalg.qr(np.atleast_2d(np.asarray(vectors, dtype=complex)))
        return cls(q @ q.conj().T)

    @property
    def tilde(self) -> np.ndarray:
        return np.eye(self.D.shape[0]) - self.D

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.D).real))

    def range_vectors(self) -> np.ndarray:
        w, v = np.linalg.eigh(self.D)
        return v[:, w > 0.5]


def validate_one_particle_projector(D: np.ndarray, tol: float = 1e-10):
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("projector must be a square matrix")
    if np.abs(D - D.conj().T).max() > tol:
        raise ValueError("projector is not Hermitian")
    if np.abs(D @ D - D).max() > tol:
        raise ValueError("projector is not idempotent")


def _as_projector(D) -> np.ndarray:
    if isinstance(D, OneParticleProjector):
        return D.D
    D = np.asarray(D, dtype=complex)
    validate_one_particle_projector(D)
    return D


def _sector_spectral_projector(space: FockSpace, H, keep) -> np.ndarray:
    """Spectral projector of a number-conserving Hermitian operator.

    The operator is diagonalized block by block in total particle number;
    ``keep`` maps eigenvalues to a boolean mask.
    """
    H = _dense(H)
    tot = space.total_number()
    P = np.zeros((space.dim, space.dim), dtype=complex)
    for n in np.unique(tot):
        idx = np.flatnonzero(tot == n)
        block = H[np.ix_(idx, idx)]
        block = 0.5 * (block + block.conj().T)
        w, v = np.linalg.eigh(block)
        v = v[:, keep(w)]
        P[np.ix_(idx, idx)] = v @ v.conj().T
    return P


def number_operator(space: FockSpace, D) -> sp.csr_matrix:
    """N_D = a^+ D a."""
    return bilinear(space, _as_projector(D))


def projector_pi_N(space: FockSpace, D, N: int) -> np.ndarray:
    """Projector onto states with at least N particles in range(D)."""
    if N < 0:
        raise ValueError("N must be non-negative")
    ND = number_operator(space, D)
    return _sector_spectral_projector(space, ND, lambda w: w >= N - 0.5)


def projector_pi_tilde(space: FockSpace, D) -> np.ndarray:
    """Projector onto states with no particle in range(D)."""
    return np.eye(space.dim) - projector_pi_N(space, D, 1)


def projector_pi(space: FockSpace, D) -> np.ndarray:
    """Projector onto states with at least one particle in range(D)."""
    return projector_pi_N(space, D, 1)


def normal_ordered_coefficients(N: int, m_max: int) -> np.ndarray:
    """Taylor coefficients of e_{N-1}(x) exp(-x) up to x^m_max."""
    c = np.zeros(m_max + 1)
    for m in range(m_max + 1):
        c[m] = sum((-1) ** (m - j) / (math.factorial(j) * math.factorial(m - j))
                   for j in range(min(N - 1, m) + 1))
    return c


def normal_ordered_power(space: FockSpace, H: np.ndarray, m: int) -> np.ndarray:
    """:(a^+ H a)^m: for a Hermitian one-particle matrix H."""
    if m == 0:
        return np.eye(space.dim, dtype=complex)
    lam, vec = np.linalg.eigh(np.asarray(H, dtype=complex))
    keep = np.abs(lam) > 1e-14
    lam, vec = lam[keep], vec[:, keep]
    bs = mode_operators(space, vec)
    out = np.zeros((space.dim, space.dim), dtype=complex)
    for combo in itertools.product(range(m + 1), repeat=len(bs)):
        if sum(combo) != m:
            continue
        coef = math.factorial(m)
        left = sp.identity(space.dim, dtype=complex, format="csr")
        right = sp.identity(space.dim, dtype=complex, format="csr")
        for mk, lk, b in zip(combo, lam, bs):
            coef *= lk ** mk / math.factorial(mk)
            for _ in range(mk):
                # annihilators in reverse order, so fermionic pairs nest
                left = left @ b.conj().T
                right = b @ right
        out += coef * _dense(left @ right)
    return out


def normal_ordered_pi_N(space: FockSpace, H: np.ndarray, N: int,
                        m_max: int | None = None) -> np.ndarray:
    """1 - :e_{N-1}(x) exp(-x):, x = a^+ H a, as a truncated series.

    H need not be a projector, which is what the small-cell limits use.
    """
    if m_max is None:
        m_max = space.n_modes * space.cutoff
    c = normal_ordered_coefficients(N, m_max)
    out = np.eye(space.dim, dtype=complex)
    for m in range(m_max + 1):
        if c[m] != 0:
            out -= c[m] * normal_ordered_power(space, H, m)
    return out


def coherent_state(space: FockSpace, d: np.ndarray, tail_tol: float = 1e-10,
                   normalized: bool = True) -> np.ndarray:
    """Truncated coherent ket prod_k exp(-|d_k|^2/2) exp(d_k c_k^+)|0>.

    ``normalized=False`` drops the exp(-|d|^2/2) factors.
    """
    if space.is_fermionic:
        raise ValueError("coherent states need a bosonic space")
    d = np.asarray(d, dtype=complex)
    if d.shape != (space.n_modes,):
        raise ValueError("one amplitude per mode required")
    n = np.arange(space.local_dim)
    fact = np.sqrt([math.factorial(int(k)) for k in n])
    psi = np.ones(1, dtype=complex)
    for dk in d:
        local = dk ** n / fact
        if normalized:
            local = local * np.exp(-abs(dk) ** 2 / 2)
        psi = np.kron(psi, local)
    if normalized:
        tail = 1.0 - np.vdot(psi, psi).real
        if tail > tail_tol:
            raise ValueError(f"coherent state truncation loss {tail:.2e} exceeds "
                             f"{tail_tol:.0e}; raise the cutoff")
    return psi


def density_from_ket(psi: np.ndarray) -> np.ndarray:
    return np.outer(psi, psi.conj())


def validate_density(R: np.ndarray, tol: float = 1e-10):
    R = _dense(R)
    if np.abs(R - R.conj().T).max() > tol:
        raise ValueError("density operator is not Hermitian")
    tr = np.trace(R).real
    if abs(tr - 1.0) > tol:
        raise ValueError(f"density operator has trace {tr}")
    if np.linalg.eigvalsh(0.5 * (R + R.conj().T)).min() < -tol:
        raise ValueError("density operator is not positive")


def trace_expectation(R, ops: Sequence) -> complex:
    """Tr(R op_1 op_2 ...)."""
    M = _dense(R)
    for op in ops:
        M = M @ op if not sp.issparse(op) else (op.T @ M.T).T
    return complex(np.trace(M))


def chain_probability(R, steps: Sequence[tuple], validate: bool = True) -> float:
    """Sequential evolve-and-project probability.

    ``steps`` is a list of ``(U, P)`` pairs applied in order; either may be
    None.  Returns Tr(P_n U_n ... P_1 U_1 R U_1^+ P_1 ... U_n^+ P_n).
    """
    M = _dense(R).astype(complex)
    if validate:
        validate_density(M)
    for U, P in steps:
        if U is not None:
            U = _dense(U)
            M = U @ M @ U.conj().T
        if P is not None:
            P = _dense(P)
            M = P @ M @ P
    return float(np.trace(M).real)


def chain_probability_factored(K, steps: Sequence[tuple]) -> float:
    """Same as :func:`chain_probability` for R = K K^+, propagating K only."""
    K = _dense(K).astype(complex)
    for U, P in steps:
        if U is not None:
            K = _dense(U) @ K
        if P is not None:
            K = _dense(P) @ K
    return float(np.vdot(K, K).real)


def density_factor(R, tol: float = 1e-14) -> np.ndarray:
    """K with K K^+ = R for a positive semidefinite R."""
    w, v = np.linalg.eigh(0.5 * (_dense(R) + _dense(R).conj().T))
    keep = w > tol * max(w.max(), 1.0)
    return v[:, keep] * np.sqrt(w[keep])


def kron_ops(*ops) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, _dense(op))
    return out


def interaction_operator(electron: FockSpace, photon: FockSpace,
                         V: np.ndarray) -> np.ndarray:
    """First-order vertex on electron (x) photon.

    V[g, ab, a] multiplies a^+_ab a_a c^+_g; the photon annihilation part is
    fixed by anti-Hermiticity, so the returned operator satisfies X^+ = -X.
    """
    V = np.asarray(V, dtype=complex)
    n_ph, n_e = photon.n_modes, electron.n_modes
    if V.shape != (n_ph, n_e, n_e):
        raise ValueError(f"V must have shape {(n_ph, n_e, n_e)}")
    _, cph = ladder_matrices(photon)
    out = np.zeros((electron.dim * photon.dim,) * 2, dtype=complex)
    for g in range(n_ph):
        F = _dense(bilinear(electron, V[g]))
        out += np.kron(F, _dense(cph[g]))
    return out - out.conj().T


def second_quantize(small: FockSpace, big: FockSpace, J: np.ndarray) -> np.ndarray:
    """Fock-space lift of an isometry J (big modes x small modes).

    Maps (a_0^+)^{n_0} ... |0> to (b_0^+)^{n_0} ... |0> with
    b_k^+ = sum_j J[j, k] A_j^+, normalized like the basis vectors.
    """
    J = np.asarray(J, dtype=complex)
    if J.shape != (big.n_modes, small.n_modes):
        raise ValueError("J has the wrong shape")
    if np.abs(J.conj().T @ J - np.eye(small.n_modes)).max() > 1e-10:
        raise ValueError("J is not an isometry")
    if small.statistics != big.statistics:
        raise ValueError("statistics mismatch")
    _, cre = ladder_matrices(big)
    bdag = [sum(J[j, k] * cre[j] for j in range(big.n_modes)).tocsr()
            for k in range(small.n_modes)]
    occ = small.occupations()
    G = np.zeros((big.dim, small.dim), dtype=complex)
    vac = big.vacuum()
    for col, ns in enumerate(occ):
        v = vac.copy()
        norm = 1.0
        for k in reversed(range(small.n_modes)):
            for _ in range(ns[k]):
                v = bdag[k] @ v
            norm *= math.factorial(int(ns[k]))
        G[:, col] = v / math.sqrt(norm)
    return G


def embed_mode_isometry(n_modes: int, cell_vectors: np.ndarray,
                        eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Isometry splitting each cell vector u_k into sqrt(eps) c_k + sqrt(1-eps) r_k.

    Returns (J, D_big) with D_big the projector on the new c_k modes.  The
    complement of the cell keeps its own modes.  Big-mode order is
    complement, then cells c_k, then rests r_k.
    """
    U = np.atleast_2d(np.asarray(cell_vectors, dtype=complex))
    if U.shape[0] != n_modes:
        U = U.T
    q, _ = np.linalg.qr(U)
    r = q.shape[1]
    full, _ = np.linalg.qr(np.hstack([q, np.eye(n_modes)]))
    comp = full[:, r:n_modes]
    nb = (n_modes - r) + 2 * r
    J = np.zeros((nb, n_modes), dtype=complex)
    nc = n_modes - r
    J[:nc, :] = comp.conj().T
    for k in range(r):
        J[nc + k, :] = np.sqrt(eps) * q[:, k].conj()
        J[nc + r + k, :] = np.sqrt(1 - eps) * q[:, k].conj()
    Dbig = np.zeros((nb, nb), dtype=complex)
    for k in range(r):
        Dbig[nc + k, nc + k] = 1.0
    return J, Dbig


def linear_coefficient(f, eps_max: float = 0.5, n_nodes: int = 12,
                       degree: int = 8) -> complex:
    """First-order Taylor coefficient of a polynomial-in-eps callable.

    Fits on Chebyshev nodes in (0, eps_max]; exact when f is a polynomial
    of degree <= ``degree``.
    """
    j = np.arange(n_nodes)
    x = np.cos((2 * j + 1) * np.pi / (2 * n_nodes))
    eps = 0.5 * eps_max * (x + 1)
    vals = np.array([f(e) for e in eps])
    V = np.vander(eps / eps_max, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, vals, rcond=None)
    return coef[1] / eps_max
