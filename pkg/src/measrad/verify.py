"""Randomized oracle suites: closed forms against brute-force Fock matrices.

Each suite draws random instances from a seeded generator and reports one
:class:`CheckResult` per identity, holding the worst error seen.  Bosonic
spaces are truncated, so operator relations there are compared only on
states whose total occupation is below the cutoff, where the truncated
ladder operators are exact.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from . import density as dn
from . import fock_oracle as fo
from . import spontaneous as spn
from . import stimulated as stm

PROJECTOR_TOL = 1e-12
TRACE_TOL = 1e-10
CLOSURE_TOL = 1e-10


@dataclass
class CheckResult:
    name: str
    max_error: float = 0.0
    tolerance: float = PROJECTOR_TOL
    n: int = 0
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error <= self.tolerance)

    def update(self, err: float):
        self.max_error = max(self.max_error, float(err))
        self.n += 1

    def row(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"{flag}  {self.name:<40s} max_err={self.max_error:.3e} "
                f"tol={self.tolerance:.0e} n={self.n}")


@dataclass
class _Collector:
    tol: float
    results: dict = field(default_factory=dict)

    def add(self, name: str, err: float):
        if name not in self.results:
            self.results[name] = CheckResult(name, tolerance=self.tol)
        self.results[name].update(err)

    def rel(self, name: str, got, ref):
        got = np.asarray(got)
        ref = np.asarray(ref)
        scale = float(np.abs(ref).max()) if ref.size else 0.0
        diff = float(np.abs(got - ref).max()) if ref.size else 0.0
        self.add(name, diff / scale if scale > 0 else diff)

    def done(self, t0: float) -> list[CheckResult]:
        dt = time.perf_counter() - t0
        out = list(self.results.values())
        for r in out:
            r.seconds = dt
        return out


# --- random instances -------------------------------------------------------

def random_projector(rng, n: int, rank: int) -> np.ndarray:
    if rank == 0:
        return np.zeros((n, n), dtype=complex)
    X = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    return fo.OneParticleProjector.from_vectors(X).D


def random_unitary(rng, n: int) -> np.ndarray:
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(X)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_fock_density(rng, space: fo.FockSpace, rank: int | None = None) -> np.ndarray:
    """Random density commuting with the total particle number."""
    d = space.dim
    rank = rank or d
    X = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    R = X @ X.conj().T
    tot = space.total_number()
    R = R * (tot[:, None] == tot[None, :])
    return R / np.trace(R).real


def _random_amplitude(rng, n: int, r_max: float) -> np.ndarray:
    """Coherent amplitude with random direction and norm below r_max."""
    u = rng.normal(size=n) + 1j * rng.normal(size=n)
    return rng.uniform(0.1, r_max) * u / np.linalg.norm(u)


def _dense_ladder(space):
    a, c = fo.ladder_matrices(space)
    return np.array([x.toarray() for x in a]), np.array([x.toarray() for x in c])


# --- projector algebra ------------------------------------------------------

def _spaces():
    return [fo.FockSpace.fermionic(2), fo.FockSpace.fermionic(3),
            fo.FockSpace.fermionic(4), fo.FockSpace.bosonic(2, 3)]


def projector_algebra(rng, n_instances: int = 500, series_every: int = 5) -> list[CheckResult]:
    t0 = time.perf_counter()
    col = _Collector(PROJECTOR_TOL)
    spaces = _spaces()
    ladders = {s: _dense_ladder(s) for s in spaces}
    for it in range(n_instances):
        space = spaces[it % len(spaces)]
        n = space.n_modes
        A, C = ladders[space]
        rank = int(rng.integers(0, n + 1))
        D = random_projector(rng, n, rank)
        Dt = np.eye(n) - D
        Pi = fo.projector_pi(space, D)
        Pt = fo.projector_pi_tilde(space, D)
        I = np.eye(space.dim)
        tot = space.total_number()
        L = np.diag((tot <= space.cutoff - 1).astype(float)) if not space.is_fermionic else I

        col.add("idempotence", max(np.abs(Pt @ Pt - Pt).max(), np.abs(Pi @ Pi - Pi).max()))
        col.add("self-adjointness", max(np.abs(Pt - Pt.conj().T).max(),
                                        np.abs(Pi - Pi.conj().T).max()))
        col.add("complement", np.abs(Pi + Pt - I).max())
        vac = space.vacuum()
        col.add("vacuum invariance", np.abs(Pt @ vac - vac).max())

        Da = np.einsum("ab,bij->aij", D, A)            # (D a)_alpha
        aD = np.einsum("bij,ba->aij", C, D)            # (a^+ D)_alpha
        Dta = np.einsum("ab,bij->aij", Dt, A)
        errs = {k: 0.0 for k in ("[a,Pi]", "[Pi,a+]", "[a,Pi~]", "[Pi~,a+]",
                                 "(Da)Pi", "Pi(a+D)", "(Da)Pi~", "Pi~(a+D)", "[(D~a),Pi~]")}
        for al in range(n):
            a, ad = A[al], C[al]
            chk = {
                "[a,Pi]": (a @ Pi - Pi @ a) - Pt @ Da[al],
                "[Pi,a+]": (Pi @ ad - ad @ Pi) - aD[al] @ Pt,
                "[a,Pi~]": (a @ Pt - Pt @ a) + Pt @ Da[al],
                "[Pi~,a+]": (Pt @ ad - ad @ Pt) + aD[al] @ Pt,
                "(Da)Pi": Da[al] @ Pi - Da[al],
                "Pi(a+D)": Pi @ aD[al] - aD[al],
                "(Da)Pi~": Da[al] @ Pt,
                "Pi~(a+D)": Pt @ aD[al],
                "[(D~a),Pi~]": Dta[al] @ Pt - Pt @ Dta[al],
            }
            for k, v in chk.items():
                errs[k] = max(errs[k], np.abs(v @ L).max())
        for k, v in errs.items():
            col.add("relation " + k, v)

        # enumerated basis built from an eigenbasis of D: first `rank` modes span range(D)
        w, vecs = np.linalg.eigh(D)
        Q = vecs[:, np.argsort(-w)]
        G = fo.second_quantize(space, space, Q)
        occ = space.occupations()
        keep = occ.sum(axis=1) <= space.cutoff
        count = occ[:, :rank].sum(axis=1)
        err = 0.0
        for N in range(1, n * space.cutoff + 2):
            PN = fo.projector_pi_N(space, D, N)
            sel = (count >= N).astype(float)
            err = max(err, np.abs((PN @ G - G * sel)[:, keep]).max())
        col.add("Pi^(N) sector selection", err)

        if series_every and it % series_every == 0:
            # normal-ordered series against the spectral construction
            err = 0.0
            for N in (1, 2, 3):
                S = fo.normal_ordered_pi_N(space, D, N)
                err = max(err, np.abs((S - fo.projector_pi_N(space, D, N)) @ L).max())
            col.add("Pi^(N) normal-ordered series", err)
    return col.done(t0)


# --- trace identities -------------------------------------------------------

def _multi(A, M):
    """Stack of a_{a1} .. a_{aM} over all multi-indices."""
    n, d, _ = A.shape
    out = np.empty((n ** M, d, d), dtype=complex)
    for k, idx in enumerate(itertools.product(range(n), repeat=M)):
        op = np.eye(d, dtype=complex)
        for a in idx:
            op = op @ A[a]
        out[k] = op
    return out


def _oracle_reduced(Rf, A, M, Pt=None):
    n = A.shape[0]
    K = _multi(A, M)
    mid = np.eye(Rf.shape[0]) if Pt is None else Pt
    out = np.einsum("ij,bkj,kl,ali->ab", Rf, K.conj(), mid, K, optimize=True)
    return out.reshape((n,) * (2 * M))


def _pair_trace(X, Y):
    """T[aA, bB] = Tr(X_aA Y_bB) for stacks of shape (n, n, d, d)."""
    n, _, d, _ = X.shape
    T = X.reshape(n * n, d * d) @ np.transpose(Y, (3, 2, 0, 1)).reshape(d * d, n * n)
    return T.reshape(n, n, n, n)


def _oracle_spontaneous(Rf, A, C, P):
    M = C[None, :] @ A[:, None]                  # [a, A] -> a^+_A a_a
    PM = P @ M
    MP = M @ P
    t1 = _pair_trace(Rf @ MP, MP)
    t2 = _pair_trace(Rf @ PM, PM)
    t3 = _pair_trace(Rf @ MP, M)
    t4 = _pair_trace(Rf @ PM, M @ P)
    return t1, t2, t3, t4


def _oracle_stimulated(Rf, A, C, P):
    M = C[None, :] @ A[:, None]
    p_e = np.trace(Rf @ P)
    pp = np.einsum("ik,aAkl,li->aA", Rf @ P, M, P, optimize=True)
    pl = np.einsum("ik,aAki->aA", Rf @ P, M)
    pr = np.einsum("ij,aAjk,ki->aA", Rf, M, P, optimize=True)
    return p_e, pp, pl, pr


def _oracle_limits(Rf, small: fo.FockSpace, cell: np.ndarray):
    """Linear coefficients in the cell size of the stimulated and spontaneous traces."""
    n = small.n_modes
    r = cell.shape[1]
    big = fo.FockSpace.fermionic(n + r)
    ab, _ = _dense_ladder(big)
    sizes = [1, n * n, n * n, n * n] + [n ** 4] * 4

    def traces(eps):
        J, Db = fo.embed_mode_isometry(n, cell, eps)
        G = fo.second_quantize(small, big, J)
        Rb = G @ Rf @ G.conj().T
        B = np.einsum("ja,jxy->axy", J.conj(), ab)
        Bd = np.conj(np.transpose(B, (0, 2, 1)))
        Pe = fo.projector_pi(big, Db)
        st = _oracle_stimulated(Rb, B, Bd, Pe)
        sp_ = _oracle_spontaneous(Rb, B, Bd, Pe)
        return np.concatenate([np.ravel(x) for x in (*st, *sp_)])

    lin = fo.linear_coefficient(traces, eps_max=0.9, n_nodes=16, degree=12)
    parts = np.split(lin, np.cumsum(sizes)[:-1])
    return parts


def trace_identities(rng, n_instances: int = 200, limits_every: int = 4) -> list[CheckResult]:
    t0 = time.perf_counter()
    col = _Collector(TRACE_TOL)
    spaces = [fo.FockSpace.fermionic(n) for n in (2, 3, 4)]
    ladders = {s: _dense_ladder(s) for s in spaces}
    ph = fo.FockSpace.bosonic(2, 10)
    pa, pc = _dense_ladder(ph)
    ph1, ph2 = fo.FockSpace.bosonic(1, 12), fo.FockSpace.bosonic(2, 12)
    pb2, _ = _dense_ladder(ph2)
    for it in range(n_instances):
        space = spaces[it % len(spaces)]
        n = space.n_modes
        A, C = ladders[space]
        Rf = random_fock_density(rng, space, rank=int(rng.integers(1, space.dim + 1)))
        R = dn.ManyBodyDensity.from_fock(space, Rf)
        De = random_projector(rng, n, int(rng.integers(0, n + 1)))
        Dt = np.eye(n) - De
        Pe = fo.projector_pi(space, De)
        Pt = np.eye(space.dim) - Pe

        for M in range(1, min(3, n) + 1):
            col.rel(f"rho^(M) M={M}", dn.reduced_density(R, M), _oracle_reduced(Rf, A, M))
        for M in range(0, min(2, n) + 1):
            got = dn.projected_density(R, M, Dt)
            ref = np.trace(Rf @ Pt) if M == 0 else _oracle_reduced(Rf, A, M, Pt)
            col.rel(f"rho^(M)_D~ M={M}", got, ref)

        st = dn.stimulated_traces(R, De)
        for name, g, r in zip(("p_e", "pp", "pl", "pr"),
                              (st.p_e, st.pp, st.pl, st.pr), _oracle_stimulated(Rf, A, C, Pe)):
            col.rel(f"stimulated trace {name}", g, r)
        T = dn.spontaneous_traces(R, De)
        for k, (g, r) in enumerate(zip(T.as_tuple(), _oracle_spontaneous(Rf, A, C, Pe)), 1):
            col.rel(f"spontaneous trace t{k}", g, r)

        if limits_every and it % limits_every == 0:
            r = int(rng.integers(1, min(2, n) + 1))
            cell = rng.normal(size=(n, r)) + 1j * rng.normal(size=(n, r))
            cell, _ = np.linalg.qr(cell)
            P = cell @ cell.conj().T
            lin = _oracle_limits(Rf, space, cell)
            SL = dn.stimulated_trace_limits(R, P)
            TL = dn.spontaneous_trace_limits(R, P)
            names = ("p_e", "pp", "pl", "pr", "t1", "t2", "t3", "t4")
            closed = (SL.p_e, SL.pp, SL.pl, SL.pr, *TL.as_tuple())
            for name, g, ref in zip(names, closed, lin):
                kind = "stimulated" if name[0] == "p" else "spontaneous"
                col.rel(f"{kind} limit {name}", np.ravel(g), ref)

        # photon coherent-state traces
        d = _random_amplitude(rng, 2, 0.6)
        D = random_projector(rng, 2, int(rng.integers(0, 3)))
        Rp = fo.density_from_ket(fo.coherent_state(ph, d))
        PD = fo.projector_pi(ph, D)
        pt = dn.photon_coherent_traces(d, D)
        col.rel("photon trace Sp(R Pi_D)", pt.p, np.trace(Rp @ PD))
        col.rel("photon trace Sp(R Pi_D c+)", pt.cdag,
                np.einsum("ij,jk,gki->g", Rp, PD, pc))
        col.rel("photon trace Sp(R Pi_D c)", pt.c,
                np.einsum("ij,jk,gki->g", Rp, PD, pa))

        if limits_every and it % limits_every == 0:
            d1 = _random_amplitude(rng, 1, 0.6)

            def ph_traces(eps):
                J, Db = fo.embed_mode_isometry(1, np.ones((1, 1)), eps)
                G = fo.second_quantize(ph1, ph2, J)
                ps = fo.coherent_state(ph1, d1, tail_tol=1e-13)
                Rb = G @ fo.density_from_ket(ps) @ G.conj().T
                Bm = np.einsum("j,jxy->xy", J[:, 0].conj(), pb2)
                Pb = fo.projector_pi(ph2, Db)
                return np.array([np.trace(Rb @ Pb), np.trace(Rb @ Pb @ Bm.conj().T),
                                 np.trace(Rb @ Pb @ Bm)])

            lin = fo.linear_coefficient(ph_traces, 0.9, 16, 12)
            L = dn.photon_coherent_trace_limits(d1, np.eye(1))
            col.rel("photon limit p", L.p, lin[0])
            col.rel("photon limit c+", L.cdag, lin[1:2])
            col.rel("photon limit c", L.c, lin[2:3])
    return col.done(t0)


# --- probability closure ----------------------------------------------------

def _poly_coefficients(f, degree: int) -> np.ndarray:
    """Exact Taylor coefficients of a polynomial of known degree."""
    x = np.linspace(-1, 1, degree + 1)
    y = np.array([f(e) for e in x])
    return np.linalg.solve(np.vander(x, degree + 1, increasing=True), y)


def probability_closure(rng, n_draws: int = 50, cutoff: int = 8) -> list[CheckResult]:
    """First- and second-order probabilities against truncated-evolution chains."""
    t0 = time.perf_counter()
    col = _Collector(CLOSURE_TOL)
    el = fo.FockSpace.fermionic(3)
    ph = fo.FockSpace.bosonic(2, cutoff)
    ph1 = fo.FockSpace.bosonic(2, 1)
    for _ in range(n_draws):
        Rf = random_fock_density(rng, el)
        R = dn.ManyBodyDensity.from_fock(el, Rf)
        De = random_projector(rng, 3, int(rng.integers(1, 3)))
        D = random_projector(rng, 2, int(rng.integers(1, 3)))
        V1 = rng.normal(size=(2, 3, 3)) + 1j * rng.normal(size=(2, 3, 3))
        V2 = rng.normal(size=(2, 3, 3)) + 1j * rng.normal(size=(2, 3, 3))
        V = stm.VBlocks(V1, V2)
        Dt = np.eye(3) - De
        r1 = dn.reduced_density(R, 1)
        r1D = dn.projected_density(R, 1, Dt)
        r0 = dn.vacuum_projected(R, Dt)

        # stimulated: coherent photon background, terms through first order
        d = _random_amplitude(rng, 2, 0.4)
        psi = fo.coherent_state(ph, d, tail_tol=1e-13)
        K = np.kron(fo.density_factor(Rf), psi[:, None])
        Pe = np.kron(fo.projector_pi(el, De), np.eye(ph.dim))
        PD = np.kron(np.eye(el.dim), fo.projector_pi(ph, D))
        W1 = fo.interaction_operator(el, ph, V1)
        W2 = fo.interaction_operator(el, ph, V2)
        I = np.eye(K.shape[0])
        c = _poly_coefficients(
            lambda e: fo.chain_probability_factored(K, [(I + e * W1, Pe), (I + e * W2, PD)]), 4)
        probe = stm.CoherentProbe(d, D)
        got = stm.probability_chain(r1, r1D, r0, De, V, probe)
        col.rel("P(photon <- particle), first order", got, (c[0] + c[1]).real)
        cm = _poly_coefficients(
            lambda e: fo.chain_probability_factored(K, [(I + e * W1, Pe)]), 2)
        got = stm.probability_measured(r1D, r0, De, V1, d)
        col.rel("P(particle), first order", got, (cm[0] + cm[1]).real)

        # spontaneous: photon vacuum, second-order coefficient
        vac = ph1.vacuum()
        Rtot = np.kron(Rf, np.outer(vac, vac))
        Pe = np.kron(fo.projector_pi(el, De), np.eye(ph1.dim))
        PD = np.kron(np.eye(el.dim), fo.projector_pi(ph1, D))
        W1 = fo.interaction_operator(el, ph1, V1)
        W2 = fo.interaction_operator(el, ph1, V2)
        I = np.eye(Rtot.shape[0])
        c = _poly_coefficients(
            lambda e: fo.chain_probability(Rtot, [(I + e * W1, Pe), (I + e * W2, PD)],
                                           validate=False), 4)
        T = dn.spontaneous_traces(R, De)
        col.rel("P_spont second order (traces)", spn.probability_general(T, D, V).total,
                c[2].real)
        col.rel("P_spont second order (blocks)",
                spn.probability_from_density(R, De, D, V).total, c[2].real)
        col.add("P_spont zero/first order vanish", max(abs(c[0]), abs(c[1])))
    return col.done(t0)


# --- driver -----------------------------------------------------------------

SUITES = {
    "projector-algebra": projector_algebra,
    "trace-identities": trace_identities,
    "probability-closure": probability_closure,
}


def run_all(seed: int = 42, suites=None, scale: float = 1.0) -> dict[str, list[CheckResult]]:
    """Run the suites with instance counts multiplied by ``scale``."""
    rng = np.random.default_rng(seed)
    counts = {"projector-algebra": 500, "trace-identities": 200, "probability-closure": 50}
    out = {}
    for name in suites or SUITES:
        n = max(1, int(round(counts[name] * scale)))
        out[name] = SUITES[name](rng, n)
    return out


def format_report(results: dict[str, list[CheckResult]]) -> str:
    lines = []
    for suite, rows in results.items():
        secs = rows[0].seconds if rows else 0.0
        lines.append(f"# {suite} ({secs:.1f} s)")
        lines.extend(r.row() for r in rows)
    return "\n".join(lines)


def all_passed(results: dict[str, list[CheckResult]]) -> bool:
    return all(r.passed for rows in results.values() for r in rows)
