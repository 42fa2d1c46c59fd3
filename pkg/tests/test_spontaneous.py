import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from measrad import density as dn
from measrad import fock_oracle as fo
from measrad import polarization as pol
from measrad import spontaneous as sp
from measrad import stimulated as stm
from measrad.kernels import FormFactors, PhotonGrid, SmallRecoilKernel, local_components, polarization_basis
from measrad.stimulated import Setup, VBlocks

from conftest import crandn, random_rank_projector


# --- discrete mode systems ---------------------------------------------------

def random_many_body(rng, n=3):
    space = fo.FockSpace.fermionic(n)
    X = crandn(rng, space.dim, space.dim)
    tot = space.total_number()
    Rf = (X @ X.conj().T) * (tot[:, None] == tot[None, :])
    Rf /= np.trace(Rf).real
    return space, Rf, dn.ManyBodyDensity.from_fock(space, Rf)


def oracle_probability(space, Rf, De, D, V):
    # dense second-order chain with one photon mode pair, photon vacuum in
    ph = fo.FockSpace.bosonic(D.shape[0], 1)
    vac = ph.vacuum()
    Rtot = np.kron(Rf, np.outer(vac, vac.conj()))
    Pe = np.kron(fo.projector_pi(space, De), np.eye(ph.dim))
    PD = np.kron(np.eye(space.dim), fo.projector_pi(ph, D))
    W1 = fo.interaction_operator(space, ph, V.V1)
    W2 = fo.interaction_operator(space, ph, V.V2)
    Y = W2 @ Pe + Pe @ W1
    return float(np.trace(PD @ Y @ Rtot @ Y.conj().T).real)


@pytest.mark.parametrize("seed", [7, 8, 9])
def test_discrete_routes_match_oracle(seed):
    rng = np.random.default_rng(seed)
    space, Rf, R = random_many_body(rng)
    De = random_rank_projector(rng, 3, 1)
    D = random_rank_projector(rng, 2, 1)
    V = VBlocks(crandn(rng, 2, 3, 3), crandn(rng, 2, 3, 3))
    ref = oracle_probability(space, Rf, De, D, V)
    T, _ = dn.spontaneous_trace_bundle(R, De)
    a = sp.probability_general(T, D, V)
    b = sp.probability_from_density(R, De, D, V)
    assert a.total == pytest.approx(ref, rel=1e-12)
    assert b.total == pytest.approx(ref, rel=1e-12)
    assert b.measured == pytest.approx(sp.measured_probability(R, De), rel=1e-14)
    assert b.conditional == pytest.approx(ref / b.measured, rel=1e-12)


def test_no_detector_no_photon(rng):
    _, _, R = random_many_body(rng)
    V = VBlocks(crandn(rng, 2, 3, 3), crandn(rng, 2, 3, 3))
    De = random_rank_projector(rng, 3, 2)
    assert abs(sp.probability_from_density(R, De, np.zeros((2, 2)), V).total) < 1e-15


def test_small_cell_matches_trace_limits(rng):
    _, _, R = random_many_body(rng)
    P = random_rank_projector(rng, 3, 1)
    D = random_rank_projector(rng, 2, 1)
    V = VBlocks(crandn(rng, 2, 3, 3), crandn(rng, 2, 3, 3))
    r1 = dn.reduced_density(R, 1)
    L2 = dn.label2(dn.reduced_density(R, 2))
    L3 = dn.label3(dn.reduced_density(R, 3))
    lim = sp.probability_general(dn.spontaneous_trace_limits(R, P), D, V).total
    small = sp.probability_small_cell(r1, L2, L3, P, D, V)
    assert small.total == pytest.approx(lim, rel=1e-12)
    assert small.measured == pytest.approx(np.trace(r1 @ P).real)


def test_conditional_needs_measured_probability():
    t = sp.SpontaneousTerms(1.0, {}, 0.0)
    with pytest.raises(stm.MeasuredProbabilityZero):
        t.conditional


# --- continuum: spin measurement --------------------------------------------------

PK = dn.GaussianPacket([0.05, 0.02, 0.3], [0, 0, 0], 0.03, xi=[0.3, 0.2, 0.6])
ANOM = Setup(kernel=SmallRecoilKernel(FormFactors(1.0, 2.3)))
MODE = polarization_basis(np.array([0.002, 0.001, 0.004]))


def radial(p):
    return p / np.linalg.norm(p, axis=-1)[..., None]


def test_curly_route_matches_trace():
    a = sp.spectrum_spin_measured(PK, radial, MODE, ANOM, route="trace")
    b = sp.spectrum_spin_measured(PK, radial, MODE, ANOM, route="curly")
    assert a.converged
    assert np.abs(a.matrix - b.matrix).max() < 1e-12 * np.abs(a.matrix).max()


def test_reduced_route_for_constant_axis():
    z = [0.6, 0, 0.8]
    a = sp.spectrum_spin_measured(PK, z, MODE, ANOM, route="trace")
    c = sp.spectrum_spin_measured(PK, z, MODE, ANOM, route="reduced")
    assert np.abs(a.matrix - c.matrix).max() < 1e-12 * np.abs(a.matrix).max()
    s = sp.spectrum_spin_measured(PK, z, MODE, ANOM, route="trace", small_recoil=True)
    assert np.abs(a.matrix - s.matrix).max() < 1e-2 * np.abs(a.matrix).max()
    with pytest.raises(ValueError):
        sp.spectrum_spin_measured(PK, z, MODE, ANOM, route="bogus")


def test_rest_frame_matches_nonrel_closed_form():
    pk = dn.GaussianPacket([0, 0, 0], [0, 0, 0], 1e-4, xi=[0.2, -0.1, 0.5])
    mode = polarization_basis(np.array([0.3, 0.2, 0.5]) * 1e-3)
    zl = np.array([0.48, 0.6, 0.64])
    sd = sp.spectrum_spin_measured(pk, zl, mode)
    ref = pol.stokes_spontaneous_nonrel(local_components(zl, mode), local_components(pk.xi, mode), mode.k0)
    assert np.allclose(sd.stokes().b, ref.state.b, atol=1e-8)
    # absolute normalization: e^2/(2 k0 (2pi)^3) x 1/k0^2 x (Pi summed)/4
    e2 = Setup().charge ** 2
    expect = e2 / (2 * mode.k0 * (2 * np.pi) ** 3) / mode.k0**2 / 4 * (mode.k0**2 * ref.state.A)
    assert sd.probability() == pytest.approx(expect, rel=2e-3)


def test_measured_normalization():
    z = np.array([0.0, 0, 1.0])
    sd = sp.spectrum_spin_measured(PK, z, MODE, normalize=True)
    assert sd.measured == pytest.approx((1 + PK.xi @ z) / 2, abs=1e-10)
    assert sd.conditional() == pytest.approx(sd.probability() / sd.measured)


@settings(max_examples=10)
@given(st.floats(0.1, 3.0), st.floats(-3, 3), st.floats(0.0, 1.0),
       st.floats(0.05, 3.0), st.floats(-3, 3))
def test_hermitian_positive_and_bounded(th, ph, r, zt, zp):
    xi = r * np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
    zeta = [math.sin(zt) * math.cos(zp), math.sin(zt) * math.sin(zp), math.cos(zt)]
    pk = dn.GaussianPacket([0.05, 0.02, 0.3], [0, 0, 0], 0.03, xi=xi)
    sd = sp.spectrum_spin_measured(pk, zeta, MODE, ANOM)
    assert sd.is_hermitian()
    ev = np.linalg.eigvalsh(0.5 * (sd.matrix + sd.matrix.conj().T))
    assert ev.min() >= -1e-12 * ev.max()
    assert np.linalg.norm(sd.stokes().b) <= 1 + 1e-12


def test_incoherence_in_position():
    # only rho(p, p) enters: displacing the packet or mixing displaced
    # copies changes nothing
    z = [0.0, 0.6, 0.8]
    base = sp.spectrum_spin_measured(PK, z, MODE, ANOM)
    moved = dn.GaussianPacket(PK.p0, [1e4, -3e3, 7e3], PK.sigma, xi=PK.xi)
    mix = dn.Mixture([PK, moved], [0.3, 0.7])
    for rho in (moved, mix):
        sd = sp.spectrum_spin_measured(rho, z, MODE, ANOM)
        assert np.abs(sd.matrix - base.matrix).max() < 1e-12 * np.abs(base.matrix).max()


def test_window_suppresses_emission():
    z = [0.0, 0.6, 0.8]
    pk = dn.GaussianPacket([0, 0, 0.3], [0, 0, 0], 0.01, xi=[0.5, 0, 0])
    base = sp.spectrum_spin_measured(pk, z, MODE).probability()
    beta = pk.p0 / math.sqrt(1 + pk.p0 @ pk.p0)
    tf = 1 / (MODE.k0 * (1 - MODE.n @ beta))
    prev = base
    for mult in (1.0, 5.0, 20.0):
        sd = sp.spectrum_spin_measured(pk, z, MODE, Setup(tau=mult * tf))
        assert sd.probability() < prev and sd.window_mod < 1
        prev = sd.probability()
    assert prev < 1e-2 * base


# --- continuum: momentum and position measurement -----------------------------------

def test_momentum_charged_limit():
    pk = dn.GaussianPacket([0, 0, 0.2], [0, 0, 0], 0.01, spinor=[1, 0.3j])
    pr = np.array([0.003, 0.0, 0.195])
    errs = []
    for scale in (1.0, 0.1):
        mode = polarization_basis(scale * np.array([0.0002, 0.0001, 0.0004]))
        for chi in (None, np.array([1, 0])):
            m = sp.spectrum_momentum_measured(pk, pr, mode, chi=chi)
            c = sp.momentum_charged_limit(pk, pr, mode, chi=chi)
            assert m.measured == pytest.approx(c.measured, rel=1e-14)
            errs.append(abs(m.probability() / c.probability() - 1))
    assert max(errs[:2]) < 2e-3
    assert max(errs[2:]) < max(errs[:2]) / 5


def test_momentum_matches_squared_amplitude():
    pk = dn.GaussianPacket([0, 0, 0.2], [0, 0, 0], 0.01, spinor=[1, 0.3j])
    pr = np.array([0.003, 0.0, 0.195])
    mode = polarization_basis(np.array([0.0002, 0.0001, 0.0004]))
    a = stm.amplitude_momentum_measurement(pk, pr, mode)
    m = sp.spectrum_momentum_measured(pk, pr, mode)
    lhs = np.sum(np.abs(a.values) ** 2) * a.normalization / (2 * np.pi) ** 3
    # the amplitude is conditional, the spectrum a joint density
    assert a.normalization == pytest.approx(m.measured, rel=1e-12)
    assert lhs == pytest.approx(m.probability(), rel=1e-4)
    with pytest.raises(ValueError):
        sp.spectrum_momentum_measured(pk, pr, mode, chi=[1, 1])


def test_position_terms():
    mode = polarization_basis(np.array([0.0002, 0.0001, 0.0004]))
    psi = dn.GaussianPacket([0, 0, 0.2], [0, 0, 0], 0.01, spinor=[1, 0])
    phi = dn.GaussianPacket([0, 0, 0.2], [5.0, 0, 0], 0.01, spinor=[1, 0])
    r = sp.probability_position_measured(psi, phi, mode)
    assert r.spectrum.measured == pytest.approx(abs(dn.gaussian_overlap(phi, psi)) ** 2)
    total = r.term("incoherent") + r.term("interference") + r.term("transition")
    assert r.probability() == pytest.approx(total, rel=1e-12)
    ev = np.linalg.eigvalsh(r.terms["incoherent"] - r.terms["post_coherent"])
    assert ev.min() > -1e-10 * r.term("incoherent")
    assert r.spectrum.is_hermitian()
    # measuring the state the particle is in: only the incoherent remainder
    same = sp.probability_position_measured(psi, psi, mode)
    rest = same.term("incoherent") - same.term("post_coherent")
    assert same.probability() == pytest.approx(rest, abs=1e-4 * same.term("incoherent"))
    orth = dn.GaussianPacket([0, 0, 0.2], [0, 0, 0], 0.01, spinor=[0, 1])
    with pytest.raises(stm.MeasuredProbabilityZero):
        sp.probability_position_measured(psi, orth, mode)


def test_tabulate_rows():
    grid = PhotonGrid([0.002], [0.4, 1.2], [0.0, 1.0])
    rows, raw = sp.tabulate(lambda m: sp.spectrum_spin_measured(PK, [0, 0, 1.0], m, Setup(order=8)), grid)
    assert len(rows) == len(raw) == 4
    for row in rows:
        assert np.linalg.norm(row[4:7]) <= 1 + 1e-12 and row[7] > 0


def test_stokes_row_of_zero_density():
    sd = sp.SpectralDensity(np.array([0, 0, 1.0]), np.eye(2, 3, dtype=complex), np.zeros((2, 2)))
    row = sp.stokes_row(sd)
    assert row[0] == 0 and np.all(np.isnan(row[1:4]))
