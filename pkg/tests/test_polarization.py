import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from measrad import polarization as pol
from measrad.kernels import (FormFactors, current_kernel_small_recoil,
                             local_components, polarization_basis)

angles = st.floats(0, math.pi)
unit3 = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda v: np.linalg.norm(v) > 0.1).map(lambda v: np.array(v) / np.linalg.norm(v))


def test_chi_basis_states():
    assert np.allclose(pol.stokes_from_chi([1, 0]).b, [0, 0, 1])
    assert np.allclose(pol.stokes_from_chi([0, 1]).b, [0, 0, -1])
    assert np.allclose(pol.stokes_from_chi([1, 1]).b, [1, 0, 0])
    # b2 = tr(M sigma_y) / tr M
    assert np.allclose(pol.stokes_from_chi(np.array([1, 1j]) / math.sqrt(2)).b, [0, 1, 0])
    assert np.allclose(pol.stokes_from_chi(np.array([1, -1j]) / math.sqrt(2)).b, [0, -1, 0])


@given(st.complex_numbers(max_magnitude=10), st.complex_numbers(max_magnitude=10))
def test_pure_chi_has_unit_degree(a, b):
    if abs(a) ** 2 + abs(b) ** 2 < 1e-6:
        return
    s = pol.stokes_from_chi([a, b])
    assert s.is_pure(1e-12)
    assert np.allclose(s.matrix(), np.outer([a, b], np.conj([a, b])), atol=1e-12 * (abs(a) + abs(b)) ** 2)


def test_stokes_errors():
    with pytest.raises(pol.UndefinedPolarization):
        pol.stokes_from_chi([0, 0])
    with pytest.raises(ValueError):
        pol.stokes_from_chi([1, 2, 3])
    with pytest.raises(ValueError):
        pol.stokes_stimulated_ultra([1, 1, 0], 0.3)


def test_rotated_matches_basis_rotation():
    chi = np.array([0.3 + 0.2j, -0.5 + 1j])
    a = 0.4
    c, s = math.cos(a), math.sin(a)
    rotated = pol.stokes_from_chi([c * chi[0] + s * chi[1], -s * chi[0] + c * chi[1]])
    assert np.allclose(pol.stokes_from_chi(chi).rotated(a).b, rotated.b, atol=1e-14)


# --- stimulated, nonrelativistic ------------------------------------------------

def test_nonrel_circular_and_linear_endpoints():
    assert np.allclose(pol.stokes_stimulated_nonrel(0.0).b, [0, -1, 0], atol=1e-15)
    assert np.allclose(pol.stokes_stimulated_nonrel(math.pi / 2).b, [0, 0, 1], atol=1e-15)


def test_nonrel_pure_on_sweep():
    for th in np.linspace(0, math.pi, 1000):
        assert abs(pol.stokes_stimulated_nonrel(th).degree - 1) < 1e-14


@given(angles, st.floats(0, 2 * math.pi), st.floats(0.1, 2.0))
def test_nonrel_closed_form_matches_amplitude(th, phase, Fm):
    s = pol.stokes_from_chi(pol.chi_stimulated_nonrel(th, k0=0.3, F_m=Fm, phase=phase))
    ref = pol.stokes_stimulated_nonrel(th, k0=0.3, F_m=Fm)
    assert np.allclose(s.b, ref.b, atol=1e-13)
    assert s.intensity == pytest.approx(ref.intensity, rel=1e-12)


def test_nonrel_from_rest_frame_kernel():
    zeta = np.array([0.0, 0.0, 1.0])
    xi = np.array([0.6, 0.2, -0.3])
    for th in (0.3, 1.1, 2.5):
        k = 0.01 * np.array([math.sin(th) * math.cos(0.7), math.sin(th) * math.sin(0.7), math.cos(th)])
        mode = polarization_basis(k, "spherical", zeta=zeta)
        ker = current_kernel_small_recoil(np.zeros(3), k)
        chi = pol.chi_from_kernel(ker, mode, xi, zeta)
        assert np.allclose(pol.stokes_from_chi(chi).b, pol.stokes_stimulated_nonrel(th).b, atol=1e-12)


def test_kappa_rotation_is_global_phase():
    zeta = np.array([0.0, 0.6, 0.8])
    xi = np.array([0.5, 0.1, -0.2])
    k = 0.01 * np.array([0.3, -0.4, 0.866])
    mode = polarization_basis(k)
    ker = current_kernel_small_recoil(np.array([0.2, 0.1, 0.3]), k)
    c0 = pol.chi_from_kernel(ker, mode, xi, zeta)
    # rotate xi about zeta by phi: kappa rotates, the amplitude picks up a phase
    phi = 0.9
    K = np.array([[0, -zeta[2], zeta[1]], [zeta[2], 0, -zeta[0]], [-zeta[1], zeta[0], 0]])
    Rm = np.eye(3) + math.sin(phi) * K + (1 - math.cos(phi)) * K @ K
    c1 = pol.chi_from_kernel(ker, mode, Rm @ xi, zeta)
    ratio = c1 / c0
    assert np.allclose(ratio, ratio[0]) and abs(abs(ratio[0]) - 1) < 1e-12
    assert abs(abs(np.angle(ratio[0])) - phi) < 1e-12


def test_kappa_vanishes_for_parallel_xi():
    zeta = np.array([0.0, 0.6, 0.8])
    assert np.allclose(pol.kappa_vector(0.7 * zeta, zeta), 0, atol=1e-16)


# --- stimulated, ultrarelativistic ------------------------------------------------

@given(unit3.filter(lambda z: abs(z[2]) < 0.99), st.floats(0, 3), st.floats(0.5, 1.5), st.floats(-1, 1))
def test_ultra_closed_form_vs_amplitude(z, x, Fm, a):
    try:
        u = pol.stokes_stimulated_ultra(z, x, Fm, a)
    except pol.UndefinedPolarization:
        return
    s = pol.stokes_from_chi(pol.chi_stimulated_ultra(z, x, Fm, a))
    assert np.allclose(s.b, u.state.b, atol=1e-10)
    assert s.intensity == pytest.approx(u.state.intensity, rel=1e-10)
    assert abs(u.b3_ib1_factored - (u.state.b[2] + 1j * u.state.b[0])) < 1e-10


def test_ultra_matches_kernel_at_high_gamma():
    rng = np.random.default_rng(3)
    n = np.array([0.0, 0.0, 1.0])
    k0 = 1e-3
    for x, Fm, a in [(0.7, 1.0, 0.0), (2.0, 1.0, -0.3), (0.3, 1.2, 0.5)]:
        zeta = rng.normal(size=3)
        zeta /= np.linalg.norm(zeta)
        errs = []
        for gamma in (100.0, 1000.0):
            bperp = x / gamma
            beta = np.array([bperp, 0, math.sqrt(1 - 1 / gamma**2 - bperp**2)])
            mode = polarization_basis(k0 * n, "beta_perp", beta=beta)
            ker = current_kernel_small_recoil(gamma * beta, k0 * n, FormFactors(a + Fm, Fm))
            kap = np.cross(zeta, n)
            kap /= np.linalg.norm(kap)
            s = pol.stokes_from_chi(pol.chi_from_kernel(ker, mode, kap, zeta))
            u = pol.stokes_stimulated_ultra(local_components(zeta, mode), x, Fm, a,
                                            k0=k0, gamma=gamma).state
            errs.append(np.abs(s.b - u.b).max())
        assert errs[1] < 5e-3 and 7 < errs[0] / errs[1] < 13     # O(1/gamma)


def test_ultra_reduces_to_nonrel():
    z = np.array([0.3, -0.5, 0.0])
    z[2] = math.sqrt(1 - z @ z)
    ref = pol.stokes_stimulated_nonrel(math.acos(z[2])).rotated(math.atan2(z[1], -z[0]))
    errs = [np.abs(pol.stokes_stimulated_ultra(z, x, 1.0, 0.5).state.b - ref.b).max()
            for x in (1e-2, 1e-3, 1e-4)]
    assert errs[2] < 1e-3
    assert 5 < errs[0] / errs[1] < 20 and 5 < errs[1] / errs[2] < 20     # O(x)


def test_ultra_large_x_anomalous():
    z = np.array([0.6, 0.0, 0.8])
    for x in (30.0, 300.0):
        u = pol.stokes_stimulated_ultra(z, x, 1.0, 1.0).state
        lx = pol.stokes_stimulated_ultra_large_x(z, x, 1.0, 1.0)
        assert abs(u.b[2] + 1j * u.b[0] - 1) < 5 / x
        assert u.A / lx.A == pytest.approx(1, abs=5 / x)


def test_ultra_no_anomaly_branch():
    rng = np.random.default_rng(8)
    for _ in range(20):
        z = rng.normal(size=3)
        z /= np.linalg.norm(z)
        x = rng.uniform(0, 4)
        a = pol.stokes_stimulated_ultra(z, x, 1.3, 0.0).state
        b = pol.stokes_stimulated_ultra_no_anomaly(z, x, 1.3)
        assert np.allclose(a.b, b.b, atol=1e-12) and a.A == pytest.approx(b.A)


# --- spontaneous -------------------------------------------------------------------

def test_spont_nonrel_pure_cases():
    rng = np.random.default_rng(4)
    for _ in range(20):
        z = rng.normal(size=3)
        z[2] = 0
        z /= np.linalg.norm(z)
        xi = rng.normal(size=3) * 0.3
        assert abs(pol.stokes_spontaneous_nonrel(z, xi).state.degree - 1) < 1e-12
        z = rng.normal(size=3)
        z /= np.linalg.norm(z)
        assert abs(pol.stokes_spontaneous_nonrel(z, -z).state.degree - 1) < 1e-12


@given(angles)
def test_spont_equals_stim_for_opposite_xi(th):
    zl = np.array([-math.sin(th), 0, math.cos(th)])
    sp = pol.stokes_spontaneous_nonrel(zl, -zl).state
    assert np.abs(sp.b - pol.stokes_stimulated_nonrel(th).b).max() < 1e-10


def test_spont_ultra_equals_stim_for_opposite_xi():
    rng = np.random.default_rng(5)
    for _ in range(50):
        z = rng.normal(size=3)
        z /= np.linalg.norm(z)
        x, a = rng.uniform(0, 3), rng.uniform(-1, 1)
        sp = pol.stokes_spontaneous_ultra(z, -z, x, 1.0, a).state
        assert np.abs(sp.b - pol.stokes_stimulated_ultra(z, x, 1.0, a).state.b).max() < 1e-10


def test_spont_ultra_pure_when_b2_bracket_vanishes():
    x = 0.8
    z1 = 0.5
    z3 = x * z1
    z = np.array([z1, math.sqrt(1 - z1**2 - z3**2), z3])
    xi = np.array([0.2, -0.3, 0.1])
    s = pol.stokes_spontaneous_ultra(z, xi, x, 1.0, 0.4)
    assert abs(s.degree_squared - 1) < 1e-12 and abs(s.state.degree - 1) < 1e-12


def test_degree_formulas_on_sweeps():
    rng = np.random.default_rng(6)
    z = rng.normal(size=(1000, 3))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    xi = rng.normal(size=(1000, 3))
    xi *= rng.uniform(0, 1, (1000, 1)) / np.linalg.norm(xi, axis=1, keepdims=True)
    xs, As = rng.uniform(0, 3, 1000), rng.uniform(-1, 1, 1000)
    for i in range(1000):
        s = pol.stokes_spontaneous_nonrel(z[i], xi[i])
        assert abs(s.degree_squared - s.state.b @ s.state.b) < 1e-10
        u = pol.stokes_spontaneous_ultra(z[i], xi[i], xs[i], 1.0, As[i])
        assert abs(u.degree_squared - u.state.b @ u.state.b) < 1e-10


def test_spont_pi_matrix_from_kernel():
    zeta = np.array([0.0, 0.0, 1.0])
    for th in (0.3, 1.1):
        k = 0.01 * np.array([math.sin(th) * math.cos(0.7), math.sin(th) * math.sin(0.7), math.cos(th)])
        mode = polarization_basis(k, "spherical", zeta=zeta)
        ker = current_kernel_small_recoil(np.zeros(3), k)
        for xi in (np.array([0.6, 0.2, -0.3]), -zeta, np.array([0.3, 0, 0.1])):
            P = pol.pi_matrix_from_kernel(ker, mode, xi, zeta)
            assert np.abs(P - P.conj().T).max() < 1e-18
            ref = pol.stokes_spontaneous_nonrel(local_components(zeta, mode),
                                                local_components(xi, mode), k0=0.01)
            s = pol.stokes_from_chi(P)
            assert np.allclose(s.b, ref.state.b, atol=1e-12)
            assert s.intensity / ref.state.intensity == pytest.approx(
                pol.stokes_from_chi(pol.pi_matrix_from_kernel(ker, mode, -zeta, zeta)).intensity
                / pol.stokes_spontaneous_nonrel(local_components(zeta, mode), local_components(-zeta, mode),
                                                k0=0.01).state.intensity, rel=1e-10)
