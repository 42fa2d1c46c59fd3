import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from measrad import fock_oracle as fo

from conftest import crandn, random_rank_projector


def dense(op):
    return op.toarray()


def test_single_fermion_mode_is_defining_rep():
    (a,), (ad,) = fo.ladder_matrices(fo.FockSpace.fermionic(1))
    assert np.array_equal(dense(a), [[0, 1], [0, 0]])
    assert np.array_equal(dense(ad), [[0, 0], [1, 0]])


def test_two_modes_anticommutator_is_identity():
    ann, cre = fo.ladder_matrices(fo.FockSpace.fermionic(2))
    a, ad = dense(ann[0]), dense(cre[0])
    assert np.allclose(a @ ad + ad @ a, np.eye(4), atol=0)


@given(st.integers(0, 2), st.integers(0, 2))
def test_three_mode_car(i, j):
    ann, cre = fo.ladder_matrices(fo.FockSpace.fermionic(3))
    a, b = dense(ann[i]), dense(ann[j])
    bd = dense(cre[j])
    assert np.abs(a @ b + b @ a).max() == 0
    assert np.abs(a @ bd + bd @ a - (i == j) * np.eye(8)).max() < 1e-15


def test_bosonic_ccr_below_cutoff():
    space = fo.FockSpace.bosonic(2, 3)
    ann, cre = fo.ladder_matrices(space)
    low = space.total_number() <= 2
    comm = dense(ann[0]) @ dense(cre[0]) - dense(cre[0]) @ dense(ann[0])
    assert np.allclose(comm[np.ix_(low, low)], np.eye(low.sum()))


def test_dimension_overflow():
    with pytest.raises(fo.DimensionOverflow):
        fo.FockSpace.fermionic(15)
    with pytest.raises(fo.DimensionOverflow):
        fo.FockSpace.bosonic(4, 20)


def test_invalid_projector_rejected():
    with pytest.raises(ValueError):
        fo.OneParticleProjector(np.array([[1.0, 0.5], [0.5, 0.0]]))
    with pytest.raises(ValueError):
        fo.OneParticleProjector(np.array([[1.0, 1.0], [0.0, 0.0]]))


def test_pi_tilde_trivial_projectors():
    space = fo.FockSpace.fermionic(3)
    assert np.allclose(fo.projector_pi_tilde(space, np.zeros((3, 3))), np.eye(8))
    vac = space.vacuum()
    assert np.allclose(fo.projector_pi_tilde(space, np.eye(3)), np.outer(vac, vac))
    assert np.allclose(fo.projector_pi(space, np.eye(3)), np.eye(8) - np.outer(vac, vac))


def test_annihilator_commutator_with_pi(rng):
    space = fo.FockSpace.fermionic(3)
    D = random_rank_projector(rng, 3, 1)
    Pi = fo.projector_pi(space, D)
    Pt = fo.projector_pi_tilde(space, D)
    ann, _ = fo.ladder_matrices(space)
    a = [dense(x) for x in ann]
    for al in range(3):
        Da = sum(D[al, b] * a[b] for b in range(3))
        assert np.abs(a[al] @ Pi - Pi @ a[al] - Pt @ Da).max() < 1e-12


def test_pi_n_one_is_pi(rng):
    space = fo.FockSpace.fermionic(3)
    D = random_rank_projector(rng, 3, 2)
    assert np.allclose(fo.projector_pi_N(space, D, 1), fo.projector_pi(space, D))


def test_pi_n_above_rank_vanishes(rng):
    space = fo.FockSpace.fermionic(4)
    D = random_rank_projector(rng, 4, 2)
    assert np.abs(fo.projector_pi_N(space, D, 3)).max() < 1e-12


def test_pi_n_matches_normal_ordered_series_bosonic(rng):
    space = fo.FockSpace.bosonic(2, 3)
    D = random_rank_projector(rng, 2, 1)
    low = space.total_number() <= 2
    for N in (1, 2):
        exact = fo.projector_pi_N(space, D, N)
        series = fo.normal_ordered_pi_N(space, D, N)
        assert np.abs((exact - series)[np.ix_(low, low)]).max() < 1e-12


def test_pi_2_small_d_scaling():
    # for H = eps D the N=2 series starts at :(a+ H a)^2:/2 = O(eps^2)
    space = fo.FockSpace.bosonic(2, 3)
    D = np.array([[1, 0], [0, 0]], dtype=complex)
    vals = []
    for eps in (1e-2, 1e-3):
        P2 = fo.normal_ordered_pi_N(space, eps * D, 2)
        leading = fo.normal_ordered_power(space, eps * D, 2) / 2
        vals.append(np.abs(P2 - leading).max() / np.abs(leading).max())
    assert vals[1] < vals[0] / 5
    assert vals[1] < 1e-2


def test_normal_ordered_power_fermionic_rank_two(rng):
    space = fo.FockSpace.fermionic(3)
    D = random_rank_projector(rng, 3, 2)
    N = dense(fo.number_operator(space, D))
    # :N^2: = N^2 - N
    assert np.abs(fo.normal_ordered_power(space, D, 2) - (N @ N - N)).max() < 1e-12


def test_normal_ordered_coefficients():
    c = fo.normal_ordered_coefficients(1, 4)
    assert np.allclose(c, [(-1) ** m / math.factorial(m) for m in range(5)])
    c2 = fo.normal_ordered_coefficients(2, 3)
    assert np.allclose(c2, [1, 0, -0.5, 1 / 3])


def test_chain_trivial_cases(rng):
    space = fo.FockSpace.fermionic(3)
    X = crandn(rng, 8, 8)
    R = X @ X.conj().T
    R /= np.trace(R)
    assert fo.chain_probability(R, [(None, np.eye(8))] * 3) == pytest.approx(1, abs=1e-14)
    vac = space.vacuum()
    V0 = np.outer(vac, vac)
    assert fo.chain_probability(V0, [(np.eye(8), V0)]) == 1


def test_chain_sum_rule(rng):
    space = fo.FockSpace.fermionic(3)
    X = crandn(rng, 8, 8)
    R = X @ X.conj().T
    R /= np.trace(R)
    U1, _ = np.linalg.qr(crandn(rng, 8, 8))
    U2, _ = np.linalg.qr(crandn(rng, 8, 8))
    D1 = random_rank_projector(rng, 3, 1)
    D2 = random_rank_projector(rng, 3, 2)
    P1, P2 = fo.projector_pi(space, D1), fo.projector_pi(space, D2)
    total = 0.0
    for A in (P1, np.eye(8) - P1):
        for B in (P2, np.eye(8) - P2):
            total += fo.chain_probability(R, [(U1, A), (U2, B)])
    assert abs(total - 1) < 1e-12


def test_factored_chain_matches_dense(rng):
    X = crandn(rng, 8, 3)
    R = X @ X.conj().T
    R /= np.trace(R)
    U, _ = np.linalg.qr(crandn(rng, 8, 8))
    P = random_rank_projector(rng, 8, 3)
    steps = [(U, P), (U.conj().T, None)]
    K = fo.density_factor(R)
    assert K.shape[1] == 3
    assert abs(fo.chain_probability_factored(K, steps) - fo.chain_probability(R, steps)) < 1e-13


def test_chain_rejects_bad_density():
    with pytest.raises(ValueError):
        fo.chain_probability(np.diag([0.5, 0.6]), [])
    with pytest.raises(ValueError):
        fo.chain_probability(np.diag([1.5, -0.5]), [])


def test_trace_expectation_vacuum_annihilator_rightmost():
    space = fo.FockSpace.fermionic(3)
    ann, cre = fo.ladder_matrices(space)
    vac = space.vacuum()
    R = np.outer(vac, vac)
    assert fo.trace_expectation(R, [cre[0], cre[1], ann[2]]) == 0
    assert fo.trace_expectation(R, [ann[1]]) == 0


@given(st.floats(0.0, 1.2), st.floats(0, 2 * math.pi), st.floats(0, 1))
def test_coherent_count_probability(r, phase, mix):
    space = fo.FockSpace.bosonic(2, 16)
    d = r * np.array([math.cos(phase), 1j * math.sin(phase)])
    psi = fo.coherent_state(space, d)
    D = np.array([[1 - mix, np.sqrt(mix * (1 - mix))],
                  [np.sqrt(mix * (1 - mix)), mix]], dtype=complex)
    p = fo.trace_expectation(fo.density_from_ket(psi), [fo.projector_pi(space, D)])
    assert abs(p - (1 - np.exp(-np.vdot(d, D @ d).real))) < 1e-10


def test_coherent_truncation_error():
    with pytest.raises(ValueError):
        fo.coherent_state(fo.FockSpace.bosonic(1, 3), np.array([2.0]))
    with pytest.raises(ValueError):
        fo.coherent_state(fo.FockSpace.fermionic(1), np.array([0.1]))


def test_trace_expectation_projected_one_body(rng):
    from measrad import density as dn
    space = fo.FockSpace.fermionic(3)
    X = crandn(rng, 8, 8)
    tot = space.total_number()
    R = X @ X.conj().T * (tot[:, None] == tot[None, :])
    R /= np.trace(R)
    D = random_rank_projector(rng, 3, 1)
    Pt = fo.projector_pi_tilde(space, D)
    ann, cre = fo.ladder_matrices(space)
    ref = np.array([[fo.trace_expectation(R, [cre[b], Pt, ann[a]]) for b in range(3)]
                    for a in range(3)])
    got = dn.projected_density(dn.ManyBodyDensity.from_fock(space, R), 1, np.eye(3) - D)
    assert np.abs(got - ref).max() < 1e-12


def test_interaction_operator_antihermitian(rng):
    el, ph = fo.FockSpace.fermionic(2), fo.FockSpace.bosonic(1, 2)
    X = fo.interaction_operator(el, ph, crandn(rng, 1, 2, 2))
    assert np.abs(X + X.conj().T).max() < 1e-14
    with pytest.raises(ValueError):
        fo.interaction_operator(el, ph, crandn(rng, 2, 2, 2))


def test_second_quantize_is_isometry(rng):
    small, big = fo.FockSpace.fermionic(2), fo.FockSpace.fermionic(4)
    J, _ = np.linalg.qr(crandn(rng, 4, 2))
    G = fo.second_quantize(small, big, J)
    assert np.abs(G.conj().T @ G - np.eye(4)).max() < 1e-12


def test_linear_coefficient_exact_on_polynomials():
    f = lambda e: 3 - 2j * e + 5 * e**2 - e**5
    assert abs(fo.linear_coefficient(f) + 2j) < 1e-10
