import numpy as np

from measrad import verify as vf


def test_small_scale_suites_pass():
    res = vf.run_all(seed=3, scale=0.05)
    assert set(res) == set(vf.SUITES)
    assert vf.all_passed(res), vf.format_report(res)
    for rows in res.values():
        assert rows and all(r.n >= 1 for r in rows)


def test_report_and_failure_flag():
    bad = vf.CheckResult("x", max_error=1.0, tolerance=1e-12, n=1)
    nan = vf.CheckResult("y", max_error=float("nan"), tolerance=1.0, n=1)
    assert not bad.passed and not nan.passed
    assert bad.row().startswith("FAIL")
    assert not vf.all_passed({"s": [bad]})
    assert "# s" in vf.format_report({"s": [bad]})


def test_random_helpers(rng):
    P = vf.random_projector(rng, 4, 2)
    assert np.allclose(P @ P, P) and np.allclose(P, P.conj().T)
    assert abs(np.trace(P) - 2) < 1e-12
    U = vf.random_unitary(rng, 3)
    assert np.allclose(U @ U.conj().T, np.eye(3))


def test_seed_reproducible():
    a = vf.run_all(seed=5, suites=["probability-closure"], scale=0.04)
    b = vf.run_all(seed=5, suites=["probability-closure"], scale=0.04)
    assert [r.max_error for r in a["probability-closure"]] == \
        [r.max_error for r in b["probability-closure"]]
