import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def random_rank_projector(rng, n, rank):
    q, _ = np.linalg.qr(crandn(rng, n, rank))
    return q @ q.conj().T


# acceptance criteria outcomes, printed again at the end of the session
ACCEPTANCE: dict = {}


def record(label, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE[label] = (status, detail)
    print(f"\nCRITERION {label}: {status}  {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[0].rstrip("ab")), s)):
        status, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"CRITERION {label}: {status}  {detail}")
