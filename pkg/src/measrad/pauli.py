"""Pauli matrices and 2x2 spin helpers."""
import numpy as np

SIGMA = np.array([[[0, 1], [1, 0]],
                  [[0, -1j], [1j, 0]],
                  [[1, 0], [0, -1]]], dtype=complex)
EYE2 = np.eye(2, dtype=complex)


def sigma_dot(v) -> np.ndarray:
    """sigma . v for v of shape (..., 3); returns (..., 2, 2)."""
    v = np.asarray(v)
    return np.einsum("...j,jab->...ab", v, SIGMA)


def spin_matrix(rho, w) -> np.ndarray:
    """(rho + sigma . w) / 2."""
    rho = np.asarray(rho)
    return 0.5 * (rho[..., None, None] * EYE2 + sigma_dot(w))


def decompose(M) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of spin_matrix: (tr M, tr(M sigma))."""
    M = np.asarray(M)
    rho = np.trace(M, axis1=-2, axis2=-1)
    w = np.einsum("...ab,jba->...j", M, SIGMA)
    return rho, w


def bloch_vector(spinor) -> np.ndarray:
    u = np.asarray(spinor, dtype=complex)
    u = u / np.linalg.norm(u)
    return np.real(np.einsum("a,jab,b->j", u.conj(), SIGMA, u))


def projector(zeta) -> np.ndarray:
    """(1 + sigma . zeta) / 2."""
    return 0.5 * (EYE2 + sigma_dot(zeta))
