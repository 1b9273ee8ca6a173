"""Shared test helpers: independent oracles and random-object factories.

Oracles deliberately route through numpy.linalg (or explicit series /
characteristic-polynomial constructions) so they share no code with the
package's own Jacobi/Gram-based routines.
"""

from __future__ import annotations

import numpy as np

from qcrb import blocks, linalg
from qcrb.model import StateModel


def random_hermitian(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * 0.5 * (a + a.conj().T)


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def charpoly_roots(a: np.ndarray) -> np.ndarray:
    """Eigenvalues via Faddeev-LeVerrier coefficients and np.roots.

    Independent brute-force route: builds the characteristic polynomial
    recursively, then finds its roots through the companion matrix.
    """
    n = a.shape[0]
    coeffs = np.zeros(n + 1, dtype=complex)
    coeffs[0] = 1.0
    m = np.zeros_like(a)
    for k in range(1, n + 1):
        m = a @ m + coeffs[k - 1] * np.eye(n)
        coeffs[k] = -np.trace(a @ m) / k
    roots = np.roots(coeffs)
    return np.sort(roots.real)


def expm_series(m: np.ndarray, terms: int = 64) -> np.ndarray:
    """Matrix exponential by plain Taylor series (smooth in the entries)."""
    out = np.eye(m.shape[0], dtype=complex)
    term = np.eye(m.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ m / k
        out = out + term
    return out


def sylvester_sld(rho: np.ndarray, drho: np.ndarray) -> np.ndarray:
    """Minimum-norm dense solve of (L rho + rho L)/2 = drho.

    Vectorizes the Sylvester operator row-major and uses numpy's lstsq;
    the minimum-norm solution zeroes the null-null component, matching
    the package's default gauge for the free block.
    """
    n = rho.shape[0]
    op = 0.5 * (np.kron(np.eye(n), rho.T) + np.kron(rho, np.eye(n)))
    sol, *_ = np.linalg.lstsq(op, drho.reshape(-1), rcond=None)
    l_hat = sol.reshape(n, n)
    return 0.5 * (l_hat + l_hat.conj().T)


def rank2_path_model(seed: int) -> StateModel:
    """Random 3x3 rank-2 family: fixed spectrum, smooth unitary path.

    U(theta) = exp(i (G0 + theta1 G1 + theta2 G2)) with the exponential
    computed by series, so the frame is globally smooth and gauge-fixed.
    """
    rng = np.random.default_rng(seed)
    gens = [random_hermitian(rng, 3, scale=0.6) for _ in range(3)]
    s1 = 0.25 + 0.4 * rng.random()
    spectrum = np.array([s1, 1.0 - s1, 0.0])

    def frame(theta):
        h = gens[0] + theta[0] * gens[1] + theta[1] * gens[2]
        return expm_series(1j * h)

    def eval_rho(theta):
        u = frame(theta)
        return (u * spectrum) @ u.conj().T

    def factorization(theta):
        u = frame(theta)
        return u[:, :2], u[:, 2:], spectrum[:2].copy()

    return StateModel(
        name=f"rank2path{seed}",
        n_s=3,
        p=2,
        box=((-1.0, 1.0), (-1.0, 1.0)),
        eval_rho=eval_rho,
        factorization=factorization,
    )


def random_projective_povm(rng: np.random.Generator, n: int) -> list[np.ndarray]:
    u = random_unitary(rng, n)
    return [np.outer(u[:, j], u[:, j].conj()) for j in range(n)]


def aligned_offdiag(slds, v_other: np.ndarray, y_other: np.ndarray) -> list[np.ndarray]:
    """Express the +0 SLD blocks in another (range, null) frame."""
    t, s = blocks.frame_change(slds.dec, v_other, y_other)
    return [linalg.dag(t) @ lpz @ s for lpz in slds.Lpz]


def basis_povm(n: int) -> list[np.ndarray]:
    return [np.diag((np.arange(n) == k).astype(complex)) for k in range(n)]


def pauli(which: str) -> np.ndarray:
    return {
        "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
        "y": np.array([[0.0, -1j], [1j, 0.0]], dtype=complex),
        "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
    }[which]
