"""Self-contained dense complex linear algebra.

All routines work on plain complex ``numpy`` arrays and use explicit,
deterministic algorithms sized for desk-scale matrices (n <= ~32):

* Hermitian eigendecomposition by cyclic Jacobi rotations, chosen for
  determinism and high relative accuracy at these dimensions.
* SVD (and Moore-Penrose pseudoinverse) from the eigendecomposition of
  the Gram matrix A^dag A plus left-vector recovery.  Forming the Gram
  matrix limits resolvable singular values to about sqrt(eps)*s_max,
  which fixes the default truncation threshold.
* Joint diagonalization of a commuting Hermitian family via a seeded
  random linear combination, with retries and a sequential refinement
  fallback inside degenerate eigenspaces.

Matrices serialize to JSON as arrays of rows, each entry a two-element
``[re, im]`` array; 64-bit floats round-trip exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT, Tolerances
from .errors import (
    DegeneracyUnresolved,
    DimensionMismatch,
    NoConvergence,
    NotCommuting,
    NotHermitian,
)

Array = np.ndarray

# Left singular vectors are only recovered for s_i above this fraction of
# s_max; below it the Gram-matrix route carries no usable information.
_SV_RECOVERY_FLOOR = 1e-13


def as_matrix(a) -> Array:
    """Coerce to a 2-d complex array, rejecting non-finite entries."""
    m = np.array(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionMismatch(f"expected a non-empty 2-d array, got shape {np.shape(a)}")
    if not np.all(np.isfinite(m.real)) or not np.all(np.isfinite(m.imag)):
        raise ValueError("matrix has non-finite entries")
    return m


def dag(a: Array) -> Array:
    return a.conj().T


def fro(a: Array) -> float:
    """Frobenius norm."""
    return float(math.sqrt(float((np.abs(a) ** 2).sum())))


def hs_inner(a: Array, b: Array) -> complex:
    """Hilbert-Schmidt inner product tr(a^dag b)."""
    return complex((a.conj() * b).sum())


def herm_defect(a: Array) -> float:
    """Relative deviation from hermiticity, ||A - A^dag|| / (1 + ||A||)."""
    return fro(a - dag(a)) / (1.0 + fro(a))


def require_hermitian(a: Array, tol: float = DEFAULT.herm) -> Array:
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {a.shape}")
    if herm_defect(a) > tol:
        raise NotHermitian(f"hermiticity defect {herm_defect(a):.3e} exceeds {tol:.3e}")
    return 0.5 * (a + dag(a))


def offdiag_norm(a: Array) -> float:
    off = a - np.diag(np.diag(a))
    return fro(off)


def fix_phases(v: Array) -> Array:
    """Rotate each column so its largest-magnitude entry is real positive."""
    w = np.array(v, dtype=complex)
    for j in range(w.shape[1]):
        col = w[:, j]
        k = int(np.argmax(np.abs(col)))
        z = col[k]
        if abs(z) > 1e-300:
            w[:, j] = col * (z.conjugate() / abs(z))
    return w


@dataclass(frozen=True)
class HermEigen:
    """Eigenvalues (ascending) and orthonormal eigenvector columns."""

    values: Array
    vectors: Array


def herm_eigen(a, tol: Tolerances = DEFAULT, max_sweeps: int = 100) -> HermEigen:
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Raises NotHermitian when the input fails the hermiticity gate and
    NoConvergence when the sweep budget is exhausted before the
    off-diagonal mass falls below roundoff.
    """
    work = require_hermitian(a, tol.herm)
    n = work.shape[0]
    vecs = np.eye(n, dtype=complex)
    scale = 1.0 + fro(work)
    stop = 1e-14 * scale
    skip = stop / (4.0 * n * n)

    converged = offdiag_norm(work) <= stop
    for _ in range(max_sweeps):
        if converged:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                b = work[p, q]
                ab = abs(b)
                if ab <= skip:
                    continue
                app = work[p, p].real
                aqq = work[q, q].real
                phase = b / ab
                tau = (aqq - app) / (2.0 * ab)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                # unitary J = I except J[p,p]=J[q,q]=c, J[p,q]=s*phase,
                # J[q,p]=-s*conj(phase); apply A <- J^dag A J, V <- V J.
                col_p = work[:, p].copy()
                col_q = work[:, q].copy()
                work[:, p] = c * col_p - s * np.conj(phase) * col_q
                work[:, q] = s * phase * col_p + c * col_q
                row_p = work[p, :].copy()
                row_q = work[q, :].copy()
                work[p, :] = c * row_p - s * phase * row_q
                work[q, :] = s * np.conj(phase) * row_p + c * row_q
                work[p, q] = 0.0
                work[q, p] = 0.0
                work[p, p] = work[p, p].real
                work[q, q] = work[q, q].real
                vp = vecs[:, p].copy()
                vq = vecs[:, q].copy()
                vecs[:, p] = c * vp - s * np.conj(phase) * vq
                vecs[:, q] = s * phase * vp + c * vq
        converged = offdiag_norm(work) <= stop
    if not converged and offdiag_norm(work) > 10.0 * stop:
        raise NoConvergence(f"Jacobi sweeps exhausted at off-diagonal mass {offdiag_norm(work):.3e}")

    values = work.diagonal().real.copy()
    order = np.argsort(values, kind="stable")
    return HermEigen(values[order], fix_phases(vecs[:, order]))


def svd(a) -> tuple[Array, Array, Array]:
    """SVD from the Gram-matrix eigendecomposition.

    Returns (U, s, Vh) with s descending and the full right basis (Vh is
    n x n, including the numerical kernel).  Left vectors are recovered as
    A v_i / s_i; columns whose singular value sits below the recovery
    floor are left as zero.
    """
    a = as_matrix(a)
    m, n = a.shape
    gram = dag(a) @ a
    eig = herm_eigen(gram)
    order = np.argsort(eig.values, kind="stable")[::-1]
    w = np.clip(eig.values[order], 0.0, None)
    s = np.sqrt(w)
    v = eig.vectors[:, order]
    u = np.zeros((m, n), dtype=complex)
    smax = s[0] if s.size else 0.0
    for i in range(n):
        if smax > 0.0 and s[i] > _SV_RECOVERY_FLOOR * smax:
            u[:, i] = (a @ v[:, i]) / s[i]
    return u, s, dag(v)


def pinv(a, sv_cut: float = DEFAULT.sv) -> Array:
    """Moore-Penrose pseudoinverse with relative singular-value truncation.

    Singular values below ``sv_cut * s_max`` are treated as zero; the zero
    matrix maps to the zero matrix.
    """
    if not sv_cut > 0.0:
        raise ValueError("sv_cut must be positive")
    a = as_matrix(a)
    m, n = a.shape
    u, s, vh = svd(a)
    if s.size == 0 or s[0] <= 0.0:
        return np.zeros((n, m), dtype=complex)
    keep = s > sv_cut * s[0]
    v = dag(vh)[:, keep]
    return (v / s[keep]) @ dag(u[:, keep])


def comm_norm(a, b) -> float:
    """Frobenius norm of the commutator AB - BA."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[0] != a.shape[1] or a.shape != b.shape:
        raise DimensionMismatch(f"incompatible shapes {a.shape} and {b.shape}")
    return fro(a @ b - b @ a)


def _family_diagonal(u: Array, mats: list[Array], tol_diag: float) -> bool:
    for mat in mats:
        conj = dag(u) @ mat @ u
        if offdiag_norm(conj) > tol_diag * (1.0 + fro(mat)):
            return False
    return True


def _split_by_gaps(values: Array, width: float) -> list[list[int]]:
    """Group indices of sorted values into clusters separated by > width."""
    order = np.argsort(values, kind="stable")
    clusters: list[list[int]] = [[int(order[0])]]
    for idx in order[1:]:
        if values[idx] - values[clusters[-1][-1]] > width:
            clusters.append([int(idx)])
        else:
            clusters[-1].append(int(idx))
    return clusters


def _sequential_refine(mats: list[Array], tol: Tolerances) -> Array:
    """Diagonalize the family one operator at a time inside degenerate clusters."""
    n = mats[0].shape[0]
    u = np.eye(n, dtype=complex)
    clusters: list[list[int]] = [list(range(n))]
    for mat in mats:
        next_clusters: list[list[int]] = []
        for cluster in clusters:
            cols = np.array(cluster, dtype=int)
            sub = dag(u[:, cols]) @ mat @ u[:, cols]
            eig = herm_eigen(0.5 * (sub + dag(sub)))
            u[:, cols] = u[:, cols] @ eig.vectors
            width = tol.cluster * (1.0 + float(np.max(np.abs(eig.values))))
            for part in _split_by_gaps(eig.values, width):
                next_clusters.append([cluster[i] for i in part])
        clusters = next_clusters
    return u


def _finish_joint(u: Array, mats: list[Array]) -> tuple[Array, Array]:
    n = u.shape[0]
    joint = np.zeros((n, len(mats)))
    for l, mat in enumerate(mats):
        joint[:, l] = (dag(u) @ mat @ u).diagonal().real
    order = np.lexsort(tuple(joint[:, l] for l in reversed(range(len(mats)))))
    return fix_phases(u[:, order]), joint[order, :]


def simultaneous_diagonalize(
    family,
    tol: Tolerances = DEFAULT,
    seed: int = 7,
    retries: int = 5,
) -> tuple[Array, Array]:
    """Jointly diagonalize a commuting family of Hermitian matrices.

    Returns ``(U, joint)`` where the columns of the unitary U are common
    eigenvectors sorted lexicographically by their joint eigenvalue tuple
    and ``joint[s, l]`` is the eigenvalue of the l-th operator on column s.

    The strategy diagonalizes a seeded random linear combination and
    verifies; on failure it retries with fresh weights, then falls back to
    sequential refinement within degenerate eigenspaces.
    """
    mats = [require_hermitian(m, tol.herm) for m in family]
    if not mats:
        raise DimensionMismatch("need at least one matrix")
    n = mats[0].shape[0]
    for mat in mats:
        if mat.shape != (n, n):
            raise DimensionMismatch("family members differ in dimension")
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            scale = 1.0 + fro(mats[i]) * fro(mats[j])
            if comm_norm(mats[i], mats[j]) > tol.comm * scale:
                raise NotCommuting(f"operators {i} and {j} do not commute")

    rng = np.random.default_rng(seed)
    for _ in range(retries):
        weights = rng.standard_normal(len(mats))
        combo = sum(w * m for w, m in zip(weights, mats))
        u = herm_eigen(0.5 * (combo + dag(combo))).vectors
        if _family_diagonal(u, mats, tol.diag):
            return _finish_joint(u, mats)
    u = _sequential_refine(mats, tol)
    if _family_diagonal(u, mats, tol.diag):
        return _finish_joint(u, mats)
    raise DegeneracyUnresolved("could not split degenerate joint eigenspaces")


def matrix_to_json(a) -> list:
    """Serialize a complex matrix as rows of [re, im] pairs."""
    m = as_matrix(a)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_json(obj) -> Array:
    """Inverse of :func:`matrix_to_json`, validating shape and finiteness."""
    if not isinstance(obj, list) or not obj or not all(isinstance(r, list) for r in obj):
        raise ValueError("matrix JSON must be a non-empty list of rows")
    ncols = len(obj[0])
    if ncols < 1 or any(len(r) != ncols for r in obj):
        raise ValueError("matrix JSON rows have inconsistent lengths")
    out = np.zeros((len(obj), ncols), dtype=complex)
    for i, row in enumerate(obj):
        for j, entry in enumerate(row):
            if not (isinstance(entry, list) and len(entry) == 2):
                raise ValueError("matrix entries must be [re, im] pairs")
            out[i, j] = complex(float(entry[0]), float(entry[1]))
    return as_matrix(out)
