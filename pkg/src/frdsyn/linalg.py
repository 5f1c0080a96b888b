"""Dense complex linear algebra used by the rest of the package.

Matrices are plain complex numpy arrays.  Everything here targets the small
sizes this package works with (at most a few tens of rows), favoring exact
contracts and deterministic tie-breaking over asymptotic speed.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidInputError, NumericalFailureError, SingularMatrixError

__all__ = ["SvdTriplet", "as_cmat", "hermitian_eig_max", "max_svd", "solve"]

_JACOBI_SWEEPS = 60


@dataclass(frozen=True)
class SvdTriplet:
    """Maximum singular value with unit left/right singular vectors."""

    sigma: float
    u: np.ndarray
    v: np.ndarray


def as_cmat(M, name="matrix"):
    """Validate and return a 2-D finite complex array."""
    A = np.asarray(M, dtype=np.complex128)
    if A.ndim != 2 or A.size == 0:
        raise InvalidInputError(f"{name} must be a nonempty 2-D array")
    if not np.all(np.isfinite(A.real)) or not np.all(np.isfinite(A.imag)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def _phase_normalize(v, tol=1e-12):
    """Rotate a vector so its first nonzero component is real positive."""
    for comp in v:
        if abs(comp) > tol:
            return v * (np.conj(comp) / abs(comp))
    return v


def _lex_key(v):
    out = np.empty(2 * v.shape[0])
    out[0::2] = v.real
    out[1::2] = v.imag
    return tuple(out)


def _eig_sorted(H):
    scale = np.linalg.norm(H)
    tol = 1e-12 * (1.0 + scale)
    w, V, off = kernels.jacobi_eigh(np.ascontiguousarray(H, dtype=np.complex128), tol, _JACOBI_SWEEPS)
    if off > 10.0 * tol:
        raise NumericalFailureError(
            "Jacobi sweeps did not reach the off-diagonal target",
            {"off": off, "tol": tol},
        )
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def hermitian_eig_max(M):
    """Largest eigenvalue and eigenvector of a Hermitian matrix.

    Degenerate top eigenvalues are resolved deterministically: every
    eigenvector of the top cluster is phase-normalized (first nonzero
    component real positive) and the lexicographically largest one wins.
    """
    H = as_cmat(M, "Hermitian matrix")
    if H.shape[0] != H.shape[1]:
        raise InvalidInputError("matrix must be square")
    scale = np.linalg.norm(H)
    if np.linalg.norm(H - H.conj().T) > 1e-12 * max(scale, 1.0):
        raise InvalidInputError("matrix is not Hermitian within tolerance")
    H = 0.5 * (H + H.conj().T)
    w, V = _eig_sorted(H)
    lam = w[-1]
    cluster_tol = 1e-12 * (1.0 + abs(lam))
    best = None
    best_key = None
    for idx in range(len(w) - 1, -1, -1):
        if lam - w[idx] > cluster_tol:
            break
        vec = _phase_normalize(V[:, idx].copy())
        key = _lex_key(vec)
        if best is None or key > best_key:
            best = vec
            best_key = key
    return float(lam), best


def max_svd(M):
    """Maximum singular triplet, computed from the Gram matrix.

    The zero matrix maps to ``sigma=0`` with first-basis-vector singular
    vectors, so downstream consumers always get something deterministic.
    """
    A = as_cmat(M)
    rows, cols = A.shape
    lam, v = hermitian_eig_max(A.conj().T @ A)
    sigma = float(np.sqrt(max(lam, 0.0)))
    if sigma <= 0.0:
        u = np.zeros(rows, dtype=np.complex128)
        v = np.zeros(cols, dtype=np.complex128)
        u[0] = 1.0
        v[0] = 1.0
        return SvdTriplet(0.0, u, v)
    u = A @ v / sigma
    nu = np.linalg.norm(u)
    if nu > 0:
        u = u / nu
    return SvdTriplet(sigma, u, v)


def solve(A, B, omega=None):
    """Solve ``A X = B`` with partial pivoting.

    ``omega`` is attached to the singular-matrix error so loop-closing
    callers can report the offending frequency.
    """
    A = as_cmat(A, "A")
    B = as_cmat(B, "B")
    if A.shape[0] != A.shape[1]:
        raise InvalidInputError("A must be square")
    if B.shape[0] != A.shape[0]:
        raise InvalidInputError("B row count must match A")
    scale = float(np.max(np.abs(A)))
    X, ok = kernels.lu_solve(
        np.ascontiguousarray(A), np.ascontiguousarray(B), 1e-14 * max(scale, 1e-300)
    )
    if not ok:
        raise SingularMatrixError("pivot below threshold in linear solve", omega=omega)
    return X
