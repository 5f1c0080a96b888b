"""Hot numeric kernels.

Every function here is written in plain loop style so it can run either
through numba's ``@njit`` or as ordinary Python/numpy.  The pure path is
selected with the environment variable ``FRDSYN_PURE_NUMPY=1`` (useful for
debugging and as a reference for the benchmark in ``benchmarks/``), and is
also the automatic fallback when numba is unavailable.  Both paths execute
the same statements, so results agree to the last bit.
"""

import os

import numpy as np

__all__ = [
    "PURE_NUMPY",
    "jacobi_eigh",
    "lu_solve",
    "sigma_max_batch",
    "lft_close_batch",
    "rcd_outlet_integrals",
    "set_num_threads",
]


def _no_jit(*args, **kwargs):
    def wrap(fn):
        return fn

    return wrap


_flag = os.environ.get("FRDSYN_PURE_NUMPY", "0").strip().lower()
PURE_NUMPY = _flag in ("1", "true", "yes", "on")

if not PURE_NUMPY:
    try:
        from numba import njit as _njit, prange, set_num_threads
    except ImportError:  # pragma: no cover - numba is a declared dependency
        PURE_NUMPY = True

if PURE_NUMPY:
    prange = range
    _njit = _no_jit

    def set_num_threads(n):  # noqa: ARG001 - parity with numba's signature
        return None


@_njit(cache=True)
def jacobi_eigh(H, tol, max_sweeps):
    """Diagonalize a complex Hermitian matrix by cyclic Jacobi rotations.

    Returns ``(w, V, off)`` with raw (unsorted) eigenvalue estimates on the
    diagonal, accumulated unitary ``V`` (columns are eigenvectors), and the
    final off-diagonal Frobenius norm.  ``tol`` is the absolute off-norm
    target; callers scale it to the matrix.
    """
    n = H.shape[0]
    A = H.copy()
    V = np.eye(n, dtype=np.complex128)
    off = 0.0
    for p in range(n):
        for q in range(p + 1, n):
            off += 2.0 * abs(A[p, q]) ** 2
    off = np.sqrt(off)
    for _sweep in range(max_sweeps):
        if off <= tol:
            break
        for p in range(n):
            for q in range(p + 1, n):
                apq = A[p, q]
                r = abs(apq)
                if r <= tol / (4.0 * n):
                    continue
                phase = apq / r
                app = A[p, p].real
                aqq = A[q, q].real
                tau = (aqq - app) / (2.0 * r)
                if tau >= 0.0:
                    t = -1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = 1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for i in range(n):
                    aip = A[i, p]
                    aiq = A[i, q]
                    A[i, p] = c * aip + s * np.conj(phase) * aiq
                    A[i, q] = -s * phase * aip + c * aiq
                for i in range(n):
                    api = A[p, i]
                    aqi = A[q, i]
                    A[p, i] = c * api + s * phase * aqi
                    A[q, i] = -s * np.conj(phase) * api + c * aqi
                for i in range(n):
                    vip = V[i, p]
                    viq = V[i, q]
                    V[i, p] = c * vip + s * np.conj(phase) * viq
                    V[i, q] = -s * phase * vip + c * viq
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += 2.0 * abs(A[p, q]) ** 2
        off = np.sqrt(off)
    w = np.empty(n)
    for i in range(n):
        w[i] = A[i, i].real
    return w, V, off


@_njit(cache=True)
def lu_solve(A, B, piv_tol):
    """Solve ``A X = B`` by LU with partial pivoting.

    Returns ``(X, ok)``; ``ok`` is False when some pivot magnitude falls
    below the absolute threshold ``piv_tol`` (X is then meaningless).
    """
    n = A.shape[0]
    m = B.shape[1]
    U = A.astype(np.complex128).copy()
    X = B.astype(np.complex128).copy()
    for col in range(n):
        piv = col
        best = abs(U[col, col])
        for r in range(col + 1, n):
            v = abs(U[r, col])
            if v > best:
                best = v
                piv = r
        if best < piv_tol:
            return X, False
        if piv != col:
            for c2 in range(n):
                tmp = U[col, c2]
                U[col, c2] = U[piv, c2]
                U[piv, c2] = tmp
            for c2 in range(m):
                tmp = X[col, c2]
                X[col, c2] = X[piv, c2]
                X[piv, c2] = tmp
        for r in range(col + 1, n):
            mult = U[r, col] / U[col, col]
            U[r, col] = 0.0
            for c2 in range(col + 1, n):
                U[r, c2] -= mult * U[col, c2]
            for c2 in range(m):
                X[r, c2] -= mult * X[col, c2]
    for col in range(n - 1, -1, -1):
        for c2 in range(m):
            acc = X[col, c2]
            for r in range(col + 1, n):
                acc -= U[col, r] * X[r, c2]
            X[col, c2] = acc / U[col, col]
    return X, True


@_njit(cache=True)
def _sigma_max_one(M):
    p = M.shape[1]
    H = np.conj(M.T) @ M
    scale = 0.0
    for i in range(p):
        for j in range(p):
            scale += abs(H[i, j]) ** 2
    tol = 1e-13 * (1.0 + np.sqrt(scale))
    w, _V, _off = jacobi_eigh(H, tol, 60)
    lam = w[0]
    for i in range(1, p):
        if w[i] > lam:
            lam = w[i]
    if lam < 0.0:
        lam = 0.0
    return np.sqrt(lam)


@_njit(cache=True, parallel=True)
def sigma_max_batch(T):
    """Maximum singular value of each matrix in a stack ``T[i]``."""
    nw = T.shape[0]
    out = np.empty(nw)
    for i in prange(nw):
        out[i] = _sigma_max_one(T[i])
    return out


@_njit(cache=True, parallel=True)
def lft_close_batch(P11, P12, P21, P22, K):
    """Close the control loop sample-wise: ``T = P11 + P12 K (I - P22 K)^-1 P21``.

    Also returns the inverse return difference ``S = (I - P22 K)^-1`` and a
    well-posedness flag per frequency.
    """
    nw = P11.shape[0]
    nz = P11.shape[1]
    nwid = P11.shape[2]
    ny = P22.shape[1]
    T = np.empty((nw, nz, nwid), dtype=np.complex128)
    S = np.empty((nw, ny, ny), dtype=np.complex128)
    ok = np.empty(nw, dtype=np.bool_)
    eye = np.eye(ny, dtype=np.complex128)
    for i in prange(nw):
        F = eye - P22[i] @ K[i]
        scale = 0.0
        for r in range(ny):
            for c in range(ny):
                v = abs(F[r, c])
                if v > scale:
                    scale = v
        Si, good = lu_solve(F, eye, 1e-14 * max(scale, 1e-300))
        ok[i] = good
        if good:
            S[i] = Si
            T[i] = P11[i] + P12[i] @ (K[i] @ Si) @ P21[i]
        else:
            S[i] = eye * np.nan
            T[i] = P11[i][:, :] * np.nan
    return T, S, ok


@_njit(cache=True)
def _rcd_adaptive_simpson(which, T1, a, b, f, cp_scale, tol, cap):
    """Integrate the outlet-profile integrand over [0, 1].

    which=0: C'(tau L) * exp((b - T1) tau / 2a)
    which=1: C'(tau L) * exp((b + T1) (tau - 1) / 2a)   (shifted to decay)
    """
    two_a = 2.0 * a
    w_exp = (b - T1) / two_a if which == 0 else (b + T1) / two_a

    def integrand(tau):
        e1 = (f * (1.0 - tau) - b * tau) / two_a
        e2 = (f * (tau - 1.0) - b * tau) / two_a
        cp = cp_scale * (np.exp(e1) - np.exp(e2))
        if which == 0:
            return cp * np.exp(w_exp * tau)
        return cp * np.exp(w_exp * (tau - 1.0))

    depth = 256
    xa = np.empty(depth)
    xb = np.empty(depth)
    fa = np.empty(depth, dtype=np.complex128)
    fm = np.empty(depth, dtype=np.complex128)
    fb = np.empty(depth, dtype=np.complex128)
    ss = np.empty(depth, dtype=np.complex128)
    tl = np.empty(depth)

    f0 = integrand(0.0)
    f1 = integrand(0.5)
    f2 = integrand(1.0)
    xa[0] = 0.0
    xb[0] = 1.0
    fa[0] = f0
    fm[0] = f1
    fb[0] = f2
    ss[0] = (f0 + 4.0 * f1 + f2) / 6.0
    tl[0] = tol
    top = 1
    total = 0.0 + 0.0j
    n_eval = 3
    while top > 0:
        top -= 1
        a0 = xa[top]
        b0 = xb[top]
        va = fa[top]
        vm = fm[top]
        vb = fb[top]
        s0 = ss[top]
        t0 = tl[top]
        mid = 0.5 * (a0 + b0)
        lm = 0.5 * (a0 + mid)
        rm = 0.5 * (mid + b0)
        vlm = integrand(lm)
        vrm = integrand(rm)
        n_eval += 2
        sl = (va + 4.0 * vlm + vm) * ((mid - a0) / 6.0)
        sr = (vm + 4.0 * vrm + vb) * ((b0 - mid) / 6.0)
        err = sl + sr - s0
        if abs(err) <= 15.0 * t0 or (b0 - a0) <= 1e-14:
            total += sl + sr + err / 15.0
        else:
            if top + 2 > depth or n_eval > cap:
                return total, False
            xa[top] = a0
            xb[top] = mid
            fa[top] = va
            fm[top] = vlm
            fb[top] = vm
            ss[top] = sl
            tl[top] = 0.5 * t0
            top += 1
            xa[top] = mid
            xb[top] = b0
            fa[top] = vm
            fm[top] = vrm
            fb[top] = vb
            ss[top] = sr
            tl[top] = 0.5 * t0
            top += 1
    return total, True


@_njit(cache=True, parallel=True)
def rcd_outlet_integrals(T1s, a, b, f, cp_scale, tol, cap):
    """Both outlet-profile quadratures for a batch of T1 values."""
    n = T1s.shape[0]
    J1 = np.empty(n, dtype=np.complex128)
    J2s = np.empty(n, dtype=np.complex128)
    ok = np.empty(n, dtype=np.bool_)
    for i in prange(n):
        v1, ok1 = _rcd_adaptive_simpson(0, T1s[i], a, b, f, cp_scale, tol, cap)
        v2, ok2 = _rcd_adaptive_simpson(1, T1s[i], a, b, f, cp_scale, tol, cap)
        J1[i] = v1
        J2s[i] = v2
        ok[i] = ok1 and ok2
    return J1, J2s, ok
