"""Linear algebra kernel tests against independent oracles."""

import numpy as np
import pytest

from frdsyn.errors import InvalidInputError, SingularMatrixError
from frdsyn.linalg import hermitian_eig_max, max_svd, solve


def charpoly_coeffs(H):
    """Characteristic polynomial by Faddeev-LeVerrier (trace recursion)."""
    n = H.shape[0]
    coeffs = np.zeros(n + 1, dtype=complex)
    coeffs[0] = 1.0
    M = np.zeros_like(H)
    I = np.eye(n, dtype=complex)
    for k in range(1, n + 1):
        M = H @ M + coeffs[k - 1] * I
        coeffs[k] = -np.trace(H @ M) / k
    return coeffs


def eig_max_oracle(H, seed=0):
    """Largest eigenvalue via char-poly roots refined by shifted inverse iteration."""
    roots = np.roots(charpoly_coeffs(H))
    lam = float(np.max(roots.real))
    rng = np.random.default_rng(seed)
    v = rng.normal(size=H.shape[0]) + 1j * rng.normal(size=H.shape[0])
    v /= np.linalg.norm(v)
    shift = lam + 1e-7 * (1.0 + abs(lam))
    for _ in range(200):
        v = np.linalg.solve(H - shift * np.eye(H.shape[0]), v)
        v /= np.linalg.norm(v)
    lam_ref = float(np.real(v.conj() @ H @ v))
    return lam_ref, v


def sigma_power_oracle(M, iters=20000, tol=1e-14):
    """Max singular value by power iteration on the Gram matrix."""
    G = M.conj().T @ M
    v = np.ones(M.shape[1], dtype=complex) / np.sqrt(M.shape[1])
    lam = 0.0
    for _ in range(iters):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        lam_new = float(np.real(v.conj() @ G @ v))
        if abs(lam_new - lam) <= tol * max(1.0, lam_new):
            lam = lam_new
            break
        lam = lam_new
    return np.sqrt(max(lam, 0.0))


def random_hermitian(rng, n):
    M = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (M + M.conj().T)


class TestHermitianEigMax:
    def test_diagonal(self):
        lam, w = hermitian_eig_max(np.diag([1.0, 3.0, 2.0]))
        assert lam == pytest.approx(3.0, abs=1e-12)
        assert np.allclose(np.abs(w), [0, 1, 0], atol=1e-12)

    def test_known_2x2(self):
        lam, w = hermitian_eig_max(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert lam == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(w, np.array([1.0, 1.0]) / np.sqrt(2.0), atol=1e-12)

    def test_random_6x6_vs_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            H = random_hermitian(rng, 6)
            lam_ref, _ = eig_max_oracle(H)
            lam, w = hermitian_eig_max(H)
            assert abs(lam - lam_ref) <= 1e-9 * max(1.0, abs(lam_ref))
            resid = np.linalg.norm(H @ w - lam * w)
            assert resid <= 1e-9 * max(1.0, np.linalg.norm(H))

    def test_rejects_non_hermitian(self):
        with pytest.raises(InvalidInputError):
            hermitian_eig_max(np.array([[0.0, 1.0], [0.5, 0.0]]))

    def test_unitary_conjugation_invariance(self):
        rng = np.random.default_rng(7)
        U, _ = np.linalg.qr(rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5)))
        for _ in range(20):
            H = random_hermitian(rng, 5)
            lam1, _ = hermitian_eig_max(H)
            lam2, _ = hermitian_eig_max(U.conj().T @ H @ U)
            assert abs(lam1 - lam2) <= 1e-9 * max(1.0, abs(lam1))

    def test_degenerate_top_eigenvalue_is_deterministic(self):
        H = np.eye(3)
        lam, w = hermitian_eig_max(H)
        lam2, w2 = hermitian_eig_max(H)
        assert lam == lam2
        assert np.array_equal(w, w2)
        first = w[np.flatnonzero(np.abs(w) > 1e-12)[0]]
        assert first.imag == pytest.approx(0.0, abs=1e-14)
        assert first.real > 0


class TestMaxSvd:
    def test_diagonal(self):
        t = max_svd(np.diag([3.0, 4.0]))
        assert t.sigma == pytest.approx(4.0, abs=1e-12)

    def test_zero_matrix(self):
        t = max_svd(np.zeros((3, 2)))
        assert t.sigma == 0.0
        assert np.array_equal(t.v, np.array([1.0 + 0j, 0.0]))
        assert np.array_equal(t.u, np.array([1.0 + 0j, 0.0, 0.0]))

    def test_random_vs_power_iteration(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            M = rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3))
            t = max_svd(M)
            sig_ref = sigma_power_oracle(M)
            assert abs(t.sigma - sig_ref) <= 1e-10 * max(1.0, sig_ref)

    def test_triplet_contract(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            M = rng.normal(size=(5, 4)) + 1j * rng.normal(size=(5, 4))
            t = max_svd(M)
            assert abs(np.linalg.norm(t.u) - 1.0) <= 1e-12
            assert abs(np.linalg.norm(t.v) - 1.0) <= 1e-12
            assert np.linalg.norm(M @ t.v - t.sigma * t.u) <= 1e-9 * np.linalg.norm(M)
            lam1, _ = hermitian_eig_max(M.conj().T @ M)
            assert abs(t.sigma**2 - lam1) <= 1e-9 * np.linalg.norm(M) ** 2


class TestSolve:
    def test_identity(self):
        B = np.arange(6, dtype=float).reshape(3, 2) + 0j
        X = solve(np.eye(3), B)
        assert np.allclose(X, B, atol=1e-14)

    def test_scaling(self):
        X = solve(2.0 * np.eye(4), np.eye(4))
        assert np.allclose(X, 0.5 * np.eye(4), atol=1e-14)

    def test_residual_on_random_instances(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            n = int(rng.integers(1, 7))
            A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) + 2.0 * np.eye(n)
            B = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
            X = solve(A, B)
            res = np.linalg.norm(A @ X - B)
            assert res <= 1e-9 * np.linalg.norm(A) * max(np.linalg.norm(X), 1e-30)

    def test_singular_carries_frequency(self):
        with pytest.raises(SingularMatrixError) as err:
            solve(np.zeros((2, 2)), np.eye(2), omega=3.5)
        assert err.value.omega == 3.5
