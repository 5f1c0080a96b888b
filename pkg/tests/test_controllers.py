"""Controller structure tests: evaluation, Jacobians, packing, export."""

import numpy as np
import pytest

from frdsyn.controllers import (
    ControllerStructure,
    export_controller,
    k_eval,
    k_eval_batch,
    k_jacobian,
    k_jacobian_batch,
    load_controller,
    pack_tridiag,
    pi_controller,
    static_gain,
    transfer_string,
    tridiag_controller,
    unpack_tridiag,
)
from frdsyn.errors import InvalidInputError, SingularMatrixError


def fd_jacobian(structure, x, omega, h=1e-6):
    """Central finite differences of k_eval in the parameters."""
    J = np.zeros((structure.n_params, structure.nu, structure.ny), dtype=complex)
    for i in range(structure.n_params):
        step = h * max(1.0, abs(x[i]))
        xp = x.copy(); xp[i] += step
        xm = x.copy(); xm[i] -= step
        J[i] = (k_eval(structure, xp, omega) - k_eval(structure, xm, omega)) / (2 * step)
    return J


class TestEval:
    def test_static_gain_constant(self):
        s = static_gain()
        for w in (0.1, 1.0, 100.0):
            assert k_eval(s, [2.5], w)[0, 0] == 2.5

    def test_pi_formula(self):
        s = pi_controller()
        w = 3.0
        val = k_eval(s, [713.0, 9.93e-5], w)[0, 0]
        assert val == pytest.approx(713.0 + 9.93e-5 / (1j * w), abs=1e-15)

    def test_pi_rejects_zero_frequency(self):
        with pytest.raises(SingularMatrixError):
            k_eval(pi_controller(), [1.0, 1.0], 0.0)

    def test_first_order_lag(self):
        s = tridiag_controller(1)
        x = pack_tridiag(s, np.array([[-1.0]]), np.array([[1.0]]),
                         np.array([[1.0]]), np.array([[0.0]]))
        val = k_eval(s, x, 1.0)[0, 0]
        assert val == pytest.approx(1.0 / (1.0 + 1j), abs=1e-14)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        s = tridiag_controller(3, ny=2, nu=2)
        x = rng.normal(size=s.n_params)
        ws = np.array([0.1, 1.0, 7.5])
        Kb = k_eval_batch(s, x, ws)
        for i, w in enumerate(ws):
            assert np.allclose(Kb[i], k_eval(s, x, w), atol=1e-14)


class TestJacobian:
    def test_pi_jacobian(self):
        s = pi_controller()
        J = k_jacobian(s, np.array([1.0, 2.0]), 4.0)
        assert J[0, 0, 0] == 1.0
        assert J[1, 0, 0] == pytest.approx(1.0 / (4.0j), abs=1e-16)

    def test_static_jacobian(self):
        s = static_gain(ny=2, nu=1)
        J = k_jacobian(s, np.array([1.0, -2.0]), 1.0)
        assert np.array_equal(J[0], np.array([[1.0, 0.0]]))
        assert np.array_equal(J[1], np.array([[0.0, 1.0]]))

    def test_tridiag_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        s = tridiag_controller(3)
        for _ in range(10):
            x = rng.normal(size=s.n_params)
            for w in rng.uniform(0.05, 20.0, size=10):
                J = k_jacobian(s, x, w)
                Jfd = fd_jacobian(s, x, w)
                scale = max(np.abs(Jfd).max(), 1e-12)
                assert np.abs(J - Jfd).max() <= 1e-6 * scale

    def test_random_structures_fd_agreement(self):
        rng = np.random.default_rng(11)
        cases = [static_gain(2, 2), pi_controller(), tridiag_controller(2, ny=2, nu=1)]
        checked = 0
        while checked < 100:
            s = cases[checked % len(cases)]
            x = rng.normal(size=s.n_params)
            w = float(rng.uniform(0.1, 50.0))
            J = k_jacobian(s, x, w)
            Jfd = fd_jacobian(s, x, w)
            scale = max(np.abs(Jfd).max(), 1e-9)
            assert np.abs(J - Jfd).max() <= 1e-6 * scale
            checked += 1

    def test_jacobian_batch_matches_single(self):
        rng = np.random.default_rng(3)
        s = tridiag_controller(2, ny=1, nu=2)
        x = rng.normal(size=s.n_params)
        ws = np.array([0.3, 2.0])
        Jb = k_jacobian_batch(s, x, ws)
        for i, w in enumerate(ws):
            assert np.allclose(Jb[i], k_jacobian(s, x, w), atol=1e-13)


class TestPackingAndExport:
    def test_pack_round_trip_exact(self):
        rng = np.random.default_rng(9)
        s = tridiag_controller(4, ny=2, nu=3)
        x = rng.normal(size=s.n_params)
        A, B, C, D = unpack_tridiag(s, x)
        assert np.array_equal(pack_tridiag(s, A, B, C, D), x)
        assert np.count_nonzero(A - np.triu(np.tril(A, 1), -1)) == 0

    def test_param_count_r14(self):
        assert tridiag_controller(3).n_params == 14

    def test_export_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        for s in (pi_controller(), static_gain(), tridiag_controller(3)):
            x = rng.normal(size=s.n_params)
            path = tmp_path / f"{s.kind}.ctl"
            export_controller(s, x, path)
            s2, x2 = load_controller(path)
            assert s2 == s
            assert np.array_equal(x2, x)

    def test_transfer_string_pi(self):
        text = transfer_string(pi_controller(), np.array([713.0, 9.93e-5]))
        assert text.startswith("K(s) = (")
        assert "/(s)" in text

    def test_transfer_string_tridiag_consistent(self):
        rng = np.random.default_rng(4)
        s = tridiag_controller(2)
        x = rng.normal(size=s.n_params)
        A, B, C, D = unpack_tridiag(s, x)
        den = np.poly(A).real
        num = float(D[0, 0]) * den + (np.poly(A - B @ C).real - den)
        w = 1.7
        expected = np.polyval(num, 1j * w) / np.polyval(den, 1j * w)
        assert k_eval(s, x, w)[0, 0] == pytest.approx(expected, abs=1e-10)

    def test_invalid_structure(self):
        with pytest.raises(InvalidInputError):
            ControllerStructure("pid")
        with pytest.raises(InvalidInputError):
            ControllerStructure("pi", ny=2)
