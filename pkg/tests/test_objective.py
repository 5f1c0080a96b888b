"""Closed-loop objective and model tests: loop algebra, axioms, planes."""

import numpy as np
import pytest

from frdsyn.bundle import run, SolverParams
from frdsyn.controllers import pi_controller, static_gain, tridiag_controller
from frdsyn.errors import HiddenConstraintViolation, IllPosedLoopError
from frdsyn.frd import FrdPlant
from frdsyn.objective import BarrierSpec, HinfOracle, lft_close, nyquist_winding


def scalar_plant(omega, g_samples, p11=None):
    """SISO plant with loop gain g: P = [[p11, 1], [1, -g]]."""
    n = len(omega)
    g = np.broadcast_to(np.asarray(g_samples, dtype=complex), (n,))
    p11v = np.zeros(n, dtype=complex) if p11 is None else np.broadcast_to(
        np.asarray(p11, dtype=complex), (n,))
    return FrdPlant(
        omega=np.asarray(omega, dtype=float),
        p11=p11v.reshape(n, 1, 1),
        p12=np.ones((n, 1, 1), dtype=complex),
        p21=np.ones((n, 1, 1), dtype=complex),
        p22=-g.reshape(n, 1, 1),
    )


def random_plant(rng, n_omega=12, nz=2, nw=2, ny=1, nu=1, scale=0.3):
    omega = np.sort(rng.uniform(0.1, 50.0, size=n_omega))
    def blk(r, c):
        return scale * (rng.normal(size=(n_omega, r, c)) + 1j * rng.normal(size=(n_omega, r, c)))
    return FrdPlant(omega, blk(nz, nw), blk(nz, nu), blk(ny, nw), blk(ny, nu))


class TestLftClose:
    def test_open_loop_feedthrough(self):
        rng = np.random.default_rng(1)
        p11 = rng.normal(size=(2, 2)) + 0j
        p12 = rng.normal(size=(2, 1)) + 0j
        p21 = rng.normal(size=(1, 2)) + 0j
        K = np.array([[1.7 + 0.3j]])
        T, S = lft_close(p11, p12, p21, np.zeros((1, 1)), K)
        assert np.allclose(T, p11 + p12 @ K @ p21, atol=1e-14)
        assert np.allclose(S, np.eye(1), atol=1e-14)

    def test_controller_off(self):
        rng = np.random.default_rng(2)
        p11 = rng.normal(size=(2, 2)) + 0j
        T, _ = lft_close(p11, rng.normal(size=(2, 1)) + 0j,
                         rng.normal(size=(1, 2)) + 0j,
                         rng.normal(size=(1, 1)) + 0j, np.zeros((1, 1)))
        assert np.allclose(T, p11, atol=1e-14)

    def test_scalar_loop_algebra(self):
        g, k = 0.4 + 0.1j, 1.5 - 0.2j
        T, _ = lft_close(np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)),
                         np.array([[g]]), np.array([[k]]))
        assert T[0, 0] == pytest.approx(k / (1 - g * k), abs=1e-14)

    def test_singular_loop_carries_omega(self):
        with pytest.raises(IllPosedLoopError) as err:
            lft_close(np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)),
                      np.array([[1.0]]), np.array([[1.0]]), omega=2.0)
        assert err.value.omega == 2.0


def make_oracle(plant, structure=None, c=0.2):
    structure = structure or static_gain(plant.ny, plant.nu)
    barrier = BarrierSpec(c=c) if c else None
    return HinfOracle(plant, structure, barrier)


class TestObjective:
    def test_static_siso_mixed_channel(self):
        plant = scalar_plant(np.linspace(0.1, 10, 5), 0.5)
        oracle = make_oracle(plant, c=0.2)
        x = np.array([1.0])
        f, active = oracle.objective(x)
        # closed loop: S = 1/(1 + 0.5) = 2/3, T = K S = 2/3
        assert f == pytest.approx(2.0 / 3.0, rel=1e-12)
        _w, curve_T, curve_S = oracle.response_curves(x)
        assert np.allclose(curve_S, 0.2 * (2.0 / 3.0), rtol=1e-12)
        assert len(active) == 5  # constant over the grid

    def test_controller_off_values(self):
        rng = np.random.default_rng(7)
        plant = random_plant(rng)
        oracle = make_oracle(plant, c=0.2)
        f, _ = oracle.objective(np.zeros(1))
        sig = [np.linalg.svd(plant.p11[i], compute_uv=False)[0]
               for i in range(len(plant.omega))]
        assert f == pytest.approx(max(max(sig), 0.2), rel=1e-10)

    def test_illposed_raises_signal(self):
        plant = scalar_plant(np.linspace(0.5, 2.0, 4), 0.5)
        oracle = make_oracle(plant, c=None)
        with pytest.raises(IllPosedLoopError):
            oracle.value(np.array([-2.0]))

    def test_barrier_overflow_is_hidden_constraint(self):
        plant = scalar_plant(np.linspace(0.5, 2.0, 4), 0.5)
        oracle = make_oracle(plant, c=0.2)
        with pytest.raises(HiddenConstraintViolation):
            oracle.value(np.array([-2.0 + 1e-10]))

    def test_barrier_blows_up_toward_instability(self):
        plant = scalar_plant(np.linspace(0.5, 2.0, 4), 0.5)
        oracle = make_oracle(plant, c=0.2)
        vals = []
        for k in (-1.0, -1.5, -1.9, -1.99, -1.999):
            _w, _t, curve_S = oracle.response_curves(np.array([k]))
            vals.append(float(np.max(curve_S)))
        assert all(b > a for a, b in zip(vals, vals[1:]))
        assert vals[-1] > 50.0


class TestModel:
    def test_m1_exactness_same_code_path(self):
        rng = np.random.default_rng(3)
        plant = random_plant(rng, ny=2, nu=1)
        oracle = make_oracle(plant, static_gain(ny=2, nu=1), c=0.2)
        x = rng.normal(size=2)
        assert oracle.model_value(x, x) == oracle.value(x)

    def test_affine_loop_model_is_exact(self):
        # P22 = 0 makes the closed loop affine in a static gain
        rng = np.random.default_rng(4)
        n = 6
        omega = np.linspace(0.1, 5, n)
        plant = FrdPlant(
            omega,
            rng.normal(size=(n, 2, 2)) + 0j,
            rng.normal(size=(n, 2, 1)) + 0j,
            rng.normal(size=(n, 1, 2)) + 0j,
            np.zeros((n, 1, 1), dtype=complex),
        )
        oracle = make_oracle(plant, c=None)
        x = np.array([0.7])
        y = np.array([-2.3])
        assert oracle.model_value(y, x) == pytest.approx(oracle.value(y), rel=1e-12)

    def test_small_perturbation_consistency(self):
        rng = np.random.default_rng(5)
        plant = random_plant(rng)
        oracle = make_oracle(plant, c=0.2)
        x = np.array([0.4])
        scale = max(1.0, oracle.value(x))
        for _ in range(10):
            y = x + rng.normal(size=1) * 1e-4
            assert abs(oracle.model_value(y, x) - oracle.value(y)) <= 1e-6 * scale

    def test_convexity_sampling(self):
        rng = np.random.default_rng(6)
        plant = random_plant(rng, ny=1, nu=1)
        oracle = make_oracle(plant, pi_controller(), c=0.2)
        x = np.array([0.5, 0.1])
        for _ in range(50):
            y1 = x + rng.normal(size=2)
            y2 = x + rng.normal(size=2)
            lam = float(rng.uniform())
            mid = lam * y1 + (1 - lam) * y2
            lhs = oracle.model_value(mid, x)
            rhs = lam * oracle.model_value(y1, x) + (1 - lam) * oracle.model_value(y2, x)
            assert lhs <= rhs + 1e-9

    def test_strictness_quadratic_gap(self):
        rng = np.random.default_rng(8)
        plant = random_plant(rng, n_omega=8)
        oracle = make_oracle(plant, c=0.2)
        x = np.array([0.3])
        d = np.array([1.0])
        hs = np.geomspace(1e-4, 1e-2, 8)
        errs = []
        for h in hs:
            y = x + h * d
            errs.append(abs(oracle.model_value(y, x) - oracle.value(y)))
        errs = np.array(errs)
        assert np.all(errs > 0)
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert slope >= 1.9

    def test_subgradient_directional_derivatives(self):
        rng = np.random.default_rng(9)
        plant = random_plant(rng, ny=1, nu=1)
        oracle = make_oracle(plant, pi_controller(), c=0.2)
        x = np.array([0.8, 0.05])
        g = oracle.exactness_plane(x).g
        h = 1e-7
        for _ in range(20):
            d = rng.normal(size=2)
            d /= np.linalg.norm(d)
            fd = (oracle.model_value(x + h * d, x) - oracle.model_value(x - h * d, x)) / (2 * h)
            assert abs(g @ d - fd) <= 1e-5 * max(1.0, abs(fd))


class TestPlanes:
    def test_exactness_plane_value(self):
        rng = np.random.default_rng(10)
        plant = random_plant(rng)
        oracle = make_oracle(plant, c=0.2)
        x = np.array([0.6])
        p = oracle.exactness_plane(x)
        assert p.tag == "exactness"
        assert p.value_at(x, x) == pytest.approx(oracle.value(x), rel=1e-12)

    def test_minorization_sampling(self):
        rng = np.random.default_rng(11)
        plant = random_plant(rng, ny=1, nu=1)
        oracle = make_oracle(plant, pi_controller(), c=0.2)
        x = np.array([0.5, 0.02])
        planes = [oracle.exactness_plane(x)]
        for _ in range(5):
            z = x + rng.normal(size=2)
            planes.append(oracle.plane_at(z, x))
        scale = max(1.0, oracle.value(x))
        for _ in range(100):
            y = x + rng.normal(size=2)
            phi = oracle.model_value(y, x)
            for p in planes:
                assert p.value_at(y, x) <= phi + 1e-9 * scale

    def test_siso_gradient_matches_fd_at_smooth_point(self):
        rng = np.random.default_rng(12)
        plant = random_plant(rng, nz=1, nw=1)
        oracle = make_oracle(plant, c=None)
        x = np.array([0.4])
        p = oracle.exactness_plane(x)
        h = 1e-7
        fd = (oracle.model_value(x + h, x) - oracle.model_value(x - h, x)) / (2 * h)
        assert p.g[0] == pytest.approx(fd, rel=1e-5)

    def test_dT_dx_no_feedback(self):
        rng = np.random.default_rng(13)
        n = 4
        omega = np.linspace(0.2, 3.0, n)
        p12 = rng.normal(size=(n, 2, 1)) + 0j
        p21 = rng.normal(size=(n, 1, 2)) + 0j
        plant = FrdPlant(omega, rng.normal(size=(n, 2, 2)) + 0j, p12, p21,
                         np.zeros((n, 1, 1), dtype=complex))
        oracle = make_oracle(plant, c=None)
        x = np.array([1.3])
        dT = oracle.dT_dx(x, omega[2])
        assert np.allclose(dT[0], p12[2] @ np.ones((1, 1)) @ p21[2], atol=1e-12)

    def test_dT_dx_scalar_quotient_rule(self):
        omega = np.array([1.0])
        g = 0.3 + 0.2j
        plant = FrdPlant(omega, np.zeros((1, 1, 1), complex),
                         np.full((1, 1, 1), 2.0 + 0j), np.full((1, 1, 1), 0.5 + 0j),
                         np.full((1, 1, 1), g))
        oracle = make_oracle(plant, c=None)
        k = 0.7
        dT = oracle.dT_dx(np.array([k]), 1.0)[0]
        expected = 2.0 * 0.5 / (1.0 - g * k) ** 2
        assert dT[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_dT_dx_matches_finite_differences(self):
        rng = np.random.default_rng(14)
        plant = random_plant(rng, ny=1, nu=1)
        oracle = make_oracle(plant, pi_controller(), c=None)
        x = np.array([0.9, 0.03])
        w = plant.omega[3]
        dT = oracle.dT_dx(x, w)
        h = 1e-6
        for i in range(2):
            xp = x.copy(); xp[i] += h
            xm = x.copy(); xm[i] -= h
            i_w = 3
            Kp = oracle.structure
            from frdsyn.controllers import k_eval
            Tp, _ = lft_close(plant.p11[i_w], plant.p12[i_w], plant.p21[i_w],
                              plant.p22[i_w], k_eval(Kp, xp, w))
            Tm, _ = lft_close(plant.p11[i_w], plant.p12[i_w], plant.p21[i_w],
                              plant.p22[i_w], k_eval(Kp, xm, w))
            fd = (Tp - Tm) / (2 * h)
            assert np.abs(dT[i] - fd).max() <= 1e-6 * max(1.0, np.abs(fd).max())


class TestAnticipated:
    def test_single_peak(self):
        omega = np.linspace(0.1, 2.0, 9)
        mags = 1.0 / (1.0 + (omega - 1.0) ** 2)
        plant = scalar_plant(omega, 0.0, p11=mags)
        oracle = make_oracle(plant, c=None)
        planes = oracle.anticipated_planes(np.array([0.0]))
        assert len(planes) == 1
        assert all(p.tag == "anticipated" for p in planes)

    def test_two_equal_peaks(self):
        omega = np.linspace(0.1, 2.0, 11)
        mags = np.zeros(11)
        mags[2] = 1.0
        mags[8] = 1.0
        plant = scalar_plant(omega, 0.0, p11=mags)
        oracle = make_oracle(plant, c=None)
        planes = oracle.anticipated_planes(np.array([0.0]))
        assert len(planes) == 2

    def test_count_matches_direct_scan(self):
        rng = np.random.default_rng(15)
        omega = np.linspace(0.1, 5.0, 40)
        mags = 1.0 + 0.5 * np.sin(3 * omega) + 0.05 * rng.normal(size=40)
        plant = scalar_plant(omega, 0.0, p11=mags)
        oracle = make_oracle(plant, c=None)
        x = np.array([0.0])
        planes = oracle.anticipated_planes(x)
        _w, curve, _s = oracle.response_curves(x)
        f = curve.max()
        count = 0
        for i in range(40):
            left = curve[i - 1] if i > 0 else -np.inf
            right = curve[i + 1] if i < 39 else -np.inf
            if curve[i] >= left and curve[i] >= right and curve[i] >= 0.95 * f:
                count += 1
        assert len(planes) == count


class TestEndToEnd:
    def test_winding_is_finite(self):
        plant = scalar_plant(np.linspace(0.1, 10, 20), 0.5)
        from frdsyn.controllers import k_eval_batch
        K = k_eval_batch(static_gain(), np.array([1.0]), plant.omega)
        assert np.isfinite(nyquist_winding(plant, K))

    def test_bundle_minimizes_static_gain_objective(self):
        # static plant: f(k) = max(|T|, c |S|) has a computable 1-D optimum
        omega = np.linspace(0.1, 4.0, 6)
        plant = scalar_plant(omega, 0.5, p11=0.8)
        oracle = make_oracle(plant, c=0.2)

        def brute(k):
            S = 1.0 / (1.0 + 0.5 * k)
            T = 0.8 + k * S
            return max(abs(T), 0.2 * abs(S))

        ks = np.linspace(-1.9, 3.0, 200001)
        vals = np.array([brute(k) for k in ks])
        k_ref = ks[np.argmin(vals)]
        f_ref = vals.min()
        res = run(oracle, np.array([0.5]), SolverParams(eps_stop=1e-10, q_eps=1.0))
        assert res.f <= f_ref + 1e-4
        assert abs(res.x[0] - k_ref) <= 1e-2
