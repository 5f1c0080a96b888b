"""Discretized worst-gain objective and its convex first-order model.

The objective of one parameter vector x is

    f(x) = max over grid omega of max( sigma_max(T(x, jw)),  c * sigma_max(S(x, jw)) )

where ``T = P11 + P12 K (I - P22 K)^-1 P21`` is the closed performance
channel and ``S = (I - P22 K)^-1`` the inverse return difference, whose
weighted magnitude acts as a stability barrier (it blows up as the Nyquist
curve approaches the critical point).  The model around x linearizes the
matrix samples inside sigma_max, which keeps it convex and exact at x:

    phi(y, x) = max over branches of sigma_max( B(x, jw) + sum_i dB_i (y_i - x_i) )

Cutting planes come from the active branch's singular triplet.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .bundle import Oracle, Plane
from .controllers import k_eval_batch, k_jacobian_batch
from .errors import HiddenConstraintViolation, IllPosedLoopError, InvalidInputError
from .frd import FrdPlant
from .linalg import max_svd, solve

__all__ = [
    "BarrierSpec",
    "lft_close",
    "HinfOracle",
    "nyquist_winding",
]


@dataclass(frozen=True)
class BarrierSpec:
    """Weight and channel of the stability barrier term."""

    c: float = 0.2
    channel: str = "sensitivity"

    def __post_init__(self):
        if not (self.c > 0.0):
            raise InvalidInputError("barrier weight c must be positive")
        if self.channel != "sensitivity":
            raise InvalidInputError("only the sensitivity barrier channel is implemented")


def lft_close(p11, p12, p21, p22, K, omega=None):
    """Close the loop at one frequency: returns (T, S).

    Raises ``IllPosedLoopError`` carrying the frequency when the return
    difference ``I - P22 K`` is singular.
    """
    p22 = np.asarray(p22, dtype=complex)
    K = np.asarray(K, dtype=complex)
    ny = p22.shape[0]
    F = np.eye(ny) - p22 @ K
    try:
        S = solve(F, np.eye(ny), omega=omega)
    except Exception as err:
        raise IllPosedLoopError(f"singular return difference: {err}", omega=omega)
    T = np.asarray(p11, dtype=complex) + np.asarray(p12, dtype=complex) @ K @ S @ np.asarray(p21, dtype=complex)
    return T, S


class _EvalRecord:
    __slots__ = ("f", "curve_T", "curve_S", "T", "S", "K", "active")

    def __init__(self, f, curve_T, curve_S, T, S, K, active):
        self.f = f
        self.curve_T = curve_T
        self.curve_S = curve_S
        self.T = T
        self.S = S
        self.K = K
        self.active = active


class HinfOracle(Oracle):
    """Bundle-solver oracle for a sampled plant and a controller structure.

    ``value`` raises ``HiddenConstraintViolation`` when the loop is
    ill-posed at a grid node or the barrier exceeds ``1 / eps_bar``;
    ``model_value`` and the plane generators stay defined everywhere, so a
    rejected trial still yields a cutting plane.
    """

    def __init__(self, plant: FrdPlant, structure, barrier: BarrierSpec = None,
                 active_tol=1e-8, peak_rel_tol=0.05, eps_bar=1e-8):
        if structure.ny != plant.ny or structure.nu != plant.nu:
            raise InvalidInputError(
                f"controller is {structure.nu}x{structure.ny} but plant loop "
                f"channel needs {plant.nu}x{plant.ny}"
            )
        self.plant = plant
        self.structure = structure
        self.barrier = barrier
        self.active_tol = active_tol
        self.peak_rel_tol = peak_rel_tol
        self.eps_bar = eps_bar
        self.n_evals = 0
        self._eval_cache = {}
        self._lin_cache = {}

    # -- shared evaluation ------------------------------------------------

    def _key(self, x):
        return np.asarray(x, dtype=float).tobytes()

    def _evaluate(self, x):
        key = self._key(x)
        rec = self._eval_cache.get(key)
        if rec is not None:
            return rec
        x = np.asarray(x, dtype=float)
        K = k_eval_batch(self.structure, x, self.plant.omega)
        T, S, ok = kernels.lft_close_batch(
            self.plant.p11, self.plant.p12, self.plant.p21, self.plant.p22, K
        )
        if not np.all(ok):
            bad = int(np.argmin(ok))
            self._eval_cache[key] = ("illposed", float(self.plant.omega[bad]))
            self._trim(self._eval_cache)
            return self._eval_cache[key]
        curve_T = kernels.sigma_max_batch(np.ascontiguousarray(T))
        if self.barrier is not None:
            curve_S = self.barrier.c * kernels.sigma_max_batch(np.ascontiguousarray(S))
        else:
            curve_S = np.full_like(curve_T, -np.inf)
        curve = np.maximum(curve_T, curve_S)
        f = float(np.max(curve))
        self.n_evals += 1
        active = [
            (float(w), float(v))
            for w, v in zip(self.plant.omega, curve)
            if v >= f * (1.0 - self.active_tol)
        ]
        rec = _EvalRecord(f, curve_T, curve_S, T, S, K, active)
        self._eval_cache[key] = rec
        self._trim(self._eval_cache)
        return rec

    def _trim(self, cache, keep=8):
        while len(cache) > keep:
            cache.pop(next(iter(cache)))

    def _linearization(self, x):
        """Branch-matrix Jacobian stacks at x: (dT, dSc)."""
        key = self._key(x)
        lin = self._lin_cache.get(key)
        if lin is not None:
            return lin
        rec = self._evaluate(x)
        if not isinstance(rec, _EvalRecord):
            raise IllPosedLoopError("cannot linearize an ill-posed loop", omega=rec[1])
        dK = k_jacobian_batch(self.structure, np.asarray(x, dtype=float), self.plant.omega)
        S = rec.S
        K = rec.K
        # T'_i = P12 (I - K P22)^-1 dK_i (I - P22 K)^-1 P21, with the left
        # inverse expanded by push-through to reuse S
        KSP22 = K @ S @ self.plant.p22
        Lm = self.plant.p12 + np.einsum("wzu,wuv->wzv", self.plant.p12, KSP22)
        Rm = S @ self.plant.p21
        dT = np.einsum("wzu,wpuy,wyn->wpzn", Lm, dK, Rm)
        if self.barrier is not None:
            SP22 = S @ self.plant.p22
            dSc = self.barrier.c * np.einsum("wau,wpuy,wyb->wpab", SP22, dK, S)
        else:
            dSc = None
        lin = (dT, dSc)
        self._lin_cache[key] = lin
        self._trim(self._lin_cache, keep=4)
        return lin

    def _model_matrices(self, y, x):
        """Linearized branch samples A_T(y), A_S(y) around x."""
        rec = self._evaluate(x)
        if not isinstance(rec, _EvalRecord):
            raise IllPosedLoopError("model undefined: ill-posed at center", omega=rec[1])
        d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        dT, dSc = self._linearization(x)
        AT = rec.T + np.einsum("wpzn,p->wzn", dT, d)
        AS = None
        if self.barrier is not None:
            AS = self.barrier.c * rec.S + np.einsum("wpab,p->wab", dSc, d)
        return rec, AT, AS, dT, dSc

    # -- the Oracle interface ----------------------------------------------

    def value(self, x):
        rec = self._evaluate(x)
        if not isinstance(rec, _EvalRecord):
            raise IllPosedLoopError("loop ill-posed on the grid", omega=rec[1])
        if self.barrier is not None:
            peak = float(np.max(rec.curve_S))
            if peak > 1.0 / self.eps_bar:
                raise HiddenConstraintViolation(
                    f"barrier value {peak:g} exceeds 1/eps_bar"
                )
        return rec.f

    def objective(self, x):
        """Objective value and the list of active (omega, value) pairs."""
        f = self.value(x)
        rec = self._evaluate(x)
        return f, list(rec.active)

    def model_value(self, y, x):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        if np.array_equal(y, x):
            rec = self._evaluate(x)
            if not isinstance(rec, _EvalRecord):
                raise IllPosedLoopError("model undefined at center", omega=rec[1])
            return rec.f
        _rec, AT, AS, _dT, _dSc = self._model_matrices(y, x)
        phi = float(np.max(kernels.sigma_max_batch(np.ascontiguousarray(AT))))
        if AS is not None:
            phi = max(phi, float(np.max(kernels.sigma_max_batch(np.ascontiguousarray(AS)))))
        return phi

    def _branch_argmax(self, curve_T, curve_S):
        iT = int(np.argmax(curve_T))
        if curve_S is None:
            return iT, "T"
        iS = int(np.argmax(curve_S))
        if curve_T[iT] >= curve_S[iS]:
            return iT, "T"
        return iS, "S"

    def _branch_plane(self, x, idx, channel, AT, AS, dT, dSc, tag, base, value=None):
        """Plane of one (frequency, channel) branch of the linearized model."""
        if channel == "T":
            trip = max_svd(AT[idx])
            grads = np.real(np.einsum("z,pzn,n->p", np.conj(trip.u), dT[idx], trip.v))
        else:
            trip = max_svd(AS[idx])
            grads = np.real(np.einsum("a,pab,b->p", np.conj(trip.u), dSc[idx], trip.v))
        if value is None:
            value = trip.sigma
        xa = np.asarray(x, dtype=float)
        anchor = xa if base is None else np.asarray(base, dtype=float)
        a = float(value) - float(grads @ (anchor - xa))
        return Plane(a=a, g=grads, tag=tag, base=anchor.copy()), value

    def plane_at(self, z, x, tag="cut"):
        z = np.asarray(z, dtype=float)
        x = np.asarray(x, dtype=float)
        rec, AT, AS, dT, dSc = self._model_matrices(z, x)
        if np.array_equal(z, x):
            curve_T, curve_S = rec.curve_T, (rec.curve_S if AS is not None else None)
        else:
            curve_T = kernels.sigma_max_batch(np.ascontiguousarray(AT))
            curve_S = None
            if AS is not None:
                curve_S = kernels.sigma_max_batch(np.ascontiguousarray(AS))
        idx, channel = self._branch_argmax(curve_T, curve_S)
        value = curve_T[idx] if channel == "T" else curve_S[idx]
        plane, _val = self._branch_plane(x, idx, channel, AT, AS, dT, dSc, tag, z,
                                         value=value)
        return plane

    def exactness_plane(self, x):
        return self.plane_at(x, x, tag="exactness")

    def anticipated_planes(self, x):
        """Planes at every near-peak local maximum of the response curves."""
        x = np.asarray(x, dtype=float)
        rec, AT, AS, dT, dSc = self._model_matrices(x, x)
        threshold = rec.f * (1.0 - self.peak_rel_tol)
        planes = []
        for channel, curve in (("T", rec.curve_T), ("S", rec.curve_S)):
            if channel == "S" and self.barrier is None:
                continue
            for idx in _local_maxima(curve):
                if curve[idx] < threshold:
                    continue
                plane, _val = self._branch_plane(
                    x, idx, channel, AT, AS, dT, dSc, "anticipated", x,
                    value=curve[idx],
                )
                planes.append(plane)
        return planes

    def dT_dx(self, x, omega):
        """Performance-channel parameter Jacobian at one grid frequency."""
        idx = int(np.searchsorted(self.plant.omega, float(omega)))
        if idx >= len(self.plant.omega) or self.plant.omega[idx] != float(omega):
            raise InvalidInputError(f"omega {omega!r} is not a grid node")
        dT, _dSc = self._linearization(x)
        return [dT[idx, p] for p in range(dT.shape[1])]

    def response_curves(self, x):
        """(omega, sigma_max(T), barrier curve) for reporting."""
        rec = self._evaluate(x)
        if not isinstance(rec, _EvalRecord):
            raise IllPosedLoopError("loop ill-posed on the grid", omega=rec[1])
        return self.plant.omega.copy(), rec.curve_T.copy(), rec.curve_S.copy()


def _local_maxima(curve):
    """Indices of grid-local maxima (plateau ends included, endpoints too)."""
    n = len(curve)
    if n == 1:
        return [0]
    out = []
    for i in range(n):
        left = curve[i - 1] if i > 0 else -np.inf
        right = curve[i + 1] if i < n - 1 else -np.inf
        if curve[i] >= left and curve[i] >= right:
            out.append(i)
    return out


def nyquist_winding(plant: FrdPlant, K):
    """Heuristic winding of det(I - P22 K) along the grid, in turns.

    Advisory only: the grid covers a finite positive frequency range, so
    this is a coarse encirclement count, not a rigorous stability test.
    """
    K = np.asarray(K, dtype=complex)
    ny = plant.ny
    F = np.eye(ny)[None, :, :] - plant.p22 @ K
    dets = np.linalg.det(F)
    phases = np.unwrap(np.angle(dets))
    return float((phases[-1] - phases[0]) / (2.0 * np.pi))
