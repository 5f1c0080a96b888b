"""Trust-region tangent program.

Solves, for a polyhedral working model given by planes ``(a_i, g_i)`` around
a center ``x``,

    minimize    t + 1/2 (y - x)' Q (y - x)
    subject to  a_i + g_i' (y - x) <= t        for every plane i
                -R <= (y - x)_j <= R           for every coordinate j

with a primal active-set method in the variable ``w = (d, t)``, ``d = y - x``.
The multipliers are part of the contract: they define the aggregate
subgradient and the aggregate plane used to compress the working model.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalFailureError

__all__ = ["TangentProblem", "TangentSolution", "solve_tangent", "aggregate_plane"]

_REG = 1e-12
_MAX_PIVOTS = 10_000


@dataclass(frozen=True)
class TangentProblem:
    x: np.ndarray
    offsets: np.ndarray       # (m,) plane offsets a_i, relative to the center
    subgradients: np.ndarray  # (m, n) plane subgradients g_i
    Q: np.ndarray             # (n, n) symmetric PSD curvature
    radius: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        a = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        G = np.atleast_2d(np.asarray(self.subgradients, dtype=float))
        Q = np.asarray(self.Q, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "offsets", a)
        object.__setattr__(self, "subgradients", G)
        object.__setattr__(self, "Q", Q)
        n = x.shape[0]
        if a.size == 0:
            raise InvalidInputError("tangent program needs at least one plane")
        if G.shape != (a.shape[0], n):
            raise InvalidInputError("subgradient array shape mismatch")
        if Q.shape != (n, n):
            raise InvalidInputError("curvature matrix shape mismatch")
        if not (self.radius > 0.0):
            raise InvalidInputError("trust radius must be positive")
        for arr, name in ((x, "x"), (a, "offsets"), (G, "subgradients"), (Q, "Q")):
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} has non-finite entries")
        qs = max(1.0, float(np.abs(Q).max()) if Q.size else 0.0)
        if np.abs(Q - Q.T).max(initial=0.0) > 1e-12 * qs:
            raise InvalidInputError("curvature matrix is not symmetric")


@dataclass(frozen=True)
class TangentSolution:
    y: np.ndarray
    t: float
    multipliers: np.ndarray       # one per plane, >= 0, summing to 1
    box_multipliers: np.ndarray   # signed, one per coordinate
    g_star: np.ndarray            # aggregate subgradient
    objective: float              # t + 1/2 d' Q d  with the problem's Q

    @property
    def step(self):
        return self.y


def _kkt_solve(H, grad, A):
    """Equality-constrained QP step: returns (p, lam)."""
    nv = H.shape[0]
    na = A.shape[0]
    K = np.zeros((nv + na, nv + na))
    K[:nv, :nv] = H
    K[:nv, nv:] = A.T
    K[nv:, :nv] = A
    rhs = np.concatenate([-grad, np.zeros(na)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    else:
        if not np.all(np.isfinite(sol)):
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:nv], sol[nv:]


def solve_tangent(prob: TangentProblem) -> TangentSolution:
    """Solve the tangent program and report exact multipliers.

    Raises ``NumericalFailureError`` with best-so-far diagnostics if the
    active-set loop exceeds its pivot budget.
    """
    a = prob.offsets
    G = prob.subgradients
    m, n = G.shape
    R = float(prob.radius)
    Qreg = prob.Q + _REG * max(1.0, float(np.abs(prob.Q).max(initial=0.0))) * np.eye(n)

    ncon = m + 2 * n

    def normal(c):
        row = np.zeros(n + 1)
        if c < m:
            row[:n] = G[c]
            row[n] = -1.0
        elif c < m + n:
            row[c - m] = 1.0
        else:
            row[c - m - n] = -1.0
        return row

    def residual(c, w):
        d = w[:n]
        if c < m:
            return a[c] + G[c] @ d - w[n]
        if c < m + n:
            return d[c - m] - R
        return -d[c - m - n] - R

    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = Qreg

    w = np.zeros(n + 1)
    w[n] = float(np.max(a))
    working = [int(np.argmax(a))]

    scale = max(1.0, float(np.max(np.abs(a))), float(np.abs(G).max()), R)
    rate_tol = 1e-13 * scale
    mult_tol = 1e-10

    def drop_position(lam):
        """Lowest-index constraint with a negative multiplier (Bland-style)."""
        for pos, _c in sorted(enumerate(working), key=lambda t: t[1]):
            if lam[pos] < -mult_tol:
                return pos
        return None

    visited = set()
    bland_mode = False

    for _pivot in range(_MAX_PIVOTS):
        grad = np.concatenate([Qreg @ w[:n], [1.0]])
        A_w = np.array([normal(c) for c in working])
        p, lam = _kkt_solve(H, grad, A_w)
        lam = np.asarray(lam)

        step_tol = 1e-9 * max(1.0, float(np.max(np.abs(w))), R)
        full_step = np.max(np.abs(p)) <= step_tol
        alpha = 1.0
        blocker = None
        if not full_step:
            in_working = set(working)
            for c in range(ncon):
                if c in in_working:
                    continue
                rate = normal(c) @ p
                if rate <= rate_tol:
                    continue
                cand = -residual(c, w) / rate
                if cand < alpha - 1e-14:
                    alpha = max(cand, 0.0)
                    blocker = c
            w = w + alpha * p
            full_step = blocker is None

        if full_step:
            # sitting on the EQP optimum for this working set: terminate or
            # drop the lowest-index constraint with a negative multiplier
            drop = drop_position(lam)
            if drop is None:
                return _assemble(prob, Qreg, w, working, lam)
            del working[drop]
            continue

        if alpha > 1e-14:
            visited.clear()
        else:
            # zero-length step at a degenerate vertex: if this working set has
            # been seen before we are cycling, switch to Bland's rule
            state = frozenset(working) | {-1 - blocker}
            if state in visited:
                bland_mode = True
            visited.add(state)

        # keep the working set linearly independent: a dependent blocker
        # replaces an active constraint chosen by the dual ratio test
        row = normal(blocker)
        mu = np.linalg.lstsq(A_w.T, row, rcond=None)[0]
        if np.linalg.norm(row - A_w.T @ mu) <= 1e-10 * max(1.0, np.linalg.norm(row)):
            lam_pos = np.maximum(lam, 0.0)
            n_planes_in_w = sum(1 for c in working if c < m)
            cands = [
                i for i in range(len(working))
                if mu[i] > 1e-10 and not (working[i] < m and n_planes_in_w <= 1)
            ]
            if cands:
                if bland_mode:
                    drop = min(cands, key=lambda i: working[i])
                else:
                    drop = min(cands, key=lambda i: (lam_pos[i] / mu[i], working[i]))
                del working[drop]
        working.append(blocker)

    raise NumericalFailureError(
        "active-set pivot budget exceeded in tangent program",
        {"w": w, "working_set": list(working), "pivots": _MAX_PIVOTS},
    )


def _assemble(prob, Qreg, w, working, lam):
    a = prob.offsets
    G = prob.subgradients
    m, n = G.shape
    d = w[:n].copy()
    mult = np.zeros(m)
    box = np.zeros(n)
    for pos, c in enumerate(working):
        val = float(lam[pos])
        if c < m:
            mult[c] += val
        elif c < m + n:
            box[c - m] += val
        else:
            box[c - m - n] -= val
    g_star = G.T @ mult
    t = float(np.max(a + G @ d))
    obj = t + 0.5 * float(d @ prob.Q @ d)
    return TangentSolution(
        y=prob.x + d,
        t=t,
        multipliers=mult,
        box_multipliers=box,
        g_star=g_star,
        objective=obj,
    )


def aggregate_plane(prob: TangentProblem, sol: TangentSolution):
    """Center-relative aggregate plane ``(a*, g*)``.

    The affine function ``a* + g*'(y - x)`` minorizes the polyhedral model
    everywhere and touches it at the tangent-program solution.
    """
    d = sol.y - prob.x
    g_star = sol.g_star
    a_star = sol.t - float(g_star @ d)
    return a_star, g_star
