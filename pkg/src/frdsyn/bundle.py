"""Non-smooth trust-region bundle solver.

Outer iterations move a serious iterate downhill; each inner loop enriches a
polyhedral working model with cutting planes until a trial step passes the
acceptance ratio test.  The working model is kept small by aggregation: the
tangent program's multipliers compress all active planes into one aggregate
plane, after which old planes may be evicted.  Trust-region control uses two
ratios: the acceptance ratio decides serious versus null steps, a secondary
ratio decides whether the radius halves after a null step, and a memory
radius carries the step-size scale from one outer iteration to the next.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FrdsynError, HiddenConstraintViolation, InvalidInputError
from .tangent import TangentProblem, aggregate_plane, solve_tangent

__all__ = [
    "SolverParams",
    "Plane",
    "WorkingModel",
    "Oracle",
    "ConvexOracle",
    "SolveResult",
    "acceptance_ratio",
    "secondary_ratio",
    "memory_radius_update",
    "taper_model",
    "trial_step",
    "run",
    "trace_to_csv",
]

TRACE_COLUMNS = ("outer", "inner", "f", "rho", "rho_tilde", "R", "gstar_norm", "step")


class InternalInvariantError(FrdsynError):
    """A ratio denominator that the step contract guarantees positive was not."""


@dataclass(frozen=True)
class SolverParams:
    """Tuning constants.  Defaults sit strictly inside the admissible ranges."""

    gamma: float = 0.1            # serious-step acceptance threshold
    gamma_tilde: float = 0.75     # secondary ratio threshold for halving R
    big_gamma: float = 0.6        # memory-radius doubling threshold
    theta: float = 0.1            # minimum model-decrease fraction for trial steps
    step_ball: float = 2.0        # trial steps allowed within this multiple of |y - x|
    q_cap: float = 1e6            # operator-norm cap on the curvature matrix
    q_eps: float = 1e-6           # default curvature: q_eps * I (keeps Q positive definite)
    eps_stop: float = 1e-6
    max_outer: int = 300
    max_inner: int = 50
    max_planes: int = 10          # working-model size cap N
    r_memory_init: float = 1.0
    curvature: str = "fixed"      # "fixed" | "bfgs"
    recycle: bool = True
    anticipate: bool = True
    debug_checks: bool = False    # sample-test minorization of every plane

    def __post_init__(self):
        if not (0.0 < self.gamma < self.gamma_tilde < 1.0):
            raise InvalidInputError("need 0 < gamma < gamma_tilde < 1")
        if not (self.gamma < self.big_gamma <= 1.0):
            raise InvalidInputError("need gamma < big_gamma <= 1")
        if not (0.0 < self.theta < 1.0):
            raise InvalidInputError("need 0 < theta < 1")
        if self.step_ball < 1.0:
            raise InvalidInputError("step_ball must be >= 1")
        if self.q_cap <= 0 or self.q_eps <= 0:
            raise InvalidInputError("curvature bounds must be positive")
        if self.max_planes < 3:
            raise InvalidInputError("max_planes must be at least 3")
        if self.eps_stop <= 0 or self.r_memory_init <= 0:
            raise InvalidInputError("eps_stop and r_memory_init must be positive")
        if self.curvature not in ("fixed", "bfgs"):
            raise InvalidInputError("curvature must be 'fixed' or 'bfgs'")


@dataclass(frozen=True, eq=False)
class Plane:
    """Affine minorant ``a + g @ (y - x)`` of the model around center ``x``."""

    a: float
    g: np.ndarray
    tag: str                      # exactness | cut | aggregate | anticipated | recycled
    base: np.ndarray = None       # trial point the plane was generated at, if any
    seq: int = 0

    def value_at(self, y, x):
        return self.a + float(self.g @ (y - x))


class WorkingModel:
    """Cutting-plane collection plus the quadratic term."""

    def __init__(self, x, Q, planes=()):
        self.x = np.asarray(x, dtype=float)
        self.Q = np.asarray(Q, dtype=float)
        self.planes = []
        self._seq = 0
        for p in planes:
            self.insert(p)

    def insert(self, plane: Plane):
        for existing in self.planes:
            if existing.a == plane.a and np.array_equal(existing.g, plane.g):
                return existing
        stamped = replace(plane, seq=self._seq)
        self._seq += 1
        self.planes.append(stamped)
        return stamped

    def offsets(self):
        return np.array([p.a for p in self.planes])

    def subgradients(self):
        return np.array([p.g for p in self.planes])

    def phi(self, y):
        d = np.asarray(y, dtype=float) - self.x
        return float(np.max(self.offsets() + self.subgradients() @ d))

    def Phi(self, y):
        d = np.asarray(y, dtype=float) - self.x
        return self.phi(y) + 0.5 * float(d @ self.Q @ d)

    def tangent_problem(self, radius):
        return TangentProblem(self.x, self.offsets(), self.subgradients(), self.Q, radius)


class Oracle:
    """Interface the solver drives.

    value(x)                 -> f(x); may raise HiddenConstraintViolation
    model_value(y, x)        -> phi(y, x), the convex first-order model at x
    plane_at(z, x)           -> cutting Plane of the model at trial z
    exactness_plane(x)       -> Plane with value f(x) at x
    anticipated_planes(x)    -> extra minorant Planes worth seeding the model with
    """

    def value(self, x):
        raise NotImplementedError

    def model_value(self, y, x):
        raise NotImplementedError

    def plane_at(self, z, x, tag="cut"):
        raise NotImplementedError

    def exactness_plane(self, x):
        return self.plane_at(x, x, tag="exactness")

    def anticipated_planes(self, x):
        return []


class ConvexOracle(Oracle):
    """Adapter for a convex objective given by value and subgradient callables.

    For convex f the exact model phi(y, x) = f(y) satisfies every model
    axiom, so cutting planes are ordinary subgradient planes.  Values are
    cached by argument bytes; ``n_evals`` counts distinct evaluations.
    """

    def __init__(self, fn, subgrad):
        self.fn = fn
        self.subgrad = subgrad
        self.n_evals = 0
        self._cache = {}

    def _eval(self, x):
        key = np.asarray(x, dtype=float).tobytes()
        if key not in self._cache:
            self._cache[key] = float(self.fn(np.asarray(x, dtype=float)))
            self.n_evals += 1
        return self._cache[key]

    def value(self, x):
        return self._eval(x)

    def model_value(self, y, x):
        return self._eval(y)

    def plane_at(self, z, x, tag="cut"):
        z = np.asarray(z, dtype=float)
        x = np.asarray(x, dtype=float)
        g = np.asarray(self.subgrad(z), dtype=float)
        a = self._eval(z) - float(g @ (z - x))
        return Plane(a=a, g=g, tag=tag, base=z.copy())


@dataclass
class TraceRecord:
    outer: int
    inner: int
    f: float
    rho: float
    rho_tilde: float
    R: float
    gstar_norm: float
    step: str
    f_trial: float = math.nan
    phi_y: float = math.nan     # Phi_k(y^k, x), the tangent-program value
    trial_kind: str = ""


@dataclass
class SolveResult:
    x: np.ndarray
    f: float
    status: str
    trace: list
    value_calls: int
    outer_count: int

    def inner_model_sequences(self):
        """Phi_k(y^k, x) sequences grouped per inner loop, for monotonicity checks."""
        groups = []
        current = []
        last_outer = None
        for rec in self.trace:
            if rec.outer != last_outer:
                if current:
                    groups.append(current)
                current = []
                last_outer = rec.outer
            if not math.isnan(rec.phi_y):
                current.append((rec.phi_y, rec.f))
        if current:
            groups.append(current)
        return groups


def acceptance_ratio(fx, fz, model_value_at_z):
    """rho = (f(x) - f(z)) / (f(x) - Phi_k(z, x)); serious iff rho >= gamma."""
    denom = fx - model_value_at_z
    if denom <= 0.0:
        raise InternalInvariantError(
            f"acceptance ratio denominator {denom} is not positive"
        )
    return (fx - fz) / denom


def secondary_ratio(fx, phi_next_at_z, Phi_at_z):
    """rho~ = (f(x) - phi_{k+1}(z, x)) / (f(x) - Phi_k(z, x))."""
    denom = fx - Phi_at_z
    if denom <= 0.0:
        raise InternalInvariantError(
            f"secondary ratio denominator {denom} is not positive"
        )
    return (fx - phi_next_at_z) / denom


def memory_radius_update(rho, radius, big_gamma):
    """Memory radius rule: keep R_k on modest steps, double it when rho >= Gamma."""
    return 2.0 * radius if rho >= big_gamma else radius


def taper_model(model: WorkingModel, max_planes):
    """Trim the model to ``max_planes`` planes.

    The exactness plane, the latest cut, and the latest aggregate always
    survive; remaining slots go to the most recently added planes, with
    anticipated planes evicted first.
    """
    planes = model.planes
    if len(planes) <= max_planes:
        return model
    protected = []
    for tag in ("exactness", "cut", "aggregate"):
        tagged = [p for p in planes if p.tag == tag]
        if tagged:
            protected.append(max(tagged, key=lambda p: p.seq))
    protected_ids = {id(p) for p in protected}
    rest = [p for p in planes if id(p) not in protected_ids]
    rest.sort(key=lambda p: (1 if p.tag == "anticipated" else 0, -p.seq))
    keep = protected + rest[: max(0, max_planes - len(protected))]
    keep.sort(key=lambda p: p.seq)
    model.planes = keep
    return model


def trial_step(y, x, model: WorkingModel, fx, params: SolverParams, proposer=None):
    """Pick the trial point: the proposer's candidate if admissible, else y.

    A candidate is admissible when it stays within ``step_ball`` times the
    tangent step in the max norm and retains at least the fraction ``theta``
    of the model decrease.  Returns ``(z, kind)``.
    """
    if proposer is None:
        return y, "tangent"
    z = proposer(x, y, model)
    if z is None:
        return y, "tangent"
    z = np.asarray(z, dtype=float)
    ynorm = float(np.max(np.abs(y - x)))
    znorm = float(np.max(np.abs(z - x)))
    slack = 1e-12 * max(1.0, ynorm)
    if znorm > params.step_ball * ynorm + slack:
        return y, "tangent"
    dec_y = fx - model.Phi(y)
    dec_z = fx - model.Phi(z)
    if dec_z < params.theta * dec_y - 1e-12 * max(1.0, abs(fx)):
        return y, "tangent"
    return z, "proposed"


def _minorization_check(oracle, model, x, rng):
    scale = 1e-8 * max(1.0, abs(oracle.model_value(x, x)))
    for _ in range(100):
        y = x + rng.normal(scale=1.0, size=x.shape)
        phi = oracle.model_value(y, x)
        for p in model.planes:
            if p.value_at(y, x) > phi + scale:
                raise InternalInvariantError("working-model plane fails minorization")


def _bfgs_update(Q, s, dg, params):
    sBs = float(s @ Q @ s)
    ys = float(dg @ s)
    if sBs <= 0 or not np.all(np.isfinite(dg)):
        return Q
    if ys < 0.2 * sBs:  # Powell damping keeps the update well defined
        frac = 0.8 * sBs / (sBs - ys)
        dg = frac * dg + (1.0 - frac) * (Q @ s)
        ys = float(dg @ s)
    if ys <= 1e-16 * max(1.0, sBs):
        return Q
    Bs = Q @ s
    Qn = Q - np.outer(Bs, Bs) / sBs + np.outer(dg, dg) / ys
    Qn = 0.5 * (Qn + Qn.T)
    w, V = np.linalg.eigh(Qn)
    w = np.clip(w, 0.0, None)
    Qn = (V * w) @ V.T + params.q_eps * np.eye(len(s))
    top = float(np.max(np.abs(np.linalg.eigvalsh(Qn))))
    if top > params.q_cap:
        Qn *= params.q_cap / top
    return 0.5 * (Qn + Qn.T)


def run(oracle: Oracle, x0, params: SolverParams = None, proposer=None, rng_seed=0):
    """Minimize the oracle's objective starting from ``x0``.

    Returns the last serious iterate together with the full iteration trace.
    Hidden-constraint violations at trial points become null steps with a
    model-based cutting plane; a violation at ``x0`` itself is an error.
    """
    params = params or SolverParams()
    x = np.asarray(x0, dtype=float).copy()
    n = x.shape[0]
    rng = np.random.default_rng(rng_seed)

    calls = [0]

    def value_of(point):
        calls[0] += 1
        try:
            return float(oracle.value(point)), False
        except HiddenConstraintViolation:
            return math.nan, True

    fx, hidden = value_of(x)
    if hidden:
        raise HiddenConstraintViolation(
            "initial point violates the hidden stability constraint"
        )

    Q = params.q_eps * np.eye(n)
    r_memory = params.r_memory_init
    recycled_bases = []
    trace = []
    status = "outer-cap"
    exact_g_prev = None
    outer_done = 0

    for outer in range(1, params.max_outer + 1):
        exact = oracle.exactness_plane(x)
        model = WorkingModel(x, Q, [exact])
        if params.recycle:
            for base in recycled_bases:
                model.insert(oracle.plane_at(base, x, tag="recycled"))
        if params.anticipate:
            for p in oracle.anticipated_planes(x):
                model.insert(p)
        taper_model(model, params.max_planes)
        if params.debug_checks:
            _minorization_check(oracle, model, x, rng)

        R = r_memory
        tol = params.eps_stop * (1.0 + abs(fx))
        serious = False

        for inner in range(1, params.max_inner + 1):
            prob = model.tangent_problem(R)
            sol = solve_tangent(prob)
            phi_y = sol.objective
            decrease = fx - phi_y
            gnorm = float(np.linalg.norm(sol.g_star))

            if inner == 1 and gnorm <= tol and decrease <= tol:
                trace.append(TraceRecord(outer, inner, fx, math.nan, math.nan, R,
                                         gnorm, "stop", phi_y=phi_y))
                status = "converged"
                outer_done = outer
                break
            if decrease <= 1e-18 * (1.0 + abs(fx)):
                trace.append(TraceRecord(outer, inner, fx, math.nan, math.nan, R,
                                         gnorm, "stop-degenerate", phi_y=phi_y))
                status = "converged"
                outer_done = outer
                break

            y = sol.y
            z, z_kind = trial_step(y, x, model, fx, params, proposer)
            z_is_y = z_kind != "proposed"
            Phi_z = phi_y if z_is_y else model.Phi(z)
            f_z, hidden = value_of(z)
            rho = -math.inf if hidden else acceptance_ratio(fx, f_z, Phi_z)

            if rho >= params.gamma:
                r_memory = memory_radius_update(rho, R, params.big_gamma)
                trace.append(TraceRecord(outer, inner, fx, rho, math.nan, R, gnorm,
                                         "serious", f_trial=f_z, phi_y=phi_y,
                                         trial_kind=z_kind))
                recycled_bases = [p.base for p in model.planes
                                  if p.tag in ("cut", "exactness") and p.base is not None]
                recycled_bases = recycled_bases[-(params.max_planes - 2):]
                if params.curvature == "bfgs":
                    g_new = oracle.plane_at(z, x, tag="cut").g
                    if exact_g_prev is not None:
                        Q = _bfgs_update(Q, z - x, g_new - exact_g_prev, params)
                    exact_g_prev = g_new
                x = np.asarray(z, dtype=float).copy()
                fx = f_z
                serious = True
                outer_done = outer
                break

            # null step: cut at the trial point, then radius control
            cut = oracle.plane_at(z, x, tag="cut")
            phi_next_z = cut.value_at(z, x)
            rho_tilde = secondary_ratio(fx, phi_next_z, Phi_z)
            halve = rho_tilde >= params.gamma_tilde
            step_name = "null" if not hidden else "null-hidden"

            if not halve and not z_is_y:
                # difficult case: the radius would freeze after a foreign trial
                # step, so re-test the tangent point before aggregating
                f_y, hidden_y = value_of(y)
                rho_y = -math.inf if hidden_y else acceptance_ratio(fx, f_y, phi_y)
                if rho_y >= params.gamma:
                    r_memory = memory_radius_update(rho_y, R, params.big_gamma)
                    trace.append(TraceRecord(outer, inner, fx, rho_y, rho_tilde, R,
                                             gnorm, "serious-fallback", f_trial=f_y,
                                             phi_y=phi_y, trial_kind="tangent"))
                    recycled_bases = [p.base for p in model.planes
                                      if p.tag in ("cut", "exactness") and p.base is not None]
                    recycled_bases = recycled_bases[-(params.max_planes - 2):]
                    if params.curvature == "bfgs":
                        g_new = oracle.plane_at(y, x, tag="cut").g
                        if exact_g_prev is not None:
                            Q = _bfgs_update(Q, y - x, g_new - exact_g_prev, params)
                        exact_g_prev = g_new
                    x = y.copy()
                    fx = f_y
                    serious = True
                    outer_done = outer
                    break
                cut = oracle.plane_at(y, x, tag="cut")
                rho_tilde = secondary_ratio(fx, cut.value_at(y, x), phi_y)
                halve = rho_tilde >= params.gamma_tilde
                step_name = "null-fallback"

            agg_a, agg_g = aggregate_plane(prob, sol)
            model.insert(cut)
            model.insert(Plane(a=agg_a, g=agg_g, tag="aggregate"))
            taper_model(model, params.max_planes)
            if params.debug_checks:
                _minorization_check(oracle, model, x, rng)
            trace.append(TraceRecord(outer, inner, fx, rho, rho_tilde, R, gnorm,
                                     step_name, f_trial=f_z, phi_y=phi_y,
                                     trial_kind=z_kind))
            if halve:
                R = 0.5 * R
        else:
            status = "inner-cap"
            outer_done = outer
            break

        if status == "converged":
            break

    return SolveResult(x=x, f=fx, status=status, trace=trace,
                       value_calls=calls[0], outer_count=outer_done)


def _fmt(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def trace_to_csv(trace, path=None):
    """Serialize a trace. Columns: outer, inner, f, rho, rho_tilde, R, |g*|, step."""
    lines = [",".join(TRACE_COLUMNS)]
    for rec in trace:
        lines.append(",".join(_fmt(getattr(rec, c)) for c in TRACE_COLUMNS))
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
