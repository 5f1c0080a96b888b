"""Analytic plant models and mixed-sensitivity assembly.

The reaction-convection-diffusion (RCD) reactor is a plug-flow tube with
axial dispersion D, steady flow velocity U_ss, inlet concentration C_in,
first-order reaction rate k, and length L.  Its linearized boundary-control
transfer function is evaluated in closed form; the two profile quadratures
run over the dimensionless position variable on [0, 1].

The outlet formula is the variation-of-parameters solution regrouped so
every exponential has a non-positive real part, which keeps it finite at
arbitrarily high frequencies.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AssemblyError, InvalidInputError, PoleError, PrecisionError
from .frd import FrdPlant

__all__ = [
    "RcdConstants",
    "RCD_PAPER",
    "rcd_steady_state",
    "rcd_transfer",
    "CavityParams",
    "cavity_transfer",
    "RationalFilter",
    "RCD_WE",
    "RCD_WN",
    "RCD_WU",
    "assemble_mixed_sensitivity",
    "adaptive_simpson",
]

_QUAD_TOL = 1e-10
_QUAD_CAP = 10**6


@dataclass(frozen=True)
class RcdConstants:
    """Plug-flow reactor constants (length in m, time in min)."""

    D: float = 1.05
    U_ss: float = 1.24
    C_in: float = 0.5
    k: float = 0.25
    L: float = 6.36

    def __post_init__(self):
        if self.D <= 0 or self.L <= 0 or self.C_in <= 0:
            raise InvalidInputError("D, L and C_in must be positive")
        if self.b * self.b + 4.0 * self.a * self.k < 0:
            raise InvalidInputError("b^2 + 4 a k must be nonnegative")

    @property
    def a(self):
        return self.D / self.L**2

    @property
    def b(self):
        return -self.U_ss / self.L

    @property
    def f(self):
        return math.sqrt(self.b * self.b + 4.0 * self.a * self.k)

    @property
    def _den(self):
        a, b, f = self.a, self.b, self.f
        return ((-b * f - 2 * a * self.k - b * b) * math.exp(-f / (2 * a))
                - (b * f - 2 * a * self.k - b * b) * math.exp(f / (2 * a)))


RCD_PAPER = RcdConstants()


def rcd_steady_state(consts: RcdConstants, z):
    """Steady concentration profile and its spatial derivative at z in [0, L]."""
    z = np.asarray(z, dtype=float)
    a, b, f, L = consts.a, consts.b, consts.f, consts.L
    zeta = z / L
    e1 = (f * (1.0 - zeta) - b * zeta) / (2.0 * a)
    e2 = (f * (zeta - 1.0) - b * zeta) / (2.0 * a)
    den = consts._den
    c = consts.C_in * b * ((b - f) * np.exp(e1) - (b + f) * np.exp(e2)) / den
    cp = (2.0 * consts.k * b * consts.C_in / L) * (np.exp(e1) - np.exp(e2)) / den
    return c, cp


def adaptive_simpson(fn, a, b, tol=_QUAD_TOL, cap=_QUAD_CAP):
    """Adaptive Simpson quadrature for a complex-valued integrand."""
    fa, fm, fb = fn(a), fn(0.5 * (a + b)), fn(b)
    s0 = (fa + 4.0 * fm + fb) * ((b - a) / 6.0)
    stack = [(a, b, fa, fm, fb, s0, tol)]
    width = max(1.0, abs(b - a))
    total = 0.0 + 0.0j
    n_eval = 3
    while stack:
        a0, b0, fa, fm, fb, s0, t0 = stack.pop()
        mid = 0.5 * (a0 + b0)
        flm = fn(0.5 * (a0 + mid))
        frm = fn(0.5 * (mid + b0))
        n_eval += 2
        sl = (fa + 4.0 * flm + fm) * ((mid - a0) / 6.0)
        sr = (fm + 4.0 * frm + fb) * ((b0 - mid) / 6.0)
        err = sl + sr - s0
        if abs(err) <= 15.0 * t0 or abs(b0 - a0) <= 1e-14 * width:
            total += sl + sr + err / 15.0
        else:
            if n_eval > cap:
                raise PrecisionError("adaptive quadrature exceeded its interval cap")
            stack.append((a0, mid, fa, flm, fm, sl, 0.5 * t0))
            stack.append((mid, b0, fm, frm, fb, sr, 0.5 * t0))
    return total


def _t1(consts, s):
    return np.sqrt(consts.b * consts.b + 4.0 * consts.a * (s + consts.k) + 0j)


def rcd_transfer(consts: RcdConstants, s, z=None):
    """Flow-perturbation to concentration transfer at position z (default L).

    Vectorized over ``s`` when ``z`` is the outlet (the overflow-safe fast
    path); interior positions use the generic quadrature formula and are
    intended for moderate |s|.
    """
    svals = np.atleast_1d(np.asarray(s, dtype=complex))
    if z is None or float(z) == consts.L:
        out = _rcd_outlet(consts, svals)
    else:
        out = np.array([_rcd_interior(consts, sv, float(z)) for sv in svals])
    if np.isscalar(s) or np.asarray(s).ndim == 0:
        return complex(out[0])
    return out


def _rcd_outlet(consts, svals):
    a, b, L = consts.a, consts.b, consts.L
    T1 = _t1(consts, svals)
    cp_scale = 2.0 * consts.k * b * consts.C_in / (L * consts._den)
    J1, J2s, ok = kernels.rcd_outlet_integrals(
        np.ascontiguousarray(T1), a, b, consts.f, cp_scale, _QUAD_TOL, _QUAD_CAP
    )
    if not np.all(ok):
        raise PrecisionError("outlet-profile quadrature did not converge")
    css0, _ = rcd_steady_state(consts, 0.0)
    esc = np.exp(-(b + T1) / (2.0 * a))
    num = (2.0 * T1 * (css0 - consts.C_in) * esc
           + L * (T1 + b) * J1 * esc + L * (T1 - b) * J2s)
    den = L * (-0.5 * (T1 - b) ** 2 + 0.5 * (T1 + b) ** 2 * np.exp(-T1 / a))
    if np.any(np.abs(den) <= 1e-300):
        raise PoleError("transfer denominator vanished", s=svals[np.argmin(np.abs(den))])
    return num / den


def _rcd_interior(consts, s, z):
    """General-position transfer by variation of parameters (moderate |s|)."""
    if not (0.0 <= z <= consts.L):
        raise InvalidInputError("position must lie in [0, L]")
    a, b, L = consts.a, consts.b, consts.L
    T1 = complex(_t1(consts, s))
    zeta = z / L

    def cprime(tau):
        return rcd_steady_state(consts, tau * L)[1]

    def F1(tau):
        return cprime(tau) * np.exp((b - T1) * tau / (2.0 * a))

    def F2(tau):
        return cprime(tau) * np.exp((b + T1) * tau / (2.0 * a))

    I1 = adaptive_simpson(F1, 0.0, 1.0)
    I2 = adaptive_simpson(F2, 0.0, 1.0)
    I1z = adaptive_simpson(F1, 1.0, zeta) if zeta != 1.0 else 0.0
    I2z = adaptive_simpson(F2, 1.0, zeta) if zeta != 1.0 else 0.0

    css0, _ = rcd_steady_state(consts, 0.0)
    num_alpha = (css0 - consts.C_in) + (L / (2.0 * T1)) * ((T1 + b) * I1 + (T1 - b) * I2)
    den_alpha = (L / (2.0 * (T1 + b))) * ((T1 + b) ** 2 - (T1 - b) ** 2 * np.exp(T1 / a))
    if abs(den_alpha) <= 1e-300:
        raise PoleError("transfer denominator vanished", s=s)
    alpha = num_alpha / den_alpha
    beta = alpha * (T1 - b) / (T1 + b) * np.exp(T1 / a)
    y1 = np.exp((T1 - b) * zeta / (2.0 * a))
    y2 = np.exp(-(T1 + b) * zeta / (2.0 * a))
    c_hom = alpha * y1 + beta * y2
    c_part = (y1 * I1z - y2 * I2z) / T1
    return complex(c_hom + c_part)


@dataclass(frozen=True)
class CavityParams:
    """Quasi-polynomial cavity model: G = exp(-tau1 s) / (p2 + q2 exp(-tau2 s) + c exp(-tau3 s))."""

    p2: tuple
    q2: tuple
    c: float
    tau1: float
    tau2: float
    tau3: float

    def __post_init__(self):
        if len(self.p2) != 3 or len(self.q2) != 3:
            raise InvalidInputError("p2 and q2 must be quadratic coefficient triples")
        if self.p2[0] == 0:
            raise InvalidInputError("p2 leading coefficient must be nonzero")
        if min(self.tau1, self.tau2, self.tau3) <= 0:
            raise InvalidInputError("delays must be positive")


def cavity_transfer(params: CavityParams, s):
    svals = np.atleast_1d(np.asarray(s, dtype=complex))
    den = (np.polyval(params.p2, svals)
           + np.polyval(params.q2, svals) * np.exp(-params.tau2 * svals)
           + params.c * np.exp(-params.tau3 * svals))
    scale = max(np.max(np.abs(np.polyval(params.p2, svals))), 1.0)
    if np.any(np.abs(den) <= 1e-14 * scale):
        raise PoleError("cavity denominator vanished",
                        s=svals[np.argmin(np.abs(den))])
    out = np.exp(-params.tau1 * svals) / den
    if np.isscalar(s) or np.asarray(s).ndim == 0:
        return complex(out[0])
    return out


@dataclass(frozen=True)
class RationalFilter:
    """Real-rational weight; coefficients highest power first."""

    num: tuple
    den: tuple

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        den = np.polyval(self.den, s)
        if np.any(np.abs(den) == 0.0):
            raise PoleError("filter pole on the evaluation set")
        return np.polyval(self.num, s) / den


RCD_WE = RationalFilter((0.00001, 5.0), (1.0, 0.25))
RCD_WN = RationalFilter((0.00125, 0.00035, 0.00005), (0.000025, 0.007, 1.0))
RCD_WU = RationalFilter((0.1,), (1.0,))


def assemble_mixed_sensitivity(omega, g_samples, we=RCD_WE, wn=RCD_WN, wu=RCD_WU,
                               barrier_c=0.2):
    """SISO tracking scheme as a generalized plant.

    Signals: tracking error e = r - y - Wn n, measured by the controller;
    regulated outputs z = (We e, Wu u) plus, when ``barrier_c`` > 0, the raw
    error scaled by the barrier weight.  Closing the loop with K reproduces
    the sensitivity S = (1 + G K)^-1 as the r -> e transfer.
    """
    omega = np.asarray(omega, dtype=float)
    g = np.asarray(g_samples, dtype=complex)
    if g.shape != omega.shape:
        raise InvalidInputError("G samples must match the frequency grid")
    s = 1j * omega
    try:
        we_v = we(s)
        wn_v = wn(s)
        wu_v = wu(s)
    except PoleError as err:
        raise AssemblyError(f"filter pole on the grid: {err}")
    if not (np.all(np.isfinite(we_v)) and np.all(np.isfinite(wn_v)) and np.all(np.isfinite(wu_v))):
        raise AssemblyError("filter evaluation produced non-finite values")
    n = omega.shape[0]
    rows = 3 if barrier_c > 0 else 2
    p11 = np.zeros((n, rows, 2), dtype=complex)
    p12 = np.zeros((n, rows, 1), dtype=complex)
    p11[:, 0, 0] = we_v
    p11[:, 0, 1] = -we_v * wn_v
    p12[:, 0, 0] = -we_v * g
    p12[:, 1, 0] = wu_v
    if barrier_c > 0:
        p11[:, 2, 0] = barrier_c
        p11[:, 2, 1] = -barrier_c * wn_v
        p12[:, 2, 0] = -barrier_c * g
    p21 = np.zeros((n, 1, 2), dtype=complex)
    p21[:, 0, 0] = 1.0
    p21[:, 0, 1] = -wn_v
    p22 = -g.reshape(n, 1, 1)
    return FrdPlant(omega, p11, p12, p21, p22)
