"""Flat key = value run configuration.

Lines are ``key = value`` with ``#`` comments; vector values are space
separated.  Unknown keys are rejected so typos fail loudly.
"""

import os
from dataclasses import dataclass, fields

from .bundle import SolverParams
from .errors import ConfigError, ParseError

__all__ = ["RunConfig", "parse_config", "load_config", "DEFAULT_CONFIG_TEXT"]


@dataclass
class RunConfig:
    plant: str = "rcd"
    frd_unit: str = "radps"
    rcd_D: float = 1.05
    rcd_Uss: float = 1.24
    rcd_Cin: float = 0.5
    rcd_k: float = 0.25
    rcd_L: float = 6.36
    cavity_p2: tuple = None
    cavity_q2: tuple = None
    cavity_c: float = None
    cavity_tau: tuple = None
    we_num: tuple = (0.00001, 5.0)
    we_den: tuple = (1.0, 0.25)
    wn_num: tuple = (0.00125, 0.00035, 0.00005)
    wn_den: tuple = (0.000025, 0.007, 1.0)
    wu_num: tuple = (0.1,)
    wu_den: tuple = (1.0,)
    wmin: float = 1e-4
    wmax: float = 1e3
    fine_nodes: int = 2000
    barrier_c: float = 0.2
    controller: str = "pi"
    order: int = 3
    x0: tuple = (1.0, 1e-5)
    theta: float = 0.01
    verify_density: int = 10
    max_refine: int = 5
    node_budget: int = 100000
    out: str = "out"
    seed: int = 0
    threads: int = 0
    verify_frd: str = None
    solver_gamma: float = 0.1
    solver_gamma_tilde: float = 0.75
    solver_big_gamma: float = 0.6
    solver_theta: float = 0.1
    solver_step_ball: float = 2.0
    solver_q_cap: float = 1e6
    solver_q_eps: float = 1e-6
    solver_eps_stop: float = 1e-6
    solver_max_outer: int = 300
    solver_max_inner: int = 50
    solver_max_planes: int = 10
    solver_r_init: float = 1.0
    solver_curvature: str = "fixed"
    base_dir: str = "."

    def validate(self):
        if self.theta <= 0:
            raise ConfigError("theta must be positive")
        if not (0 < self.wmin < self.wmax):
            raise ConfigError("need 0 < wmin < wmax")
        if self.fine_nodes < 16:
            raise ConfigError("fine_nodes must be at least 16")
        if self.barrier_c < 0:
            raise ConfigError("barrier_c must be nonnegative")
        kind = self.plant.split(":", 1)[0]
        if kind not in ("rcd", "cavity", "frd"):
            raise ConfigError(f"unknown plant {self.plant!r}")
        if kind == "frd":
            path = self.frd_path()
            if not os.path.exists(path):
                raise ConfigError(f"FRD file not found: {path}")
        if kind == "cavity":
            missing = [k for k in ("cavity_p2", "cavity_q2", "cavity_c", "cavity_tau")
                       if getattr(self, k) is None]
            if missing:
                raise ConfigError(
                    "cavity plant needs explicit parameters: " + ", ".join(missing)
                )
        if self.verify_frd is not None:
            path = os.path.join(self.base_dir, self.verify_frd)
            if not os.path.exists(path):
                raise ConfigError(f"verify_frd file not found: {path}")
        if self.controller not in ("pi", "static", "tridiag"):
            raise ConfigError(f"unknown controller {self.controller!r}")
        return self

    def frd_path(self):
        _, _, rel = self.plant.partition(":")
        if not rel:
            raise ConfigError("frd plant needs a path: plant = frd:file.csv")
        return os.path.join(self.base_dir, rel)

    def solver_params(self):
        return SolverParams(
            gamma=self.solver_gamma,
            gamma_tilde=self.solver_gamma_tilde,
            big_gamma=self.solver_big_gamma,
            theta=self.solver_theta,
            step_ball=self.solver_step_ball,
            q_cap=self.solver_q_cap,
            q_eps=self.solver_q_eps,
            eps_stop=self.solver_eps_stop,
            max_outer=self.solver_max_outer,
            max_inner=self.solver_max_inner,
            max_planes=self.solver_max_planes,
            r_memory_init=self.solver_r_init,
            curvature=self.solver_curvature,
        )


_TUPLE_KEYS = {
    "cavity_p2", "cavity_q2", "cavity_tau", "we_num", "we_den", "wn_num",
    "wn_den", "wu_num", "wu_den", "x0",
}
_INT_KEYS = {
    "fine_nodes", "order", "verify_density", "max_refine", "node_budget",
    "seed", "threads", "solver_max_outer", "solver_max_inner",
    "solver_max_planes",
}
_STR_KEYS = {"plant", "frd_unit", "controller", "out", "verify_frd",
             "solver_curvature"}


def _convert(key, raw, path=None, line=None):
    try:
        if key in _TUPLE_KEYS:
            return tuple(float(v) for v in raw.split())
        if key in _INT_KEYS:
            return int(raw)
        if key in _STR_KEYS:
            return raw
        return float(raw)
    except ValueError as bad:
        raise ParseError(f"bad value for {key}: {bad}", path=path, line=line)


def parse_config(text, base_dir=".", path=None):
    cfg = RunConfig(base_dir=base_dir)
    known = {f.name for f in fields(RunConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", path=path, line=lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in known or key == "base_dir":
            raise ParseError(f"unknown config key {key!r}", path=path, line=lineno)
        setattr(cfg, key, _convert(key, val, path=path, line=lineno))
    return cfg.validate()


def load_config(path):
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)),
                        path=str(path))


DEFAULT_CONFIG_TEXT = """\
# frdsyn run configuration (key = value, '#' starts a comment)
plant = rcd
controller = pi
x0 = 1.0 1e-5
theta = 0.01
barrier_c = 0.2
wmin = 1e-4
wmax = 1e3
fine_nodes = 2000
"""
