"""Fixed-structure controller parametrizations.

A structure maps a real parameter vector to controller transfer samples
``K(x, j omega)`` of size (nu, ny), with an analytic parameter Jacobian.
Supported kinds: static output gain, SISO PI, and state-space controllers
with a tridiagonal system matrix.

Tridiagonal packing order: sub-, main-, super-diagonal of A, then B, C, D
row-major.  The PI vector is ``(kp, ki)`` for ``K(s) = kp + ki / s``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ParseError, SingularMatrixError

__all__ = [
    "ControllerStructure",
    "static_gain",
    "pi_controller",
    "tridiag_controller",
    "k_eval",
    "k_eval_batch",
    "k_jacobian",
    "k_jacobian_batch",
    "unpack_tridiag",
    "pack_tridiag",
    "transfer_string",
    "export_controller",
    "load_controller",
]

_KINDS = ("static", "pi", "tridiag")


@dataclass(frozen=True)
class ControllerStructure:
    kind: str
    ny: int = 1      # controller inputs (measurements)
    nu: int = 1      # controller outputs (actuators)
    order: int = 0   # state dimension (tridiag only)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidInputError(f"unknown controller kind {self.kind!r}")
        if self.ny < 1 or self.nu < 1:
            raise InvalidInputError("controller dimensions must be positive")
        if self.kind == "pi" and (self.ny != 1 or self.nu != 1):
            raise InvalidInputError("PI structure is SISO")
        if self.kind == "tridiag" and self.order < 1:
            raise InvalidInputError("tridiag structure needs order >= 1")

    @property
    def n_params(self):
        if self.kind == "static":
            return self.nu * self.ny
        if self.kind == "pi":
            return 2
        n = self.order
        return (3 * n - 2) + n * self.ny + self.nu * n + self.nu * self.ny


def static_gain(ny=1, nu=1):
    return ControllerStructure("static", ny=ny, nu=nu)


def pi_controller():
    return ControllerStructure("pi")


def tridiag_controller(order, ny=1, nu=1):
    return ControllerStructure("tridiag", ny=ny, nu=nu, order=order)


def _check_x(structure, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (structure.n_params,):
        raise InvalidInputError(
            f"expected {structure.n_params} parameters, got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("parameter vector has non-finite entries")
    return x


def unpack_tridiag(structure, x):
    """Parameter vector -> (A, B, C, D) with tridiagonal A."""
    n, ny, nu = structure.order, structure.ny, structure.nu
    x = _check_x(structure, x)
    pos = 0
    A = np.zeros((n, n))
    if n > 1:
        A[np.arange(1, n), np.arange(n - 1)] = x[pos:pos + n - 1]
        pos += n - 1
    A[np.arange(n), np.arange(n)] = x[pos:pos + n]
    pos += n
    if n > 1:
        A[np.arange(n - 1), np.arange(1, n)] = x[pos:pos + n - 1]
        pos += n - 1
    B = x[pos:pos + n * ny].reshape(n, ny)
    pos += n * ny
    C = x[pos:pos + nu * n].reshape(nu, n)
    pos += nu * n
    D = x[pos:pos + nu * ny].reshape(nu, ny)
    return A, B, C, D


def pack_tridiag(structure, A, B, C, D):
    n = structure.order
    parts = []
    if n > 1:
        parts.append(np.asarray(A)[np.arange(1, n), np.arange(n - 1)])
    parts.append(np.asarray(A)[np.arange(n), np.arange(n)])
    if n > 1:
        parts.append(np.asarray(A)[np.arange(n - 1), np.arange(1, n)])
    parts.append(np.asarray(B).ravel())
    parts.append(np.asarray(C).ravel())
    parts.append(np.asarray(D).ravel())
    return np.concatenate(parts)


def k_eval(structure, x, omega):
    """Controller transfer sample K(j omega), shape (nu, ny)."""
    return k_eval_batch(structure, x, np.array([float(omega)]))[0]


def k_eval_batch(structure, x, omegas):
    x = _check_x(structure, x)
    w = np.asarray(omegas, dtype=float)
    nw = w.shape[0]
    if structure.kind == "static":
        K = np.broadcast_to(
            x.reshape(structure.nu, structure.ny).astype(complex), (nw, structure.nu, structure.ny)
        ).copy()
        return K
    if structure.kind == "pi":
        if np.any(w == 0.0):
            raise SingularMatrixError("PI integrator pole", omega=0.0)
        k = x[0] + x[1] / (1j * w)
        return k.reshape(nw, 1, 1)
    A, B, C, D = unpack_tridiag(structure, x)
    n = structure.order
    sI = 1j * w[:, None, None] * np.eye(n)
    F = sI - A[None, :, :]
    dets = np.linalg.det(F)
    bad = np.abs(dets) <= 1e-300
    if np.any(bad):
        raise SingularMatrixError(
            "controller resonance: j*omega is an eigenvalue of A",
            omega=float(w[np.argmax(bad)]),
        )
    X = np.linalg.solve(F, np.broadcast_to(B.astype(complex), (nw, n, structure.ny)))
    return C[None, :, :] @ X + D[None, :, :]


def k_jacobian(structure, x, omega):
    """Parameter Jacobian of K at one frequency, shape (n_params, nu, ny)."""
    return k_jacobian_batch(structure, x, np.array([float(omega)]))[0]


def k_jacobian_batch(structure, x, omegas):
    x = _check_x(structure, x)
    w = np.asarray(omegas, dtype=float)
    nw = w.shape[0]
    ny, nu = structure.ny, structure.nu
    npar = structure.n_params
    if structure.kind == "static":
        J = np.zeros((nw, npar, nu, ny), dtype=complex)
        for p in range(nu):
            for q in range(ny):
                J[:, p * ny + q, p, q] = 1.0
        return J
    if structure.kind == "pi":
        if np.any(w == 0.0):
            raise SingularMatrixError("PI integrator pole", omega=0.0)
        J = np.zeros((nw, 2, 1, 1), dtype=complex)
        J[:, 0, 0, 0] = 1.0
        J[:, 1, 0, 0] = 1.0 / (1j * w)
        return J
    A, B, C, D = unpack_tridiag(structure, x)
    n = structure.order
    F = 1j * w[:, None, None] * np.eye(n) - A[None, :, :]
    X = np.linalg.solve(F, np.broadcast_to(B.astype(complex), (nw, n, ny)))     # (sI-A)^-1 B
    Yt = np.linalg.solve(np.transpose(F, (0, 2, 1)),
                         np.broadcast_to(C.T.astype(complex), (nw, n, nu)))
    Y = np.transpose(Yt, (0, 2, 1))                                             # C (sI-A)^-1
    J = np.zeros((nw, npar, nu, ny), dtype=complex)
    pos = 0
    idx = []
    if n > 1:
        idx += [(r + 1, r) for r in range(n - 1)]
    idx += [(r, r) for r in range(n)]
    if n > 1:
        idx += [(r, r + 1) for r in range(n - 1)]
    for r, c in idx:
        # dK/dA[r,c] = C (sI-A)^-1 E_rc (sI-A)^-1 B = Y[:, r] X[c, :]
        J[:, pos] = Y[:, :, r][:, :, None] * X[:, c, :][:, None, :]
        pos += 1
    for i in range(n):
        for j in range(ny):
            J[:, pos, :, j] = Y[:, :, i]
            pos += 1
    for p in range(nu):
        for i in range(n):
            J[:, pos, p, :] = X[:, i, :]
            pos += 1
    for p in range(nu):
        for q in range(ny):
            J[:, pos, p, q] = 1.0
            pos += 1
    return J


def _poly_str(coeffs):
    """Short human-readable polynomial in s, highest power first."""
    deg = len(coeffs) - 1
    terms = []
    for i, c in enumerate(coeffs):
        if c == 0 and len(coeffs) > 1:
            continue
        p = deg - i
        mag = format(abs(c), ".4g")
        sgn = "-" if c < 0 else ("+" if terms else "")
        if p == 0:
            body = mag
        elif p == 1:
            body = f"{mag}*s" if abs(c) != 1 else "s"
        else:
            body = f"{mag}*s^{p}" if abs(c) != 1 else f"s^{p}"
        terms.append(f"{sgn} {body}".strip() if sgn == "-" or terms else body)
    return " ".join(terms) if terms else "0"


def transfer_string(structure, x):
    """Rational K(s) as a display string (SISO structures only)."""
    if structure.ny != 1 or structure.nu != 1:
        raise InvalidInputError("transfer string is only defined for SISO controllers")
    x = _check_x(structure, x)
    if structure.kind == "static":
        return f"K(s) = {format(x[0], '.4g')}"
    if structure.kind == "pi":
        num = [x[0], x[1]]
        den = [1.0, 0.0]
    else:
        A, B, C, D = unpack_tridiag(structure, x)
        den = np.poly(A).real
        num = float(D[0, 0]) * den + (np.poly(A - B @ C).real - den)
    return f"K(s) = ({_poly_str(list(num))})/({_poly_str(list(den))})"


def export_controller(structure, x, path=None):
    """Plain-text export; parseable by ``load_controller`` bit-exactly."""
    x = _check_x(structure, x)
    lines = [
        "# frdsyn controller",
        f"kind = {structure.kind}",
        f"ny = {structure.ny}",
        f"nu = {structure.nu}",
        f"order = {structure.order}",
        "x = " + " ".join(format(v, ".17g") for v in x),
    ]
    if structure.kind == "tridiag":
        A, B, C, D = unpack_tridiag(structure, x)
        for name, M in (("A", A), ("B", B), ("C", C), ("D", D)):
            for row in np.atleast_2d(M):
                lines.append(f"# {name} | " + " ".join(format(v, ".17g") for v in row))
    if structure.ny == 1 and structure.nu == 1:
        lines.append("# " + transfer_string(structure, x))
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def load_controller(path):
    """Read a controller export; returns (structure, x)."""
    fields = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError("expected 'key = value'", path=str(path), line=lineno)
            key, _, val = line.partition("=")
            fields[key.strip()] = val.strip()
    try:
        structure = ControllerStructure(
            fields["kind"],
            ny=int(fields["ny"]),
            nu=int(fields["nu"]),
            order=int(fields["order"]),
        )
        x = np.array([float(v) for v in fields["x"].split()])
    except KeyError as missing:
        raise ParseError(f"missing controller field {missing}", path=str(path))
    except ValueError as bad:
        raise ParseError(f"bad controller value: {bad}", path=str(path))
    return structure, _check_x(structure, x)
