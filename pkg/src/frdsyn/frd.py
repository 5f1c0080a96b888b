"""Frequency response data of a generalized plant.

The plant is stored as complex block samples P11 (performance feedthrough,
nz x nw), P12 (nz x nu), P21 (ny x nw), P22 (ny x nu) on a strictly
ascending positive frequency grid in rad/s.

CSV contract (one sample entry per row, sorted by omega, block, row, col):

    omega_radps,block,row,col,re,im
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ParseError

__all__ = ["FrdPlant", "frd_save", "frd_load"]

_BLOCKS = ("P11", "P12", "P21", "P22")
_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FrdPlant:
    omega: np.ndarray
    p11: np.ndarray
    p12: np.ndarray
    p21: np.ndarray
    p22: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        object.__setattr__(self, "omega", w)
        blocks = {}
        for name in ("p11", "p12", "p21", "p22"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.complex128)
            object.__setattr__(self, name, arr)
            blocks[name] = arr
        if w.ndim != 1 or w.size < 1:
            raise InvalidInputError("frequency grid must be a nonempty 1-D array")
        if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
            raise InvalidInputError("frequencies must be positive and finite")
        if np.any(np.diff(w) <= 0.0):
            raise InvalidInputError("frequency grid must be strictly ascending")
        nw_grid = w.shape[0]
        for name, arr in blocks.items():
            if arr.ndim != 3 or arr.shape[0] != nw_grid:
                raise InvalidInputError(f"{name} must have shape (n_omega, rows, cols)")
            if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
                raise InvalidInputError(f"{name} has non-finite entries")
        nz, nwch = blocks["p11"].shape[1:]
        ny, nu = blocks["p22"].shape[1:]
        if blocks["p12"].shape[1:] != (nz, nu):
            raise InvalidInputError("P12 block dimensions inconsistent with P11/P22")
        if blocks["p21"].shape[1:] != (ny, nwch):
            raise InvalidInputError("P21 block dimensions inconsistent with P11/P22")

    @property
    def nz(self):
        return self.p11.shape[1]

    @property
    def nw(self):
        return self.p11.shape[2]

    @property
    def ny(self):
        return self.p22.shape[1]

    @property
    def nu(self):
        return self.p22.shape[2]

    @property
    def dims(self):
        return (self.nz, self.nw, self.ny, self.nu)

    def at(self, omega):
        """Block samples at one grid frequency (exact) or by linear interpolation."""
        w = float(omega)
        grid = self.omega
        if w <= grid[0]:
            i, t = 0, 0.0
        elif w >= grid[-1]:
            i, t = len(grid) - 2 if len(grid) > 1 else 0, 1.0
        else:
            i = int(np.searchsorted(grid, w, side="right")) - 1
            t = (w - grid[i]) / (grid[i + 1] - grid[i])
        if len(grid) == 1:
            return self.p11[0], self.p12[0], self.p21[0], self.p22[0]
        out = []
        for arr in (self.p11, self.p12, self.p21, self.p22):
            out.append((1.0 - t) * arr[i] + t * arr[i + 1])
        return tuple(out)

    def subset(self, indices):
        idx = np.asarray(indices, dtype=int)
        return FrdPlant(self.omega[idx], self.p11[idx], self.p12[idx],
                        self.p21[idx], self.p22[idx])


def frd_save(plant: FrdPlant, path):
    """Write the CSV form; values use 17 significant digits (round-trip exact)."""
    arrs = {"P11": plant.p11, "P12": plant.p12, "P21": plant.p21, "P22": plant.p22}
    with open(path, "w") as fh:
        fh.write("omega_radps,block,row,col,re,im\n")
        for i, w in enumerate(plant.omega):
            for name in _BLOCKS:
                arr = arrs[name][i]
                for r in range(arr.shape[0]):
                    for c in range(arr.shape[1]):
                        v = arr[r, c]
                        fh.write(
                            f"{format(w, '.17g')},{name},{r},{c},"
                            f"{format(v.real, '.17g')},{format(v.imag, '.17g')}\n"
                        )


def frd_load(path, unit="radps"):
    """Read an FRD CSV file.

    ``unit='hz'`` converts the frequency column to rad/s on ingestion.
    Rejects non-ascending grids, inconsistent block dimensions, and rows
    that fail to parse (error message carries the line number).
    """
    if unit not in ("radps", "hz"):
        raise InvalidInputError("unit must be 'radps' or 'hz'")
    entries = {}
    shapes = {b: (0, 0) for b in _BLOCKS}
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != "omega_radps,block,row,col,re,im":
            raise ParseError("bad header line", path=str(path), line=1)
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise ParseError("expected 6 comma-separated fields",
                                 path=str(path), line=lineno)
            try:
                w = float(parts[0])
                block = parts[1]
                r = int(parts[2])
                c = int(parts[3])
                val = complex(float(parts[4]), float(parts[5]))
            except ValueError as bad:
                raise ParseError(f"bad field: {bad}", path=str(path), line=lineno)
            if block not in _BLOCKS:
                raise ParseError(f"unknown block {block!r}", path=str(path), line=lineno)
            if r < 0 or c < 0:
                raise ParseError("negative block index", path=str(path), line=lineno)
            if unit == "hz":
                w *= _TWO_PI
            entries.setdefault(w, {b: {} for b in _BLOCKS})[block][(r, c)] = val
            rows, cols = shapes[block]
            shapes[block] = (max(rows, r + 1), max(cols, c + 1))
    if not entries:
        raise ParseError("no data rows", path=str(path))
    omegas = np.array(sorted(entries))
    stacks = {}
    for b in _BLOCKS:
        rows, cols = shapes[b]
        if rows == 0 or cols == 0:
            raise ParseError(f"block {b} missing", path=str(path))
        arr = np.zeros((len(omegas), rows, cols), dtype=complex)
        for i, w in enumerate(omegas):
            cells = entries[w][b]
            if len(cells) != rows * cols:
                raise ParseError(
                    f"block {b} incomplete at omega={w!r}", path=str(path)
                )
            for (r, c), v in cells.items():
                arr[i, r, c] = v
        stacks[b] = arr
    return FrdPlant(omegas, stacks["P11"], stacks["P12"], stacks["P21"], stacks["P22"])
