"""Structured staggered (MAC) grid, discrete fields and L2 inner products.

Layout for an ``nx x ny`` cell grid over ``[0, lx] x [0, ly]``:

    scalars  p[j, i]  at cell centers   x=(i+0.5)hx, y=(j+0.5)hy   shape (ny, nx)
    u[j, i]           at x-faces        x=i*hx,      y=(j+0.5)hy   shape (ny, nx+1)
    v[j, i]           at y-faces        x=(i+0.5)hx, y=j*hy        shape (ny+1, nx)

A ``Field`` stores one flat float64 vector in this layout (u block then v
block for vector fields).  Fields are immutable after construction so they
can be shared freely across threads; all operations on them are pure.

The discrete inner product is the unweighted L2 sum over unknowns times the
cell area hx*hy, for both scalar and vector fields.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, FormatError, ShapeError

SIDES = ("left", "right", "bottom", "top")
_OUTLET_RE = re.compile(r"^outlet_(\d+)$")


def _tag_ok(tag: str) -> bool:
    return tag in ("inlet", "wall") or _OUTLET_RE.match(tag) is not None


@dataclass(frozen=True)
class Grid:
    """Uniform MAC grid with one boundary tag per side."""

    nx: int
    ny: int
    lx: float
    ly: float
    tags: Mapping[str, str]

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ConfigurationError(f"need nx, ny >= 3, got {self.nx} x {self.ny}")
        if self.lx <= 0 or self.ly <= 0:
            raise ConfigurationError(f"domain lengths must be positive, got {self.lx} x {self.ly}")
        missing = [s for s in SIDES if s not in self.tags]
        if missing:
            raise ConfigurationError(f"boundary sides without a tag: {missing}")
        extra = [s for s in self.tags if s not in SIDES]
        if extra:
            raise ConfigurationError(f"unknown boundary sides: {extra}")
        bad = {s: t for s, t in self.tags.items() if not _tag_ok(t)}
        if bad:
            raise ConfigurationError(f"invalid boundary tags: {bad}")
        ks = [int(_OUTLET_RE.match(t).group(1)) for t in self.tags.values() if _OUTLET_RE.match(t)]
        if len(ks) != len(set(ks)):
            raise ConfigurationError(f"duplicate outlet indices in tags: {sorted(ks)}")
        if "inlet" not in self.tags.values():
            raise ConfigurationError("grid needs at least one inlet side")
        if not ks:
            raise ConfigurationError("grid needs at least one outlet side")
        object.__setattr__(self, "tags", dict(self.tags))

    # -- geometry -----------------------------------------------------------
    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def n_scalar(self) -> int:
        return self.nx * self.ny

    @property
    def n_u(self) -> int:
        return self.ny * (self.nx + 1)

    @property
    def n_v(self) -> int:
        return (self.ny + 1) * self.nx

    @property
    def n_vector(self) -> int:
        return self.n_u + self.n_v

    # -- boundary bookkeeping ------------------------------------------------
    def sides_with(self, tag: str) -> list[str]:
        return [s for s in SIDES if self.tags[s] == tag]

    @property
    def inlet_sides(self) -> list[str]:
        return self.sides_with("inlet")

    @property
    def inlet_side(self) -> str:
        sides = self.inlet_sides
        if len(sides) != 1:
            raise ConfigurationError(f"exactly one inlet side required, got {sides}")
        return sides[0]

    @property
    def outlets(self) -> list[tuple[int, str]]:
        """Sorted (index, side) pairs of all outlet_k tags."""
        out = []
        for s in SIDES:
            m = _OUTLET_RE.match(self.tags[s])
            if m:
                out.append((int(m.group(1)), s))
        return sorted(out)

    def outlet_side(self, k: int) -> str:
        for kk, s in self.outlets:
            if kk == k:
                return s
        raise ConfigurationError(f"no outlet_{k} in grid tags")

    def side_measure(self, side: str) -> float:
        """Face length along the given side (hy for left/right, hx otherwise)."""
        return self.hy if side in ("left", "right") else self.hx

    def side_area(self, side: str) -> float:
        return self.ly if side in ("left", "right") else self.lx

    def _key(self) -> tuple:
        return (self.nx, self.ny, self.lx, self.ly, tuple(sorted(self.tags.items())))

    def __eq__(self, other):
        return isinstance(other, Grid) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())


def build_grid(nx: int, ny: int, lx: float, ly: float, tags: Mapping[str, str]) -> Grid:
    """Construct a validated grid; derived spacings are hx=lx/nx, hy=ly/ny."""
    return Grid(int(nx), int(ny), float(lx), float(ly), tags)


class Field:
    """Immutable scalar or vector2 field on a MAC grid (flat float64 storage)."""

    __slots__ = ("grid", "kind", "values")

    def __init__(self, grid: Grid, kind: str, values):
        if kind not in ("scalar", "vector2"):
            raise ShapeError(f"unknown field kind {kind!r}")
        vals = np.asarray(values, dtype=np.float64).reshape(-1)
        expect = grid.n_scalar if kind == "scalar" else grid.n_vector
        if vals.size != expect:
            raise ShapeError(f"{kind} field needs {expect} values, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise ShapeError(f"{kind} field contains non-finite entries")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", vals)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    # -- constructors ---------------------------------------------------------
    @classmethod
    def scalar(cls, grid: Grid, values=None) -> "Field":
        if values is None:
            values = np.zeros(grid.n_scalar)
        return cls(grid, "scalar", values)

    @classmethod
    def vector2(cls, grid: Grid, u=None, v=None) -> "Field":
        uu = np.zeros((grid.ny, grid.nx + 1)) if u is None else np.asarray(u, dtype=np.float64)
        vv = np.zeros((grid.ny + 1, grid.nx)) if v is None else np.asarray(v, dtype=np.float64)
        if uu.shape != (grid.ny, grid.nx + 1) or vv.shape != (grid.ny + 1, grid.nx):
            raise ShapeError(
                f"vector2 components need shapes {(grid.ny, grid.nx + 1)} and "
                f"{(grid.ny + 1, grid.nx)}, got {uu.shape} and {vv.shape}"
            )
        return cls(grid, "vector2", np.concatenate([uu.ravel(), vv.ravel()]))

    # -- views ---------------------------------------------------------------
    @property
    def u(self) -> np.ndarray:
        if self.kind != "vector2":
            raise ShapeError("u view only exists for vector2 fields")
        return self.values[: self.grid.n_u].reshape(self.grid.ny, self.grid.nx + 1)

    @property
    def v(self) -> np.ndarray:
        if self.kind != "vector2":
            raise ShapeError("v view only exists for vector2 fields")
        return self.values[self.grid.n_u :].reshape(self.grid.ny + 1, self.grid.nx)

    @property
    def c(self) -> np.ndarray:
        if self.kind != "scalar":
            raise ShapeError("c view only exists for scalar fields")
        return self.values.reshape(self.grid.ny, self.grid.nx)

    # -- arithmetic (pure, returns new Field) ---------------------------------
    def _check_mate(self, other: "Field"):
        if not isinstance(other, Field):
            raise ShapeError(f"cannot combine Field with {type(other).__name__}")
        if other.kind != self.kind or other.grid != self.grid:
            raise ShapeError("field kind/grid mismatch")

    def __add__(self, other: "Field") -> "Field":
        self._check_mate(other)
        return Field(self.grid, self.kind, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        self._check_mate(other)
        return Field(self.grid, self.kind, self.values - other.values)

    def __mul__(self, alpha) -> "Field":
        return Field(self.grid, self.kind, self.values * float(alpha))

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, self.kind, -self.values)

    def __repr__(self):
        return f"Field({self.kind}, {self.grid.nx}x{self.grid.ny})"


def inner_product(f: Field, g: Field) -> float:
    """Discrete L2 inner product: sum over unknowns of f*g times cell area."""
    if f.kind != g.kind or f.grid != g.grid:
        raise ShapeError("inner_product needs fields of the same kind on the same grid")
    return float(np.dot(f.values, g.values)) * f.grid.cell_area


def l2_norm(f: Field) -> float:
    return float(np.sqrt(inner_product(f, f)))


# -- boundary traces and fluxes ----------------------------------------------

def normal_values(f: Field, side: str) -> np.ndarray:
    """Boundary-normal velocity values stored on the faces of `side`."""
    if f.kind != "vector2":
        raise ShapeError("normal_values needs a vector2 field")
    if side == "left":
        return f.u[:, 0].copy()
    if side == "right":
        return f.u[:, -1].copy()
    if side == "bottom":
        return f.v[0, :].copy()
    if side == "top":
        return f.v[-1, :].copy()
    raise ConfigurationError(f"unknown side {side!r}")


def side_flux(f: Field, side: str) -> float:
    """Outward volume flux through a side (sum of normal values times face length)."""
    vals = normal_values(f, side)
    sign = -1.0 if side in ("left", "bottom") else 1.0
    return sign * float(np.sum(vals)) * f.grid.side_measure(side)


def inlet_trace(f: Field) -> np.ndarray:
    """Inward-positive normal values on the (single) inlet side."""
    side = f.grid.inlet_side
    vals = normal_values(f, side)
    return vals if side in ("left", "bottom") else -vals


def inlet_flux(f: Field) -> float:
    return -side_flux(f, f.grid.inlet_side)


def outlet_flux(f: Field, k: int) -> float:
    return side_flux(f, f.grid.outlet_side(k))


# -- snapshot containers -------------------------------------------------------

@dataclass(eq=False)
class SnapshotSet:
    """Time-ordered velocity/pressure snapshots plus run metadata.

    ``outlet_pressure[m, k]`` is the outflow-pressure datum of outlet k that
    was in force when snapshot m was recorded (the series the neural network
    trains on).
    """

    times: np.ndarray
    velocity: list
    pressure: list
    nu: float
    waveform: dict | None = None
    outlet_pressure: np.ndarray | None = None
    _grid: Grid = dc_field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        m = self.times.size
        if m < 1:
            raise ShapeError("SnapshotSet needs at least one snapshot")
        if len(self.velocity) != m or len(self.pressure) != m:
            raise ShapeError(
                f"snapshot list lengths differ: {m} times, "
                f"{len(self.velocity)} velocity, {len(self.pressure)} pressure"
            )
        if m > 1 and not np.all(np.diff(self.times) > 0):
            raise ShapeError("snapshot times must be strictly increasing")
        g = self.velocity[0].grid
        for f in self.velocity:
            if f.kind != "vector2" or f.grid != g:
                raise ShapeError("velocity snapshots must be vector2 on one grid")
        for f in self.pressure:
            if f.kind != "scalar" or f.grid != g:
                raise ShapeError("pressure snapshots must be scalar on the same grid")
        if self.outlet_pressure is not None:
            op = np.asarray(self.outlet_pressure, dtype=np.float64)
            if op.ndim == 1:
                op = op[:, None]
            if op.shape[0] != m:
                raise ShapeError("outlet_pressure rows must match snapshot count")
            self.outlet_pressure = op
        self._grid = g

    @property
    def grid(self) -> Grid:
        return self._grid

    def __len__(self):
        return self.times.size

    # -- persistence: meta.json + one raw little-endian float64 file per field
    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        g = self.grid
        meta = {
            "format": "romkit-snapshots-1",
            "nx": g.nx,
            "ny": g.ny,
            "lx": repr(g.lx),
            "ly": repr(g.ly),
            "tags": dict(g.tags),
            "times": [repr(float(t)) for t in self.times],
            "nu": repr(float(self.nu)),
            "waveform": self.waveform,
            "outlet_pressure": None
            if self.outlet_pressure is None
            else [[repr(float(x)) for x in row] for row in self.outlet_pressure],
        }
        (d / "meta.json").write_text(json.dumps(meta, indent=1))
        for m in range(len(self)):
            (d / f"u_{m:06d}.bin").write_bytes(self.velocity[m].values.astype("<f8").tobytes())
            (d / f"p_{m:06d}.bin").write_bytes(self.pressure[m].values.astype("<f8").tobytes())

    @classmethod
    def load(cls, directory) -> "SnapshotSet":
        d = Path(directory)
        try:
            meta = json.loads((d / "meta.json").read_text())
        except FileNotFoundError:
            raise FormatError(f"no meta.json under {d}")
        if meta.get("format") != "romkit-snapshots-1":
            raise FormatError(f"unsupported snapshot format {meta.get('format')!r}")
        grid = Grid(meta["nx"], meta["ny"], float(meta["lx"]), float(meta["ly"]), meta["tags"])
        times = np.array([float(t) for t in meta["times"]])
        vel, pres = [], []
        for m in range(times.size):
            ub = np.frombuffer((d / f"u_{m:06d}.bin").read_bytes(), dtype="<f8")
            pb = np.frombuffer((d / f"p_{m:06d}.bin").read_bytes(), dtype="<f8")
            vel.append(Field(grid, "vector2", ub))
            pres.append(Field(grid, "scalar", pb))
        op = meta.get("outlet_pressure")
        if op is not None:
            op = np.array([[float(x) for x in row] for row in op])
        return cls(times, vel, pres, float(meta["nu"]), meta.get("waveform"), op)


def snapshot_matrix(fields: Sequence[Field]) -> np.ndarray:
    """Stack field values as rows of an (M, n) matrix."""
    if not fields:
        raise ShapeError("empty field list")
    return np.stack([f.values for f in fields])
