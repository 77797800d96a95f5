"""Desk-scale full-order model: 2D incompressible flow on a MAC grid.

One time step advances the state with a first-order pressure-projection
split, the structured-grid counterpart of segregated pressure-velocity
coupling:

  1. predictor   u* = u + dt (nu Lap(u) - div(u (x) u))          (explicit)
  2. boundary    inlet faces get the pulsatile Dirichlet profile at t+dt,
                 wall faces stay zero, outlet faces stay predicted
  3. Windkessel  each outlet integrates its RCR state with the outward face
                 flux of the current velocity; the resulting downstream
                 pressure becomes the Dirichlet datum of the Poisson solve
  4. pressure    div(grad(p)) = div(u*)/dt, CG to relative residual 1e-10
  5. corrector   u = u* - dt grad(p)

Because divergence/gradient/Laplacian come from operators.py, the reduced
model assembled over the same functions is operator-consistent with this
solver.  The outlet pressure datum applied at each step is recorded next to
the snapshots: that series is what the outflow-pressure network trains on.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import cg

from .errors import ConfigurationError, NumericalError
from .grid import Field, Grid, SnapshotSet
from .operators import advanced_masks, center_laplacian, convection, divergence, gradient, vec_laplacian
from .windkessel import WindkesselParams, WindkesselState, wk_step

POISSON_RTOL = 1e-10
DIV_TOL_FACTOR = 1e-8


@dataclass(frozen=True)
class Waveform:
    """Synthetic pulsatile inlet: u_D(t) = u_sys sin(pi s/(alpha T_c)) during
    systole (s = t mod T_c < alpha T_c), zero in diastole.  kind="constant"
    holds u_sys for all t."""

    kind: str = "pulse"
    u_sys: float = 7.4e-4
    t_cycle: float = 0.6
    systole_frac: float = 0.4
    shape: str = "plug"

    def __post_init__(self):
        if self.kind not in ("pulse", "constant"):
            raise ConfigurationError(f"unknown waveform kind {self.kind!r}")
        if self.shape not in ("plug", "parabola"):
            raise ConfigurationError(f"unknown inlet shape {self.shape!r}")
        if self.kind == "pulse" and (self.t_cycle <= 0 or not 0 < self.systole_frac <= 1):
            raise ConfigurationError("pulse waveform needs t_cycle > 0 and 0 < systole_frac <= 1")

    def magnitude(self, t: float) -> float:
        if self.kind == "constant":
            return self.u_sys
        s = np.mod(t, self.t_cycle)
        t_sys = self.systole_frac * self.t_cycle
        return float(self.u_sys * np.sin(np.pi * s / t_sys)) if s < t_sys else 0.0

    def magnitude_dot(self, t: float) -> float:
        """Analytic du_D/dt (used by the reduced model's lifting forcing)."""
        if self.kind == "constant":
            return 0.0
        s = np.mod(t, self.t_cycle)
        t_sys = self.systole_frac * self.t_cycle
        if s < t_sys:
            return float(self.u_sys * np.pi / t_sys * np.cos(np.pi * s / t_sys))
        return 0.0

    def profile(self, grid: Grid) -> np.ndarray:
        """Spatial inlet shape over the inlet faces, normalized to mean 1."""
        side = grid.inlet_side
        n = grid.ny if side in ("left", "right") else grid.nx
        if self.shape == "plug":
            return np.ones(n)
        xi = (np.arange(n) + 0.5) / n
        prof = 6.0 * xi * (1.0 - xi)
        return prof / prof.mean()  # discrete mean exactly 1 so flux = u_D * area

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "u_sys": self.u_sys,
            "t_cycle": self.t_cycle,
            "systole_frac": self.systole_frac,
            "shape": self.shape,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Waveform":
        return cls(**d)


def inlet_profile(t: float, spec: Waveform) -> float:
    """Inlet velocity magnitude u_D(t) for the given waveform."""
    return spec.magnitude(t)


@dataclass(frozen=True)
class FomConfig:
    grid: Grid
    nu: float
    dt: float
    t0: float
    t_end: float
    waveform: Waveform
    windkessel: dict
    snap_stride: int | None = 1
    snap_start: float | None = None
    include_convection: bool = True

    def __post_init__(self):
        if self.nu <= 0:
            raise ConfigurationError(f"nu must be positive, got {self.nu}")
        if self.dt <= 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.t0 >= self.t_end:
            raise ConfigurationError(f"need t0 < t_end, got [{self.t0}, {self.t_end}]")
        g = self.grid
        h_min = min(g.hx, g.hy)
        cfl = self.waveform.u_sys * self.dt / h_min
        if cfl >= 1.0:
            raise ConfigurationError(f"convective CFL {cfl:.3g} >= 1 at the waveform peak")
        dt_diff = 1.0 / (3.0 * self.nu * (1.0 / g.hx**2 + 1.0 / g.hy**2))
        if self.dt > dt_diff:
            raise ConfigurationError(
                f"dt={self.dt} exceeds the explicit diffusion limit {dt_diff:.3g}"
            )
        want = {k for k, _ in g.outlets}
        have = set(self.windkessel)
        if want != have:
            raise ConfigurationError(f"windkessel params for outlets {sorted(have)}, grid has {sorted(want)}")
        for k, p in self.windkessel.items():
            if not isinstance(p, WindkesselParams):
                raise ConfigurationError(f"outlet {k}: expected WindkesselParams")
            if self.dt >= p.tau:
                raise ConfigurationError(f"outlet {k}: dt >= Rd*C = {p.tau:.3g} (unstable Windkessel step)")
        if self.snap_stride is not None and self.snap_stride < 1:
            raise ConfigurationError("snap_stride must be >= 1 (or None for a single snapshot)")
        if self.snap_start is not None and not (self.t0 <= self.snap_start <= self.t_end):
            raise ConfigurationError("snap_start must lie in [t0, t_end]")


@dataclass
class FomState:
    grid: Grid
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    wk: dict
    t: float

    @property
    def velocity(self) -> Field:
        return Field.vector2(self.grid, self.u, self.v)

    @property
    def pressure(self) -> Field:
        return Field.scalar(self.grid, self.p)


def _side_flux(grid: Grid, u: np.ndarray, v: np.ndarray, side: str) -> float:
    if side == "left":
        return -float(np.sum(u[:, 0])) * grid.hy
    if side == "right":
        return float(np.sum(u[:, -1])) * grid.hy
    if side == "bottom":
        return -float(np.sum(v[0, :])) * grid.hx
    return float(np.sum(v[-1, :])) * grid.hx


class FomSolver:
    """Holds the assembled Poisson operator and advances FOM states."""

    def __init__(self, cfg: FomConfig):
        self.cfg = cfg
        self.grid = cfg.grid
        outlet_sides = frozenset(side for _, side in self.grid.outlets)
        self._A, self._bc = center_laplacian(self.grid, outlet_sides)
        self._masks = advanced_masks(self.grid)
        self._profile = cfg.waveform.profile(self.grid)
        self._prev_p = np.zeros(self.grid.n_scalar)

    def initial_state(self) -> FomState:
        g = self.grid
        return FomState(
            grid=g,
            u=np.zeros((g.ny, g.nx + 1)),
            v=np.zeros((g.ny + 1, g.nx)),
            p=np.zeros((g.ny, g.nx)),
            wk={k: WindkesselState(t=self.cfg.t0) for k, _ in g.outlets},
            t=self.cfg.t0,
        )

    def _apply_inlet(self, u: np.ndarray, v: np.ndarray, g_val: float) -> None:
        side = self.grid.inlet_side
        vals = g_val * self._profile
        if side == "left":
            u[:, 0] = vals
        elif side == "right":
            u[:, -1] = -vals
        elif side == "bottom":
            v[0, :] = vals
        else:
            v[-1, :] = -vals

    def _apply_walls(self, u: np.ndarray, v: np.ndarray) -> None:
        g = self.grid
        if g.tags["left"] == "wall":
            u[:, 0] = 0.0
        if g.tags["right"] == "wall":
            u[:, -1] = 0.0
        if g.tags["bottom"] == "wall":
            v[0, :] = 0.0
        if g.tags["top"] == "wall":
            v[-1, :] = 0.0

    def advance(self, state: FomState) -> FomState:
        cfg, g = self.cfg, self.grid
        dt, nu = cfg.dt, cfg.nu
        t_new = state.t + dt

        lu, lv = vec_laplacian(g, state.u, state.v)
        if cfg.include_convection:
            cu, cv = convection(g, state.u, state.v, state.u, state.v)
        else:
            cu = cv = 0.0
        us = state.u + dt * (nu * lu - cu)
        vs = state.v + dt * (nu * lv - cv)
        self._apply_inlet(us, vs, cfg.waveform.magnitude(t_new))
        self._apply_walls(us, vs)

        wk_new, datums, outlet_vals = {}, {}, {}
        for k, side in g.outlets:
            Q = _side_flux(g, state.u, state.v, side)
            wk_new[k] = wk_step(state.wk[k], Q, dt, cfg.windkessel[k])
            datums[side] = wk_new[k].p
            outlet_vals[k] = wk_new[k].p

        rhs = self._bc(datums) - divergence(g, us, vs).ravel() / dt
        n_iter = [0]

        def count(_):
            n_iter[0] += 1

        p_flat, info = cg(self._A, rhs, x0=self._prev_p, rtol=POISSON_RTOL, atol=0.0,
                          maxiter=20 * g.n_scalar, callback=count)
        if info != 0:
            raise NumericalError(
                f"pressure Poisson CG did not converge (info={info}, {n_iter[0]} iterations, "
                f"residual {np.linalg.norm(self._A @ p_flat - rhs):.3e})"
            )
        self._prev_p = p_flat
        p_new = p_flat.reshape(g.ny, g.nx)

        gx, gy = gradient(g, p_new, outlet_vals)
        u_new = us - dt * gx
        v_new = vs - dt * gy

        u_ref = max(cfg.waveform.u_sys, np.abs(u_new).max(), np.abs(v_new).max())
        div_inf = np.abs(divergence(g, u_new, v_new)).max()
        if div_inf > DIV_TOL_FACTOR * u_ref / min(g.hx, g.hy):
            raise NumericalError(
                f"post-correction divergence {div_inf:.3e} exceeds tolerance "
                f"{DIV_TOL_FACTOR * u_ref / min(g.hx, g.hy):.3e}"
            )

        return FomState(grid=g, u=u_new, v=v_new, p=p_new, wk=wk_new, t=t_new)

    def run(self) -> "FomResult":
        cfg, g = self.cfg, self.grid
        n_steps = int(np.floor((cfg.t_end - cfg.t0) / cfg.dt + 1e-9))
        snap_start = cfg.t0 if cfg.snap_start is None else cfg.snap_start
        i_start = int(np.ceil((snap_start - cfg.t0) / cfg.dt - 1e-9))
        stride = cfg.snap_stride

        outlet_ids = [k for k, _ in g.outlets]
        times, vels, pres, pouts = [], [], [], []

        def record(state: FomState):
            times.append(state.t)
            vels.append(Field.vector2(g, state.u, state.v))
            pres.append(Field.scalar(g, state.p))
            pouts.append([state.wk[k].p for k in outlet_ids])

        def want(i: int) -> bool:
            if i < i_start:
                return False
            if stride is None:
                return i == i_start
            return (i - i_start) % stride == 0

        times_full, pouts_full = [], []

        def record_datum(state: FomState):
            times_full.append(state.t)
            pouts_full.append([state.wk[k].p for k in outlet_ids])

        t_wall = time.perf_counter()
        state = self.initial_state()
        record_datum(state)
        if want(0):
            record(state)
        cycle_ref = None
        t_ref = cfg.t_end - cfg.waveform.t_cycle if cfg.waveform.kind == "pulse" else None
        for i in range(1, n_steps + 1):
            state = self.advance(state)
            record_datum(state)
            if want(i):
                record(state)
            if t_ref is not None and cycle_ref is None and state.t >= t_ref - 1e-12:
                cycle_ref = (state.u.copy(), state.v.copy())
        t_wall = time.perf_counter() - t_wall

        drift = None
        if cycle_ref is not None and cfg.t_end - cfg.t0 >= 2 * cfg.waveform.t_cycle - 1e-12:
            du = np.concatenate([(state.u - cycle_ref[0]).ravel(), (state.v - cycle_ref[1]).ravel()])
            ref = np.concatenate([state.u.ravel(), state.v.ravel()])
            denom = np.linalg.norm(ref) * np.sqrt(g.cell_area)
            drift = float(np.linalg.norm(du) * np.sqrt(g.cell_area) / max(denom, 1e-300))

        snaps = SnapshotSet(
            np.array(times),
            vels,
            pres,
            nu=cfg.nu,
            waveform=cfg.waveform.to_dict(),
            outlet_pressure=np.array(pouts),
        )
        return FomResult(snapshots=snaps, outlet_pressure=snaps.outlet_pressure,
                         wall_time=t_wall, cycle_drift=drift, n_steps=n_steps,
                         step_times=np.array(times_full),
                         step_outlet_pressure=np.array(pouts_full))


@dataclass
class FomResult:
    snapshots: SnapshotSet
    outlet_pressure: np.ndarray        # per snapshot time
    wall_time: float
    cycle_drift: float | None
    n_steps: int
    step_times: np.ndarray | None = None            # every step, for fine queries
    step_outlet_pressure: np.ndarray | None = None


def fom_advance(state: FomState, cfg: FomConfig) -> FomState:
    """One projection step (convenience wrapper; FomSolver caches the
    Poisson operator for loops)."""
    return FomSolver(cfg).advance(state)


def fom_run(cfg: FomConfig) -> FomResult:
    """Run the configured simulation and collect snapshots at the stride."""
    return FomSolver(cfg).run()
