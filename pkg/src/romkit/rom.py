"""Reduced dynamical system: supremizers, operator assembly, time integration.

With velocity modes phi_i, pressure modes psi_i and lifting fields chi_u /
chi_p_k, substituting

    u = sum_i a_i phi_i + g(t) chi_u,      p = sum_i b_i psi_i + sum_k q_k(t) chi_p_k

into the momentum/continuity equations and projecting on the modes gives

    da/dt = nu (B a + g d1) - [a'Ct a + g (d2 + d3) a + g^2 d4]
            - K b - sum_k q_k d5_k - dg/dt d6,
    P a = -g d7,

with B, Ct, K, P the Galerkin compressions of the discrete Laplacian,
convection, gradient and divergence (the same stencils the full-order
solver steps), and d1..d7 the lifting couplings:

    d1 = (phi, Lap chi_u)            d2 = (phi_i, div(phi_j (x) chi_u))
    d3 = (phi_i, div(chi_u (x) phi_j))   d4 = (phi, div(chi_u (x) chi_u))
    d5_k = (phi, grad chi_p_k)       d6 = (phi, chi_u)
    d7 = (psi, div chi_u)

Time stepping is semi-implicit Euler: diffusion and the pressure coupling
are implicit (a saddle solve keeps P a^{n+1} exactly on the constraint),
convection and the lifting forcings explicit.  Supremizer modes -- one
elliptic solve per pressure mode -- make the saddle matrix invertible;
without them the constraint rows vanish on (divergence-free) velocity
modes and integrate_rom reports the singularity.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, cg

from .errors import FormatError, NumericalError, ShapeError, StabilityError
from .fom import Waveform
from .grid import Field, Grid, SnapshotSet, snapshot_matrix
from .lifting import LiftingPair
from .operators import advanced_masks, convection, divergence, gradient, vec_laplacian
from .pod import ReducedBasis, _mgs

SADDLE_COND_LIMIT = 1e12
SUPREMIZER_RTOL = 1e-10

_MAGIC = b"ROMKOPS1"


@dataclass(eq=False)
class ReducedOperators:
    """Dense Galerkin tensors of the reduced system plus lifting couplings."""

    B: np.ndarray          # (Nu, Nu) diffusion
    Ct: np.ndarray         # (Nu, Nu, Nu) convection, Ct[i, j, k] = (phi_i, div(phi_j x phi_k))
    K: np.ndarray          # (Nu, Np) pressure gradient
    P: np.ndarray          # (Np, Nu) divergence constraint
    d1: np.ndarray         # (Nu,)
    d2: np.ndarray         # (Nu, Nu)
    d3: np.ndarray         # (Nu, Nu)
    d4: np.ndarray         # (Nu,)
    d5: np.ndarray         # (n_outlets, Nu)
    d6: np.ndarray         # (Nu,)
    d7: np.ndarray         # (Np,)
    nu: float

    def __post_init__(self):
        nu_modes, npr = self.K.shape
        if self.B.shape != (nu_modes, nu_modes) or self.Ct.shape != (nu_modes,) * 3:
            raise ShapeError("B/Ct shapes inconsistent with K")
        if self.P.shape != (npr, nu_modes):
            raise ShapeError("P shape inconsistent with K")
        for name in ("d1", "d4", "d6"):
            if getattr(self, name).shape != (nu_modes,):
                raise ShapeError(f"{name} must have shape ({nu_modes},)")
        if self.d2.shape != (nu_modes, nu_modes) or self.d3.shape != (nu_modes, nu_modes):
            raise ShapeError("d2/d3 shape mismatch")
        if self.d5.ndim != 2 or self.d5.shape[1] != nu_modes:
            raise ShapeError("d5 must be (n_outlets, Nu)")
        if self.d7.shape != (npr,):
            raise ShapeError("d7 shape mismatch")

    @property
    def n_u(self) -> int:
        return self.B.shape[0]

    @property
    def n_p(self) -> int:
        return self.P.shape[0]

    @property
    def n_outlets(self) -> int:
        return self.d5.shape[0]

    def subset(self, u_idx, n_p: int) -> "ReducedOperators":
        """Operators of the sub-basis given by velocity indices and the
        first n_p pressure modes (valid because modes are orthonormal)."""
        u_idx = np.asarray(u_idx, dtype=int)
        return ReducedOperators(
            B=self.B[np.ix_(u_idx, u_idx)],
            Ct=self.Ct[np.ix_(u_idx, u_idx, u_idx)],
            K=self.K[np.ix_(u_idx, np.arange(n_p))] if n_p else np.zeros((u_idx.size, 0)),
            P=self.P[:n_p][:, u_idx],
            d1=self.d1[u_idx],
            d2=self.d2[np.ix_(u_idx, u_idx)],
            d3=self.d3[np.ix_(u_idx, u_idx)],
            d4=self.d4[u_idx],
            d5=self.d5[:, u_idx],
            d6=self.d6[u_idx],
            d7=self.d7[:n_p],
            nu=self.nu,
        )

    # -- persistence: magic, header length, JSON header, raw float64 blocks --
    _ARRAY_ORDER = ("B", "Ct", "K", "P", "d1", "d2", "d3", "d4", "d5", "d6", "d7")

    def save(self, path) -> None:
        header = {
            "format": "romkit-operators-1",
            "nu": repr(float(self.nu)),
            "arrays": [{"name": n, "shape": list(getattr(self, n).shape)}
                       for n in self._ARRAY_ORDER],
        }
        blob = json.dumps(header).encode()
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            for n in self._ARRAY_ORDER:
                fh.write(np.ascontiguousarray(getattr(self, n), dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ReducedOperators":
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise FormatError(f"{path} is not a reduced-operator file")
            (hlen,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(hlen).decode())
            if header.get("format") != "romkit-operators-1":
                raise FormatError(f"unsupported operator format {header.get('format')!r}")
            arrays = {}
            for spec in header["arrays"]:
                shape = tuple(spec["shape"])
                count = int(np.prod(shape)) if shape else 1
                raw = np.frombuffer(fh.read(8 * count), dtype="<f8")
                arrays[spec["name"]] = raw.reshape(shape).copy()
        return cls(nu=float(header["nu"]), **arrays)


@dataclass(eq=False)
class ReducedTrajectory:
    times: np.ndarray
    a: np.ndarray          # (T, Nu)
    b: np.ndarray          # (T, Np)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.a = np.atleast_2d(np.asarray(self.a, dtype=np.float64))
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.b.ndim == 1:
            self.b = self.b.reshape(self.times.size, -1)
        if self.a.shape[0] != self.times.size or self.b.shape[0] != self.times.size:
            raise ShapeError("trajectory arrays must align with times")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise ShapeError("trajectory contains non-finite entries")


def _fields_to_arrays(field: Field):
    return field.u, field.v


def supremizer_enrich(basis_u: ReducedBasis, basis_p: ReducedBasis | None,
                      grid: Grid) -> ReducedBasis:
    """Append one elliptic supremizer per pressure mode and re-orthonormalize.

    Each s_j solves  -Lap s_j = -grad psi_j  with homogeneous velocity
    boundary closures, giving the constraint matrix P a strictly positive
    smallest singular value on the enriched basis.
    """
    if basis_p is None or basis_p.n_modes == 0:
        return basis_u
    if basis_u.grid != grid or basis_p.grid != grid:
        raise ShapeError("bases must live on the provided grid")

    mu, mv = advanced_masks(grid)
    n_mu = int(mu.sum())

    def matvec(x):
        u = np.zeros((grid.ny, grid.nx + 1))
        v = np.zeros((grid.ny + 1, grid.nx))
        u[mu] = x[:n_mu]
        v[mv] = x[n_mu:]
        lu, lv = vec_laplacian(grid, u, v)
        return -np.concatenate([lu[mu], lv[mv]])

    n_unknown = n_mu + int(mv.sum())
    A = LinearOperator((n_unknown, n_unknown), matvec=matvec)

    sup_fields = []
    for j, psi in enumerate(basis_p.modes):
        gx, gy = gradient(grid, psi.c, {})
        rhs = -np.concatenate([gx[mu], gy[mv]])
        n_iter = [0]

        def count(_):
            n_iter[0] += 1

        x, info = cg(A, rhs, rtol=SUPREMIZER_RTOL, atol=0.0, maxiter=50 * n_unknown,
                     callback=count)
        if info != 0:
            raise NumericalError(
                f"supremizer solve for pressure mode {j} failed "
                f"(info={info}, {n_iter[0]} iterations)"
            )
        u = np.zeros((grid.ny, grid.nx + 1))
        v = np.zeros((grid.ny + 1, grid.nx))
        u[mu] = x[:n_mu]
        v[mv] = x[n_mu:]
        sup_fields.append(Field.vector2(grid, u, v))

    stacked = np.vstack([basis_u.mode_matrix(), snapshot_matrix(sup_fields)])
    ortho = _mgs(stacked, grid.cell_area, start=basis_u.n_modes)
    modes = list(basis_u.modes) + [
        Field(grid, "vector2", ortho[basis_u.n_modes + i]) for i in range(len(sup_fields))
    ]
    return ReducedBasis(modes, basis_u.eigenvalues, "velocity+supremizer",
                        basis_u.M, n_supremizer=basis_u.n_supremizer + len(sup_fields))


def assemble_operators(basis_u: ReducedBasis, basis_p: ReducedBasis | None,
                       lift: LiftingPair, nu: float, grid: Grid) -> ReducedOperators:
    """Galerkin-compress the discrete operators over the given bases."""
    if basis_u.grid != grid:
        raise ShapeError("velocity basis grid mismatch")
    if basis_p is not None and basis_p.grid != grid:
        raise ShapeError("pressure basis grid mismatch")
    if lift.chi_u.grid != grid:
        raise ShapeError("lifting grid mismatch")

    area = grid.cell_area
    Phi = basis_u.mode_matrix()
    n_u = Phi.shape[0]
    n_p = basis_p.n_modes if basis_p is not None else 0
    Psi = basis_p.mode_matrix() if n_p else np.zeros((0, grid.n_scalar))

    umodes = [_fields_to_arrays(f) for f in basis_u.modes]
    cu_u, cu_v = _fields_to_arrays(lift.chi_u)

    def vec_flat(u, v):
        return np.concatenate([u.ravel(), v.ravel()])

    lap_rows = np.empty((n_u, grid.n_vector))
    for j, (u, v) in enumerate(umodes):
        lu, lv = vec_laplacian(grid, u, v)
        lap_rows[j] = vec_flat(lu, lv)
    B = area * (Phi @ lap_rows.T)

    Ct = np.empty((n_u, n_u, n_u))
    for j, (au, av) in enumerate(umodes):
        for k, (bu, bv) in enumerate(umodes):
            cu, cv = convection(grid, au, av, bu, bv)
            Ct[:, j, k] = area * (Phi @ vec_flat(cu, cv))

    K = np.zeros((n_u, n_p))
    d7 = np.zeros(n_p)
    P = np.zeros((n_p, n_u))
    if n_p:
        for j in range(n_p):
            gx, gy = gradient(grid, Psi[j].reshape(grid.ny, grid.nx), {})
            K[:, j] = area * (Phi @ vec_flat(gx, gy))
        div_rows = np.empty((n_u, grid.n_scalar))
        for j, (u, v) in enumerate(umodes):
            div_rows[j] = divergence(grid, u, v).ravel()
        P = area * (Psi @ div_rows.T)
        d7 = area * (Psi @ divergence(grid, cu_u, cu_v).ravel())

    lcu, lcv = vec_laplacian(grid, cu_u, cu_v)
    d1 = area * (Phi @ vec_flat(lcu, lcv))
    d2 = np.empty((n_u, n_u))
    d3 = np.empty((n_u, n_u))
    for j, (u, v) in enumerate(umodes):
        cu2, cv2 = convection(grid, u, v, cu_u, cu_v)
        d2[:, j] = area * (Phi @ vec_flat(cu2, cv2))
        cu3, cv3 = convection(grid, cu_u, cu_v, u, v)
        d3[:, j] = area * (Phi @ vec_flat(cu3, cv3))
    cu4, cv4 = convection(grid, cu_u, cu_v, cu_u, cu_v)
    d4 = area * (Phi @ vec_flat(cu4, cv4))
    d6 = area * (Phi @ vec_flat(cu_u, cu_v))

    d5 = np.zeros((lift.n_outlets, n_u))
    for k_out in range(lift.n_outlets):
        datum = {kk: (1.0 if i == k_out else 0.0) for i, (kk, _) in enumerate(grid.outlets)}
        gx, gy = gradient(grid, lift.chi_p[k_out].c, datum)
        d5[k_out] = area * (Phi @ vec_flat(gx, gy))

    return ReducedOperators(B=B, Ct=Ct, K=K, P=P, d1=d1, d2=d2, d3=d3, d4=d4,
                            d5=d5, d6=d6, d7=d7, nu=float(nu))


def integrate_rom(ops: ReducedOperators, a0: np.ndarray, times, waveform: Waveform,
                  p_d=None, convection_on: bool = True, b0=None) -> ReducedTrajectory:
    """Semi-implicit Euler integration of the reduced dynamical system.

    ``p_d`` maps a time to the per-outlet boundary pressures (scalar is fine
    for a single outlet); None means homogeneous outlet pressure.  The
    pressure multiplier only exists from the first step onward; ``b0`` seeds
    the reported initial value (backfilled from step one when omitted).
    """
    times = np.asarray(times, dtype=np.float64)
    if times.size < 2:
        raise ShapeError("need at least two time points")
    if np.any(np.diff(times) <= 0):
        raise ShapeError("times must be strictly increasing")
    a0 = np.asarray(a0, dtype=np.float64)
    if a0.shape != (ops.n_u,):
        raise ShapeError(f"a0 must have length {ops.n_u}")

    n_u, n_p = ops.n_u, ops.n_p
    n = n_u + n_p

    # boundary data precomputed over the whole grid: the step loop is the
    # timed online path and should touch only reduced-size arrays
    g_all = np.array([waveform.magnitude(float(t)) for t in times])
    gdot_all = np.array([waveform.magnitude_dot(float(t)) for t in times])
    if p_d is None:
        q_all = np.zeros((times.size, ops.n_outlets))
    else:
        try:
            q_all = np.asarray(p_d(times), dtype=np.float64)
            if q_all.shape == (times.size,):
                q_all = q_all[:, None]
            if q_all.shape != (times.size, ops.n_outlets):
                raise ShapeError
        except (ShapeError, TypeError, KeyError):
            q_all = np.array([np.atleast_1d(p_d(float(t))) for t in times], dtype=np.float64)
        if q_all.shape != (times.size, ops.n_outlets):
            raise ShapeError(f"p_d must yield {ops.n_outlets} values per time")
    d5_forcing = q_all @ ops.d5                       # (T, Nu)

    factor_cache = {}

    def factor_for(dt: float):
        # quantized so float jitter in accumulated time grids shares one LU
        key = round(dt, 12)
        if key not in factor_cache:
            M = np.zeros((n, n))
            M[:n_u, :n_u] = np.eye(n_u) / dt - ops.nu * ops.B
            if n_p:
                M[:n_u, n_u:] = ops.K
                M[n_u:, :n_u] = ops.P
            cond = np.linalg.cond(M)
            if not np.isfinite(cond) or cond > SADDLE_COND_LIMIT:
                raise StabilityError(
                    f"reduced saddle matrix is numerically singular "
                    f"(cond ~ {cond:.2e}); enrich the velocity basis with "
                    f"supremizer modes before integrating"
                )
            factor_cache[key] = sla.lu_factor(M, check_finite=False)
        return factor_cache[key]

    Ct_flat = ops.Ct.reshape(n_u, n_u * n_u)
    D23 = ops.d2 + ops.d3
    a_hist = np.empty((times.size, n_u))
    b_hist = np.empty((times.size, n_p))
    a = a0.copy()
    a_hist[0] = a
    rhs = np.empty(n)
    dts = np.diff(times)
    for m in range(times.size - 1):
        dt = dts[m]
        g_n = g_all[m]
        g_np1 = g_all[m + 1]

        rhs_a = a / dt + (ops.nu * g_np1) * ops.d1 - d5_forcing[m + 1] - gdot_all[m + 1] * ops.d6
        if convection_on:
            rhs_a -= Ct_flat @ np.outer(a, a).ravel()
            rhs_a -= g_n * (D23 @ a) + g_n * g_n * ops.d4
        rhs[:n_u] = rhs_a
        if n_p:
            rhs[n_u:] = -g_np1 * ops.d7
        sol = sla.lu_solve(factor_for(dt), rhs, check_finite=False)
        a = sol[:n_u]
        a_hist[m + 1] = a
        if n_p:
            b_hist[m + 1] = sol[n_u:]
    if not np.all(np.isfinite(a_hist)):
        raise NumericalError("reduced trajectory diverged")
    if n_p:
        if b0 is not None:
            b0 = np.asarray(b0, dtype=np.float64)
            if b0.shape != (n_p,):
                raise ShapeError(f"b0 must have length {n_p}")
            b_hist[0] = b0
        else:
            b_hist[0] = b_hist[1] if times.size > 1 else 0.0
    return ReducedTrajectory(times.copy(), a_hist, b_hist)


def reconstruct(basis_u: ReducedBasis, basis_p: ReducedBasis | None,
                traj: ReducedTrajectory, lift: LiftingPair, waveform: Waveform,
                p_d=None, nu: float = 0.0) -> SnapshotSet:
    """Full-field snapshots from reduced coefficients plus boundary lifting."""
    grid = basis_u.grid
    if traj.a.shape[1] != basis_u.n_modes:
        raise ShapeError("trajectory width does not match velocity basis")
    if basis_p is not None and traj.b.shape[1] != basis_p.n_modes:
        raise ShapeError("trajectory width does not match pressure basis")

    Phi = basis_u.mode_matrix()
    Psi = basis_p.mode_matrix() if basis_p is not None else None
    vel, pres, pouts = [], [], []
    for m, t in enumerate(traj.times):
        g = waveform.magnitude(float(t))
        vals = traj.a[m] @ Phi + g * lift.chi_u.values
        vel.append(Field(grid, "vector2", vals))
        q = np.zeros(lift.n_outlets)
        if p_d is not None:
            q = np.atleast_1d(np.asarray(p_d(float(t)), dtype=np.float64))
        pvals = traj.b[m] @ Psi if Psi is not None else np.zeros(grid.n_scalar)
        for k in range(lift.n_outlets):
            pvals = pvals + q[k] * lift.chi_p[k].values
        pres.append(Field(grid, "scalar", pvals))
        pouts.append(q)
    return SnapshotSet(traj.times.copy(), vel, pres, nu=nu,
                       waveform=waveform.to_dict(), outlet_pressure=np.array(pouts))
