"""Offline/online orchestration, bundle persistence and run reports.

offline: FOM run -> lifting -> homogenize -> POD (velocity, pressure) ->
supremizer enrichment -> operator assembly -> outflow-pressure network per
outlet -> bundle directory.  online: load bundle, integrate the reduced
system at the query times (substepping at the recorded full-order dt by
default), reconstruct fields, compare against the stored snapshots and
write errors/timings/report files.

Everything written into the bundle is deterministic given the config and
seed; wall-clock artifacts (timings.csv, report.json) live next to it and
stay outside the determinism manifest.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, ShapeError
from .fom import FomConfig, FomResult, Waveform, fom_run
from .grid import Field, Grid, SnapshotSet, l2_norm
from .lifting import LiftingPair, compute_lifting, homogenize
from .nn import (
    NNModel,
    TrainConfig,
    init_model,
    load_model,
    nn_train,
    predict_outflow,
    save_loss_history,
    save_model,
)
from .nn import REFERENCE_NN_DEFAULTS
from .pod import ReducedBasis, pod_basis, project_coefficients, truncation_rank
from .rom import ReducedOperators, assemble_operators, integrate_rom, reconstruct, supremizer_enrich
from .windkessel import WindkesselParams

BUNDLE_FORMAT = "romkit-bundle-1"

DEFAULT_CONFIG = {
    # grid and tags
    "nx": "64", "ny": "16", "lx": "2.0", "ly": "0.5",
    "tag_left": "inlet", "tag_right": "outlet_0", "tag_top": "wall", "tag_bottom": "wall",
    # full-order run (desk-scaled channel: Re ~ 100, resolved pulsatile layer)
    "nu": "0.04", "dt": "2.5e-3", "t0": "0.0", "t_end": "1.8",
    "waveform": "pulse", "u_sys": "8.0", "t_cycle": "0.6", "systole_frac": "0.4",
    "inlet_shape": "plug",
    "wk_0": "35.0,590.0,8e-4",
    # snapshots: fine 0.005 grid over the last cycle; training uses every 2nd
    "snap_start": "1.2", "snap_stride": "2", "train_subsample": "2",
    "include_convection": "true",
    # reduction
    "n_u": "6", "n_p": "6", "n_u_max": "16", "n_p_max": "8",
    "energy": "0.9999", "lift_pressure": "true",
    # outflow-pressure network (desk-scale hyperparameters; the reference
    # defaults of nn.REFERENCE_NN_DEFAULTS are echoed in the report)
    "nn_hidden": "32", "nn_layers": "2", "nn_activation": "tanh",
    "nn_epochs": "30000", "nn_lr": "0.25", "nn_split": "0.8",
    "seed": "0",
}


def parse_config(source) -> dict:
    """Flat key=value text (path or literal text); '#' starts a comment."""
    path = Path(source)
    text = path.read_text() if path.exists() else str(source)
    out = dict(DEFAULT_CONFIG)
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {ln}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def _f(cfg, key) -> float:
    try:
        return float(cfg[key])
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"config key {key!r}: {exc}")


def _i(cfg, key) -> int:
    try:
        return int(cfg[key])
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"config key {key!r}: {exc}")


def _b(cfg, key) -> bool:
    val = str(cfg.get(key, "false")).lower()
    if val in ("true", "1", "yes"):
        return True
    if val in ("false", "0", "no"):
        return False
    raise ConfigurationError(f"config key {key!r}: expected a boolean, got {val!r}")


def build_grid_from_config(cfg: dict) -> Grid:
    tags = {side: cfg[f"tag_{side}"] for side in ("left", "right", "bottom", "top")
            if f"tag_{side}" in cfg}
    return Grid(_i(cfg, "nx"), _i(cfg, "ny"), _f(cfg, "lx"), _f(cfg, "ly"), tags)


def build_fom_config(cfg: dict) -> FomConfig:
    grid = build_grid_from_config(cfg)
    waveform = Waveform(
        kind=cfg.get("waveform", "pulse"),
        u_sys=_f(cfg, "u_sys"),
        t_cycle=_f(cfg, "t_cycle"),
        systole_frac=_f(cfg, "systole_frac"),
        shape=cfg.get("inlet_shape", "plug"),
    )
    if "wk_file" in cfg:
        from .windkessel import load_params_csv

        wk = load_params_csv(cfg["wk_file"])
    else:
        wk = {}
        for k, _ in grid.outlets:
            key = f"wk_{k}"
            if key not in cfg:
                raise ConfigurationError(f"missing Windkessel parameters {key!r}")
            parts = [p.strip() for p in str(cfg[key]).split(",")]
            if len(parts) != 3:
                raise ConfigurationError(f"{key!r} must be 'Rp,Rd,C'")
            wk[k] = WindkesselParams(*(float(p) for p in parts))
    stride = cfg.get("snap_stride", "1")
    return FomConfig(
        grid=grid,
        nu=_f(cfg, "nu"),
        dt=_f(cfg, "dt"),
        t0=_f(cfg, "t0"),
        t_end=_f(cfg, "t_end"),
        waveform=waveform,
        windkessel=wk,
        snap_stride=None if str(stride).lower() in ("none", "inf") else int(stride),
        snap_start=_f(cfg, "snap_start") if "snap_start" in cfg else None,
        include_convection=_b(cfg, "include_convection") if "include_convection" in cfg else True,
    )


@dataclass(eq=False)
class Bundle:
    """Everything the online stage needs, plus the validation snapshots."""

    config: dict
    grid: Grid
    waveform: Waveform
    nu: float
    dt_fom: float
    train: SnapshotSet
    fine: SnapshotSet
    lifting: LiftingPair
    basis_u: ReducedBasis          # supremizer-enriched
    basis_p: ReducedBasis | None
    operators: ReducedOperators
    nn_models: dict                # outlet index -> NNModel
    fom_wall_time: float
    cycle_drift: float | None
    lift_pressure: bool
    n_u: int
    n_p: int

    @property
    def velocity_only(self) -> bool:
        return self.basis_p is None or self.n_p == 0

    def outlet_pressure_fn(self):
        """Continuous per-outlet outflow pressure from the trained networks."""
        if not self.nn_models:
            return None
        keys = sorted(self.nn_models)

        def p_d(t):
            vals = [predict_outflow(self.nn_models[k], t) for k in keys]
            if np.ndim(t) == 0:
                return np.array(vals)
            return np.stack([np.asarray(v) for v in vals], axis=-1)

        return p_d

    def mode_selection(self, n_u: int | None = None, n_p: int | None = None):
        """Velocity index set (modes + matching supremizers) and n_p."""
        n_u = self.n_u if n_u is None else n_u
        n_p = self.n_p if n_p is None else n_p
        n_prim = self.basis_u.n_primary
        n_sup = self.basis_u.n_supremizer
        if n_u < 1 or n_u > n_prim:
            raise ConfigurationError(f"n_u must be in [1, {n_prim}]")
        if n_p < 0 or n_p > min(n_sup, self.basis_p.n_modes if self.basis_p else 0):
            raise ConfigurationError(f"n_p must be in [0, {n_sup}]")
        idx = list(range(n_u)) + [n_prim + j for j in range(n_p)]
        return np.array(idx, dtype=int), n_p

    def sliced_basis_u(self, idx) -> ReducedBasis:
        modes = [self.basis_u.modes[i] for i in idx]
        n_sup = int(np.sum(np.asarray(idx) >= self.basis_u.n_primary))
        return ReducedBasis(modes, self.basis_u.eigenvalues, self.basis_u.kind,
                            self.basis_u.M, n_supremizer=n_sup)

    def sliced_basis_p(self, n_p: int) -> ReducedBasis | None:
        if n_p == 0 or self.basis_p is None:
            return None
        return ReducedBasis(self.basis_p.modes[:n_p], self.basis_p.eigenvalues,
                            self.basis_p.kind, self.basis_p.M)

    # -- persistence -----------------------------------------------------------
    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.train.save(d / "snapshots_train")
        self.fine.save(d / "snapshots_fine")
        self.lifting.save(d / "lifting")
        self.basis_u.save(d / "basis_u")
        if self.basis_p is not None:
            self.basis_p.save(d / "basis_p")
        self.operators.save(d / "operators.bin")
        for k, model in self.nn_models.items():
            save_model(model, d / f"nn_{k}.json")
        rom = {
            "format": BUNDLE_FORMAT,
            "nu": repr(self.nu),
            "dt_fom": repr(self.dt_fom),
            "scheme": "semi-implicit-euler",
            "waveform": self.waveform.to_dict(),
            "lift_pressure": self.lift_pressure,
            "n_u": self.n_u,
            "n_p": self.n_p,
            "cycle_drift": self.cycle_drift,
            "nn_outlets": sorted(self.nn_models),
            "config": self.config,
            "lifting_ref": "lifting",
            "basis_refs": ["basis_u"] + (["basis_p"] if self.basis_p is not None else []),
        }
        (d / "rom.json").write_text(json.dumps(rom, indent=1))
        # wall-clock numbers vary run to run and stay outside the manifest
        (d / "runtime.json").write_text(json.dumps({"fom_wall_time": self.fom_wall_time}))
        self._write_manifest(d)

    @staticmethod
    def _manifest_files(d: Path):
        skip = {"manifest.json", "timings.csv", "report.json", "runtime.json"}
        for p in sorted(d.rglob("*")):
            if p.is_file() and p.name not in skip:
                yield p

    def _write_manifest(self, d: Path) -> None:
        files = {}
        for p in self._manifest_files(d):
            files[p.relative_to(d).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
        payload = {"format": BUNDLE_FORMAT, "files": files}
        # fom_wall_time varies run to run; hash only the deterministic artifacts
        (d / "manifest.json").write_text(json.dumps(payload, indent=1, sort_keys=True))

    @classmethod
    def load(cls, directory) -> "Bundle":
        d = Path(directory)
        try:
            rom = json.loads((d / "rom.json").read_text())
        except FileNotFoundError:
            raise FormatError(f"no rom.json under {d}")
        if rom.get("format") != BUNDLE_FORMAT:
            raise FormatError(f"unsupported bundle format {rom.get('format')!r}")
        train = SnapshotSet.load(d / "snapshots_train")
        fine = SnapshotSet.load(d / "snapshots_fine")
        grid = train.grid
        lifting = LiftingPair.load(d / "lifting", grid)
        basis_u = ReducedBasis.load(d / "basis_u", grid)
        basis_p = ReducedBasis.load(d / "basis_p", grid) if (d / "basis_p").exists() else None
        operators = ReducedOperators.load(d / "operators.bin")
        nn_models = {int(k): load_model(d / f"nn_{k}.json") for k in rom.get("nn_outlets", [])}
        try:
            runtime = json.loads((d / "runtime.json").read_text())
        except FileNotFoundError:
            runtime = {"fom_wall_time": float("nan")}
        return cls(
            config=rom["config"],
            grid=grid,
            waveform=Waveform.from_dict(rom["waveform"]),
            nu=float(rom["nu"]),
            dt_fom=float(rom["dt_fom"]),
            train=train,
            fine=fine,
            lifting=lifting,
            basis_u=basis_u,
            basis_p=basis_p,
            operators=operators,
            nn_models=nn_models,
            fom_wall_time=float(runtime["fom_wall_time"]),
            cycle_drift=rom.get("cycle_drift"),
            lift_pressure=bool(rom.get("lift_pressure", True)),
            n_u=int(rom["n_u"]),
            n_p=int(rom["n_p"]),
        )


def _subsample(snaps: SnapshotSet, outlet_pressure: np.ndarray, step: int) -> SnapshotSet:
    sel = slice(0, None, step)
    return SnapshotSet(snaps.times[sel], snaps.velocity[sel], snaps.pressure[sel],
                       snaps.nu, snaps.waveform, outlet_pressure[sel])


class _StageFailure(Exception):
    """Internal wrapper used to tag which offline stage failed."""

    def __init__(self, stage, exc):
        self.stage = stage
        self.exc = exc


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, _StageFailure):
            raise _StageFailure(self.name, exc) from exc
        return False


def offline(config: dict | str, out_dir=None, fom_result: FomResult | None = None):
    """Run the whole offline stage; returns (Bundle, timings dict).

    ``fom_result`` short-circuits the snapshot generation (used by ablation
    studies that share one full-order run).  Any stage failure is re-raised
    with the stage name attached and partial bundle output is removed.
    """
    try:
        return _offline_stages(config, out_dir, fom_result)
    except _StageFailure as failure:
        if out_dir is not None and Path(out_dir).exists():
            import shutil

            shutil.rmtree(out_dir, ignore_errors=True)
        exc = failure.exc
        exc.args = (f"[offline stage {failure.stage!r}] {exc}",) + exc.args[1:]
        raise exc from None


def _offline_stages(config, out_dir, fom_result):
    with _stage("config"):
        cfg = parse_config(config) if not isinstance(config, dict) else {**DEFAULT_CONFIG, **config}
        fom_cfg = build_fom_config(cfg)
        if fom_cfg.waveform.shape != "plug":
            raise ConfigurationError("the reduced pipeline requires the plug inlet shape "
                                     "(the velocity lifting carries a uniform unit trace)")
        seed = _i(cfg, "seed")
    timings = {}

    with _stage("fom"):
        if fom_result is None:
            fom_result = fom_run(fom_cfg)
        timings["fom"] = fom_result.wall_time
        fine = fom_result.snapshots
        sub = _i(cfg, "train_subsample") if "train_subsample" in cfg else 1
        train = _subsample(fine, fom_result.outlet_pressure, sub) if sub > 1 else fine

    with _stage("lifting"):
        t0 = time.perf_counter()
        lifting = compute_lifting(fom_cfg.grid)
        timings["lifting"] = time.perf_counter() - t0

    with _stage("homogenize"):
        lift_pressure = _b(cfg, "lift_pressure") if "lift_pressure" in cfg else True
        u_d = np.array([fom_cfg.waveform.magnitude(t) for t in train.times])
        p_d_series = train.outlet_pressure if lift_pressure else None
        hom = homogenize(train, u_d, p_d_series, lifting)

    with _stage("pod"):
        t0 = time.perf_counter()
        basis_u_plain = pod_basis(hom.velocity, n_modes=_i(cfg, "n_u_max"), kind="velocity")
        timings["pod_u"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        n_p_max = _i(cfg, "n_p_max")
        basis_p = pod_basis(hom.pressure, n_modes=n_p_max, kind="pressure") if n_p_max > 0 else None
        timings["pod_p"] = time.perf_counter() - t0
        n_u = min(_i(cfg, "n_u"), basis_u_plain.n_modes)
        n_p = min(_i(cfg, "n_p"), basis_p.n_modes) if basis_p is not None else 0

    with _stage("supremizer"):
        t0 = time.perf_counter()
        basis_u = supremizer_enrich(basis_u_plain, basis_p, fom_cfg.grid)
        timings["supremizer"] = time.perf_counter() - t0

    with _stage("operators"):
        t0 = time.perf_counter()
        operators = assemble_operators(basis_u, basis_p, lifting, fom_cfg.nu, fom_cfg.grid)
        timings["operators"] = time.perf_counter() - t0

    with _stage("nn_train"):
        t0 = time.perf_counter()
        nn_models = {}
        nn_cfg = TrainConfig(epochs=_i(cfg, "nn_epochs"), learning_rate=_f(cfg, "nn_lr"),
                             train_fraction=_f(cfg, "nn_split"), seed=seed)
        histories = {}
        for j, (k, _) in enumerate(fom_cfg.grid.outlets):
            model = init_model(hidden_neurons=_i(cfg, "nn_hidden"),
                               hidden_layers=_i(cfg, "nn_layers"),
                               activation=cfg.get("nn_activation", "softplus"), seed=seed + j)
            trained, hist = nn_train(model, train.times, train.outlet_pressure[:, j], nn_cfg)
            nn_models[k] = trained
            histories[k] = hist
        timings["nn_train"] = time.perf_counter() - t0

    bundle = Bundle(
        config=dict(cfg),
        grid=fom_cfg.grid,
        waveform=fom_cfg.waveform,
        nu=fom_cfg.nu,
        dt_fom=fom_cfg.dt,
        train=train,
        fine=fine,
        lifting=lifting,
        basis_u=basis_u,
        basis_p=basis_p,
        operators=operators,
        nn_models=nn_models,
        fom_wall_time=fom_result.wall_time,
        cycle_drift=fom_result.cycle_drift,
        lift_pressure=lift_pressure,
        n_u=n_u,
        n_p=n_p,
    )
    timings["total"] = sum(timings.values())

    if out_dir is not None:
        with _stage("save"):
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            for k, hist in histories.items():
                save_loss_history(out / f"loss_{k}.csv", hist)
            bundle.save(out)  # writes the manifest last, covering the loss files
            _write_timings(out / "timings.csv", timings)
    return bundle, timings


@dataclass(eq=False)
class RunReport:
    """Per-time errors, sweep table, spectra, timings and the speedup."""

    times: np.ndarray
    err_u: np.ndarray | None
    err_p: np.ndarray | None
    proj_u: np.ndarray | None
    proj_p: np.ndarray | None
    sweep: list = field(default_factory=list)       # dicts per N
    spectrum_u: np.ndarray | None = None
    spectrum_p: np.ndarray | None = None
    timings: dict = field(default_factory=dict)
    speedup: float | None = None
    extras: dict = field(default_factory=dict)

    def time_avg(self, name: str) -> float | None:
        arr = getattr(self, name)
        return None if arr is None else float(np.mean(arr))

    def write(self, out_dir) -> None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        if self.err_u is not None:
            rows = ["t,err_u,err_p,proj_u,proj_p"]
            for m, t in enumerate(self.times):
                def cell(arr):
                    return repr(float(arr[m])) if arr is not None else ""
                rows.append(f"{float(t)!r},{cell(self.err_u)},{cell(self.err_p)},"
                            f"{cell(self.proj_u)},{cell(self.proj_p)}")
            (d / "errors.csv").write_text("\n".join(rows) + "\n")
        if self.spectrum_u is not None:
            rows = ["i,lambda_u,lambda_p"]
            n = max(self.spectrum_u.size,
                    self.spectrum_p.size if self.spectrum_p is not None else 0)
            for i in range(n):
                lu = repr(float(self.spectrum_u[i])) if i < self.spectrum_u.size else ""
                lp = (repr(float(self.spectrum_p[i]))
                      if self.spectrum_p is not None and i < self.spectrum_p.size else "")
                rows.append(f"{i},{lu},{lp}")
            (d / "spectrum.csv").write_text("\n".join(rows) + "\n")
        if self.sweep:
            cols = ["N", "err_u", "err_p", "proj_u", "proj_p"]
            rows = [",".join(cols)]
            for entry in self.sweep:
                cells = [str(entry["N"])]
                cells += ["" if entry[c] is None else repr(float(entry[c])) for c in cols[1:]]
                rows.append(",".join(cells))
            (d / "errors_vs_n.csv").write_text("\n".join(rows) + "\n")
        if self.timings:
            _write_timings(d / "timings.csv", self.timings)
        summary = {
            "time_avg_err_u": self.time_avg("err_u"),
            "time_avg_err_p": self.time_avg("err_p"),
            "time_avg_proj_u": self.time_avg("proj_u"),
            "time_avg_proj_p": self.time_avg("proj_p"),
            "speedup": self.speedup,
            "timings": self.timings,
            **self.extras,
        }
        (d / "report.json").write_text(json.dumps(summary, indent=1))


def _write_timings(path, timings: dict) -> None:
    rows = ["stage,seconds"] + [f"{k},{v!r}" for k, v in timings.items()]
    Path(path).write_text("\n".join(rows) + "\n")


def _match_indices(query: np.ndarray, reference: np.ndarray):
    """Positions of query times inside reference times (None if absent)."""
    ref = np.asarray(reference, dtype=np.float64)
    out = []
    for t in np.asarray(query, dtype=np.float64):
        m = int(np.argmin(np.abs(ref - t)))
        out.append(m if abs(ref[m] - t) <= 1e-9 else None)
    return out


def projection_errors(snaps: SnapshotSet, hom: SnapshotSet, basis_u: ReducedBasis,
                      basis_p: ReducedBasis | None):
    """Per-time distances of homogenized snapshots to the basis spans.

    Residual fields are formed explicitly; the norm-difference shortcut
    cancels catastrophically when the span captures most of a large field.
    """
    from .grid import snapshot_matrix

    area = snaps.grid.cell_area

    def residual_norms(fields, basis):
        S = snapshot_matrix(fields)
        Phi = basis.mode_matrix()
        R = S - ((S @ Phi.T) * area) @ Phi
        return np.sqrt(np.sum(R * R, axis=1) * area)

    proj_u = residual_norms(hom.velocity, basis_u)
    proj_p = residual_norms(hom.pressure, basis_p) if basis_p is not None else None
    return proj_u, proj_p


def compare(fom_set: SnapshotSet, rom_set: SnapshotSet, basis_u: ReducedBasis | None = None,
            basis_p: ReducedBasis | None = None, lift: LiftingPair | None = None) -> RunReport:
    """Absolute per-time L2 errors plus projection errors when a basis is given."""
    if len(fom_set) != len(rom_set) or np.abs(fom_set.times - rom_set.times).max() > 1e-9:
        raise ShapeError("snapshot sets must share their time grid")
    if fom_set.grid != rom_set.grid:
        raise ShapeError("snapshot sets must share one grid")
    err_u = np.array([l2_norm(a - b) for a, b in zip(fom_set.velocity, rom_set.velocity)])
    err_p = np.array([l2_norm(a - b) for a, b in zip(fom_set.pressure, rom_set.pressure)])
    proj_u = proj_p = None
    if basis_u is not None and lift is not None:
        if fom_set.waveform is None:
            raise ConfigurationError("projection errors need the waveform metadata")
        wf = Waveform.from_dict(fom_set.waveform)
        u_d = np.array([wf.magnitude(t) for t in fom_set.times])
        hom = homogenize(fom_set, u_d, fom_set.outlet_pressure, lift)
        proj_u, proj_p = projection_errors(fom_set, hom, basis_u, basis_p)
    return RunReport(times=fom_set.times.copy(), err_u=err_u, err_p=err_p,
                     proj_u=proj_u, proj_p=proj_p)


def _integration_grid(t_start: float, t_end: float, substep: float, query: np.ndarray):
    """Uniform substep grid plus any query time not already on it."""
    n = max(1, int(round((t_end - t_start) / substep)))
    base = t_start + substep * np.arange(n + 1)
    extra = [t for t in np.asarray(query, dtype=np.float64)
             if np.abs(base - t).min() > 1e-9]
    allt = np.sort(np.concatenate([base, np.array(extra)])) if extra else base
    return allt


def online(bundle: Bundle, query_times=None, dt_r: float | None = None,
           modes: tuple | None = None, want_pressure: bool | None = None,
           timing_reps: int = 5):
    """Reduced solve + reconstruction at the query times, with a RunReport.

    dt_r sets the reduced integration step (defaults to the full-order dt
    recorded in the bundle); query times must stay within 10% beyond the
    training window.
    """
    train_times = bundle.train.times
    t_lo, t_hi = float(train_times[0]), float(train_times[-1])
    if query_times is None:
        query_times = train_times.copy()
    query_times = np.asarray(query_times, dtype=np.float64)
    span = t_hi - t_lo
    if query_times.min() < t_lo - 0.1 * span or query_times.max() > t_hi + 0.1 * span:
        raise ConfigurationError("query times exceed the training window by more than 10%")

    if want_pressure is None:
        want_pressure = not bundle.velocity_only
    if want_pressure and bundle.velocity_only:
        raise ConfigurationError("bundle is velocity-only; pressure queries are not available")

    n_u = n_p = None
    if modes is not None:
        n_u, n_p = modes
    idx, n_p = bundle.mode_selection(n_u, n_p if want_pressure else 0)
    ops = bundle.operators.subset(idx, n_p)
    bu = bundle.sliced_basis_u(idx)
    bp = bundle.sliced_basis_p(n_p)

    substep = bundle.dt_fom if dt_r is None else float(dt_r)
    grid_times = _integration_grid(t_lo, max(t_hi, query_times.max()), substep, query_times)

    u_d0 = bundle.waveform.magnitude(t_lo)
    hom0_u = Field(bundle.grid, "vector2",
                   bundle.train.velocity[0].values - u_d0 * bundle.lifting.chi_u.values)
    a0 = project_coefficients(hom0_u, bu)
    b0 = None
    if bp is not None:
        p0 = bundle.train.pressure[0].values.copy()
        if bundle.lift_pressure and bundle.train.outlet_pressure is not None:
            for k in range(bundle.lifting.n_outlets):
                p0 = p0 - bundle.train.outlet_pressure[0, k] * bundle.lifting.chi_p[k].values
        b0 = project_coefficients(Field(bundle.grid, "scalar", p0), bp)

    p_d = bundle.outlet_pressure_fn() if bundle.lift_pressure else None

    solve_times = []
    traj = None
    for _ in range(max(1, timing_reps)):
        t0 = time.perf_counter()
        traj = integrate_rom(ops, a0, grid_times, bundle.waveform, p_d, b0=b0)
        solve_times.append(time.perf_counter() - t0)
    t_solve = float(np.median(solve_times))

    t0 = time.perf_counter()
    rec_full = reconstruct(bu, bp, traj, bundle.lifting, bundle.waveform, p_d, nu=bundle.nu)
    t_reconstruct = time.perf_counter() - t0

    pos = _match_indices(query_times, grid_times)
    if any(p is None for p in pos):
        raise ShapeError("query times missing from the integration grid")
    rec = SnapshotSet(query_times, [rec_full.velocity[p] for p in pos],
                      [rec_full.pressure[p] for p in pos], nu=bundle.nu,
                      waveform=bundle.waveform.to_dict(),
                      outlet_pressure=None if rec_full.outlet_pressure is None
                      else rec_full.outlet_pressure[pos])

    # errors against whichever stored set covers the query times
    report = RunReport(times=query_times.copy(), err_u=None, err_p=None,
                       proj_u=None, proj_p=None)
    for ref in (bundle.train, bundle.fine):
        at = _match_indices(query_times, ref.times)
        if all(p is not None for p in at):
            ref_sub = SnapshotSet(query_times, [ref.velocity[p] for p in at],
                                  [ref.pressure[p] for p in at], ref.nu, ref.waveform,
                                  None if ref.outlet_pressure is None else ref.outlet_pressure[at])
            cmp = compare(ref_sub, rec, bu, bp, bundle.lifting)
            report.err_u, report.err_p = cmp.err_u, cmp.err_p
            report.proj_u, report.proj_p = cmp.proj_u, cmp.proj_p
            break
    if bp is None:
        report.err_p = None
        report.proj_p = None

    report.spectrum_u = bundle.basis_u.eigenvalues.copy()
    report.spectrum_p = None if bundle.basis_p is None else bundle.basis_p.eigenvalues.copy()
    report.timings = {"rom_solve": t_solve, "reconstruct": t_reconstruct,
                      "fom_recorded": bundle.fom_wall_time}
    report.speedup = bundle.fom_wall_time / t_solve if t_solve > 0 else None
    report.extras = {
        "n_u": int(len(idx) - n_p), "n_p": int(n_p), "n_supremizer": int(n_p),
        "dt_r": substep, "velocity_only": bundle.velocity_only,
        "windkessel_params": {k: str(v) for k, v in bundle.config.items()
                              if k.startswith("wk_")},
        "nn_hyperparameters": {k: bundle.config[k] for k in bundle.config
                               if k.startswith("nn_")},
        "reference_nn_defaults": {k: str(v) for k, v in REFERENCE_NN_DEFAULTS.items()},
    }
    return rec, report


def error_vs_n(bundle: Bundle, n_values=None, dt_r: float | None = None) -> list:
    """One-pass sweep over mode counts by slicing the stored basis/operators.

    Follows the reference convention that one N counts velocity modes,
    pressure modes and supremizers alike.
    """
    if n_values is None:
        knee = truncation_rank(bundle.basis_u.eigenvalues, 0.9999)
        n_values = range(1, max(2, knee) + 1)
    out = []
    for n in n_values:
        n_p = min(n, bundle.basis_p.n_modes if bundle.basis_p is not None else 0)
        rec, rep = online(bundle, modes=(n, n_p), dt_r=dt_r, timing_reps=1)
        out.append({
            "N": int(n),
            "err_u": rep.time_avg("err_u"),
            "err_p": rep.time_avg("err_p"),
            "proj_u": rep.time_avg("proj_u"),
            "proj_p": rep.time_avg("proj_p"),
        })
    return out
