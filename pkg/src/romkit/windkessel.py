"""Three-element (RCR) Windkessel outlet model.

State equations for one outlet, discretized with explicit first-order Euler:

    C dp_p/dt + (p_p - p_d)/R_d = Q
    p = p_p + R_p Q

with distal reference pressure p_d fixed to zero.  The steady limit for a
constant flow rate is p = (R_p + R_d) Q, which serves as a test oracle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class WindkesselParams:
    Rp: float
    Rd: float
    C: float
    pd: float = 0.0

    def __post_init__(self):
        if not (self.Rp > 0 and self.Rd > 0 and self.C > 0):
            raise ConfigurationError(
                f"Windkessel parameters must be positive: Rp={self.Rp}, Rd={self.Rd}, C={self.C}"
            )
        if self.pd != 0.0:
            raise ConfigurationError("distal reference pressure pd is fixed to 0")

    @property
    def tau(self) -> float:
        """Relaxation time R_d * C of the proximal pressure."""
        return self.Rd * self.C


@dataclass(frozen=True)
class WindkesselState:
    pp: float = 0.0
    p: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite([self.pp, self.p, self.t])):
            raise ConfigurationError("Windkessel state must be finite")


def wk_step(state: WindkesselState, Q: float, dt: float, params: WindkesselParams) -> WindkesselState:
    """One explicit Euler step; outflow Q is positive out of the domain.

    Rejects dt >= Rd*C, where the explicit proximal-pressure update starts to
    lose the monotone relaxation of the continuous model.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if dt >= params.tau:
        raise ValueError(
            f"dt={dt} >= Rd*C={params.tau}: explicit Windkessel step rejected as unstable"
        )
    pp = state.pp + (dt / params.C) * (Q - (state.pp - params.pd) / params.Rd)
    return WindkesselState(pp=pp, p=pp + params.Rp * Q, t=state.t + dt)


def wk_steady_pressure(Q: float, params: WindkesselParams) -> float:
    """Fixed point of wk_step under constant Q: (Rp + Rd) Q + pd."""
    return (params.Rp + params.Rd) * Q + params.pd


def load_params_csv(path) -> dict[int, WindkesselParams]:
    """Read per-outlet parameters from a CSV with header outlet,Rp,Rd,C."""
    out: dict[int, WindkesselParams] = {}
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"outlet", "Rp", "Rd", "C"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise ConfigurationError(
                f"Windkessel CSV must have header outlet,Rp,Rd,C, got {reader.fieldnames}"
            )
        for row in reader:
            k = int(row["outlet"])
            if k in out:
                raise ConfigurationError(f"duplicate outlet {k} in {path}")
            out[k] = WindkesselParams(float(row["Rp"]), float(row["Rd"]), float(row["C"]))
    if not out:
        raise ConfigurationError(f"no Windkessel rows in {path}")
    return out


def save_params_csv(path, params: dict[int, WindkesselParams]) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["outlet", "Rp", "Rd", "C"])
        for k in sorted(params):
            p = params[k]
            writer.writerow([k, repr(p.Rp), repr(p.Rd), repr(p.C)])


# Parameter rows of the reference hemodynamic configuration (per-outlet
# proximal/distal resistance and compliance), loaded verbatim; the RSA
# compliance is orders of magnitude above its siblings and is surfaced
# unmodified in reports.
REFERENCE_OUTLET_PARAMS = {
    "RSA": WindkesselParams(Rp=1.84e8, Rd=3.11e9, C=3.26e-5),
    "RCA": WindkesselParams(Rp=1.23e8, Rd=2.07e9, C=5.16e-10),
    "LCA": WindkesselParams(Rp=1.78e8, Rd=3.01e9, C=3.52e-10),
    "LSA": WindkesselParams(Rp=7.09e7, Rd=1.19e9, C=9.35e-10),
    "DA": WindkesselParams(Rp=7.8e6, Rd=1.31e8, C=7.72e-9),
}
