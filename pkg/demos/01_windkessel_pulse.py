"""Three-element Windkessel outlet driven by a pulsatile flow rate.

Integrates the RCR state through a few cardiac cycles, prints the pressure
envelope, and checks the analytic steady limit (Rp + Rd) * Q under constant
flow.
"""

import numpy as np

from romkit import WindkesselParams, WindkesselState, wk_steady_pressure, wk_step

params = WindkesselParams(Rp=35.0, Rd=590.0, C=8e-4)
print(f"outlet parameters: Rp={params.Rp}, Rd={params.Rd}, C={params.C}  (tau={params.tau:.3f}s)")

t_cycle, dt = 0.6, 1e-3
state = WindkesselState()
trace = []
for _ in range(round(5 * t_cycle / dt)):
    s = np.mod(state.t, t_cycle)
    q = 4.0 * np.sin(np.pi * s / 0.24) if s < 0.24 else 0.0  # systolic burst
    state = wk_step(state, q, dt, params)
    trace.append((state.t, state.p))

trace = np.array(trace)
last = trace[trace[:, 0] > 4 * t_cycle]
print(f"pulsatile response after 5 cycles: p in [{last[:,1].min():.1f}, {last[:,1].max():.1f}]")

q_const = 1.0
state = WindkesselState()
for _ in range(20000):
    state = wk_step(state, q_const, 0.2 * params.tau, params)
analytic = wk_steady_pressure(q_const, params)
print(f"constant-flow fixed point: iterated {state.p:.6f} vs analytic {analytic:.6f} "
      f"(deviation {abs(state.p - analytic) / analytic:.2e})")
