"""Stationary reduced basis on the affine two-domain diffusion problem.

Offline: a handful of full solves and an energy-product POD.  Online: the
compliant output from an N x N system whose cost does not depend on the
full dimension.
"""

import time

import numpy as np

from romkit import demo_problem, fom_solve, rb_offline, rb_online

problem = demo_problem(n_dof=4096)
print(f"problem: {problem.name}, N_delta = {problem.n_dof}, "
      f"Q_a = {problem.Q_a}, Q_f = {problem.Q_f}, box {problem.param_box[0]}")

train = np.linspace(0.1, 10.0, 10)[:, None]
print(f"{'N':>3} {'max |s_fom - s_rb|':>20}")
for n in (1, 2, 3):
    space = rb_offline(problem, train, n_modes=n)
    errs = []
    for mu in np.linspace(0.12, 9.95, 25):
        _, s_fom = fom_solve(problem, [mu])
        _, s_rb = rb_online(space, [mu])
        errs.append(abs(s_fom - s_rb))
    print(f"{n:3d} {max(errs):20.3e}")

space = rb_offline(problem, train, n_modes=3)
mu = np.array([3.3])
fom_solve(problem, mu)
rb_online(space, mu)
t_fom = []
for _ in range(7):
    t0 = time.perf_counter()
    fom_solve(problem, mu)
    t_fom.append(time.perf_counter() - t0)
t_rb = []
for _ in range(300):
    t0 = time.perf_counter()
    rb_online(space.reduced, mu)
    t_rb.append(time.perf_counter() - t0)
print(f"timings at N_delta=4096: full solve {1e3 * np.median(t_fom):.2f}ms, "
      f"online {1e6 * np.median(t_rb):.1f}us "
      f"-> {np.median(t_fom) / np.median(t_rb):.0f}x")
print(f"POD spectrum (Kolmogorov-width proxy): "
      f"{np.array2string(space.eigenvalues[:5], precision=2)}")
