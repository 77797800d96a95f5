import math

import pytest

from romkit.errors import ConfigurationError
from romkit.windkessel import (
    REFERENCE_OUTLET_PARAMS,
    WindkesselParams,
    WindkesselState,
    load_params_csv,
    save_params_csv,
    wk_steady_pressure,
    wk_step,
)


def iterate_to_steady(Q, params, dt, max_steps=10_000_000):
    s = WindkesselState()
    for _ in range(max_steps):
        s_new = wk_step(s, Q, dt, params)
        if abs(s_new.pp - s.pp) < 1e-12 * max(abs(s_new.pp), 1e-300):
            return s_new
        s = s_new
    raise AssertionError("no steady state reached")


class TestStep:
    def test_rest_state_stays_at_rest(self):
        params = WindkesselParams(1.0, 2.0, 3.0)
        s = wk_step(WindkesselState(), Q=0.0, dt=0.1, params=params)
        assert s.pp == 0.0 and s.p == 0.0 and s.t == 0.1

    def test_rsa_row_reaches_series_resistance_limit(self):
        params = REFERENCE_OUTLET_PARAMS["RSA"]
        Q = 1e-5
        s = iterate_to_steady(Q, params, dt=0.2 * params.tau)
        assert s.p == pytest.approx((params.Rp + params.Rd) * Q, rel=1e-6)

    def test_relaxation_matches_exponential_first_order(self):
        params = WindkesselParams(Rp=1.0, Rd=2.0, C=0.5)
        tau = params.tau

        def run(dt, t_end):
            s = WindkesselState(pp=1.0, p=1.0, t=0.0)
            for _ in range(round(t_end / dt)):
                s = wk_step(s, 0.0, dt, params)
            return s.pp

        t_end = 0.4 * tau
        exact = math.exp(-t_end / tau)
        e1 = abs(run(t_end / 40, t_end) - exact)
        e2 = abs(run(t_end / 80, t_end) - exact)
        assert 1.8 <= e1 / e2 <= 2.2

    def test_euler_formula_single_step(self):
        params = WindkesselParams(Rp=3.0, Rd=7.0, C=0.25)
        s0 = WindkesselState(pp=2.0, p=0.0, t=1.0)
        Q, dt = 0.4, 0.05
        s1 = wk_step(s0, Q, dt, params)
        pp = 2.0 + (dt / params.C) * (Q - 2.0 / params.Rd)
        assert s1.pp == pytest.approx(pp, rel=1e-15)
        assert s1.p == pytest.approx(pp + params.Rp * Q, rel=1e-15)

    def test_bad_dt_rejected(self):
        params = WindkesselParams(1.0, 2.0, 3.0)
        with pytest.raises(ValueError):
            wk_step(WindkesselState(), 0.0, 0.0, params)
        with pytest.raises(ValueError):
            wk_step(WindkesselState(), 0.0, params.tau, params)

    def test_linearity_in_flow(self):
        params = WindkesselParams(Rp=2.0, Rd=5.0, C=0.1)
        alpha = 3.5
        s = WindkesselState(pp=0.7, p=0.9, t=0.0)
        s_scaled = WindkesselState(pp=alpha * 0.7, p=alpha * 0.9, t=0.0)
        a = wk_step(s, 0.2, 0.01, params)
        b = wk_step(s_scaled, alpha * 0.2, 0.01, params)
        assert b.pp == pytest.approx(alpha * a.pp, rel=1e-14)
        assert b.p == pytest.approx(alpha * a.p, rel=1e-14)


class TestSteadyPressure:
    def test_zero_flow(self):
        assert wk_steady_pressure(0.0, WindkesselParams(1.0, 2.0, 3.0)) == 0.0

    def test_da_row_value(self):
        p = wk_steady_pressure(1e-5, REFERENCE_OUTLET_PARAMS["DA"])
        assert p == pytest.approx(1.388e3, rel=1e-12)

    def test_matches_iterated_fixed_point_random(self, rng):
        for _ in range(5):
            params = WindkesselParams(
                Rp=10 ** rng.uniform(0, 8),
                Rd=10 ** rng.uniform(0, 9),
                C=10 ** rng.uniform(-9, -1),
            )
            Q = 10 ** rng.uniform(-6, -2)
            s = iterate_to_steady(Q, params, dt=0.2 * params.tau)
            assert s.p == pytest.approx(wk_steady_pressure(Q, params), rel=1e-3)

    def test_convergence_anywhere_below_tau(self, rng):
        params = WindkesselParams(Rp=1.0, Rd=3.0, C=0.7)
        for frac in (0.05, 0.5, 0.9):
            s = iterate_to_steady(0.3, params, dt=frac * params.tau)
            assert s.p == pytest.approx(wk_steady_pressure(0.3, params), rel=1e-3)


class TestParamsIO:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            WindkesselParams(0.0, 1.0, 1.0)
        with pytest.raises(ConfigurationError):
            WindkesselParams(1.0, 1.0, -1.0)

    def test_csv_roundtrip(self, tmp_path):
        params = {0: WindkesselParams(1.84e8, 3.11e9, 3.26e-5), 1: WindkesselParams(7.8e6, 1.31e8, 7.72e-9)}
        path = tmp_path / "wk.csv"
        save_params_csv(path, params)
        loaded = load_params_csv(path)
        assert loaded == params

    def test_csv_header_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("outlet,Rp,Rd\n0,1,2\n")
        with pytest.raises(ConfigurationError):
            load_params_csv(path)
