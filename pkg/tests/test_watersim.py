"""Hydraulics, billing, and calibration of the pump-scheduling problem."""

import numpy as np
import pytest

from addbo.watersim import (
    DEFAULT_PENALTY,
    NetworkConfig,
    PumpModel,
    default_config,
    energy_cost,
    load_config,
    pso_problem,
    simulate,
)


def _one_pump_config(demand=0.02, area=100.0, horizon=1, tariff=0.1):
    return NetworkConfig(
        pumps=(PumpModel(rated_flow=0.05, rated_head=40.0, efficiency=0.75),),
        horizon=horizon,
        dt_hours=1.0,
        tariff=np.full(horizon, tariff),
        demand=np.full(horizon, demand),
        tank_area=area,
        initial_level=3.0,
        min_level=0.0,
        max_level=50.0,
        min_pressure_level=1.5,
    )


class TestSimulate:
    def test_single_step_level_rise(self):
        # net inflow 0.05 - 0.02 = 0.03 m^3/s over an hour into 100 m^2
        cfg = _one_pump_config()
        state = simulate(np.ones((1, 1)), cfg)
        assert state.levels[1] - state.levels[0] == pytest.approx(1.08, abs=1e-12)

    def test_idle_with_demand_drains_and_is_infeasible(self):
        cfg = _one_pump_config(demand=0.05, horizon=24)
        state = simulate(np.zeros((24, 1)), cfg)
        assert np.all(np.diff(state.levels) < 0)
        assert not state.feasible
        assert state.violation > 0

    def test_idle_without_demand_holds_level(self):
        cfg = _one_pump_config(demand=0.0, horizon=6)
        state = simulate(np.zeros((6, 1)), cfg)
        assert np.all(state.levels == cfg.initial_level)
        assert state.feasible
        assert state.violation == 0.0

    def test_affinity_laws(self):
        cfg = _one_pump_config()
        state = simulate(np.full((1, 1), 0.5), cfg)
        assert state.flows[0, 0] == pytest.approx(0.025, abs=1e-15)
        assert state.heads[0, 0] == pytest.approx(10.0, abs=1e-12)

    def test_final_below_initial_is_infeasible(self):
        # level stays above the pressure floor but ends short of the start
        cfg = _one_pump_config(demand=0.01, horizon=4)
        state = simulate(np.zeros((4, 1)), cfg)
        assert np.all(state.levels >= cfg.min_pressure_level)
        assert not state.feasible
        assert state.violation == pytest.approx(
            cfg.initial_level - state.levels[-1], abs=1e-12
        )

    def test_rejects_bad_speeds_and_shape(self):
        cfg = _one_pump_config()
        with pytest.raises(ValueError):
            simulate(np.full((1, 1), 1.2), cfg)
        with pytest.raises(ValueError):
            simulate(np.full((1, 1), -0.1), cfg)
        with pytest.raises(ValueError):
            simulate(np.zeros((2, 1)), cfg)

    def test_mass_balance_with_spill(self):
        cfg = default_config()
        rng = np.random.default_rng(7)
        seconds = cfg.dt_hours * 3600.0
        for _ in range(25):
            x = rng.random((cfg.horizon, cfg.n_pumps))
            state = simulate(x, cfg)
            net = seconds * float((state.flows.sum(axis=1) - cfg.demand).sum())
            dv = (state.levels[-1] - state.levels[0]) * cfg.tank_area
            assert dv == pytest.approx(net - state.spill, abs=1e-9)

    def test_feasibility_monotone_in_speed(self):
        cfg = default_config()
        rng = np.random.default_rng(11)
        for _ in range(20):
            x = rng.random((cfg.horizon, cfg.n_pumps))
            if not simulate(x, cfg).feasible:
                continue
            bumped = x.copy()
            t = rng.integers(cfg.horizon)
            k = rng.integers(cfg.n_pumps)
            bumped[t, k] = min(1.0, bumped[t, k] + rng.random() * (1 - bumped[t, k]))
            assert simulate(bumped, cfg).feasible


class TestEnergyCost:
    def test_hand_example(self):
        # 9.81 * 0.05 * 40 / 0.75 = 26.16 kW for one hour at $0.1/kWh
        cfg = _one_pump_config()
        x = np.ones((1, 1))
        state = simulate(x, cfg)
        assert energy_cost(x, state, cfg) == pytest.approx(2.616, abs=1e-9)

    def test_zero_schedule_is_free(self):
        cfg = default_config()
        x = np.zeros((cfg.horizon, cfg.n_pumps))
        assert energy_cost(x, simulate(x, cfg), cfg) == 0.0

    def test_tariff_linearity(self):
        cfg = default_config()
        rng = np.random.default_rng(5)
        x = rng.random((cfg.horizon, cfg.n_pumps))
        state = simulate(x, cfg)
        base = energy_cost(x, state, cfg)
        doubled = NetworkConfig(
            pumps=cfg.pumps,
            horizon=cfg.horizon,
            dt_hours=cfg.dt_hours,
            tariff=2.0 * cfg.tariff,
            demand=cfg.demand,
            tank_area=cfg.tank_area,
            initial_level=cfg.initial_level,
            min_level=cfg.min_level,
            max_level=cfg.max_level,
            min_pressure_level=cfg.min_pressure_level,
        )
        assert energy_cost(x, state, doubled) == pytest.approx(2.0 * base, rel=1e-12)

    def test_cost_monotone_in_single_speed(self):
        cfg = default_config()
        rng = np.random.default_rng(6)
        for _ in range(20):
            x = rng.random((cfg.horizon, cfg.n_pumps))
            base = energy_cost(x, simulate(x, cfg), cfg)
            bumped = x.copy()
            t = rng.integers(cfg.horizon)
            k = rng.integers(cfg.n_pumps)
            bumped[t, k] = min(1.0, bumped[t, k] + 0.1)
            assert energy_cost(bumped, simulate(bumped, cfg), cfg) >= base


class TestProblem:
    def test_dimensions_and_groups(self):
        p = pso_problem(default_config())
        assert p.space.dim == 96
        assert p.decomposition.n_groups == 24
        assert all(len(g) == 4 for g in p.decomposition.groups)
        assert p.decomposition.groups[1] == (4, 5, 6, 7)
        assert p.decomposition.effective_dim == 4

    def test_objective_returns_cost_and_flag(self):
        cfg = default_config()
        p = pso_problem(cfg)
        y, ok = p.objective(np.ones(96))
        assert ok
        state = simulate(np.ones((24, 4)), cfg)
        assert y == pytest.approx(energy_cost(np.ones((24, 4)), state, cfg), rel=1e-12)
        assert y > 0

    def test_infeasible_pays_more_than_its_cost(self):
        cfg = default_config()
        p = pso_problem(cfg)
        y, ok = p.objective(np.zeros(96))
        assert not ok
        assert y > DEFAULT_PENALTY

    def test_penalty_validation(self):
        with pytest.raises(ValueError):
            pso_problem(default_config(), penalty=0.0)


class TestDefaultConfig:
    def test_always_off_is_infeasible(self):
        cfg = default_config()
        assert not simulate(np.zeros((cfg.horizon, cfg.n_pumps)), cfg).feasible

    def test_always_on_is_feasible(self):
        cfg = default_config()
        state = simulate(np.ones((cfg.horizon, cfg.n_pumps)), cfg)
        assert state.feasible
        assert np.all(state.levels >= cfg.min_pressure_level)

    def test_random_schedules_spread_costs(self):
        cfg = default_config()
        on = np.ones((cfg.horizon, cfg.n_pumps))
        cost_on = energy_cost(on, simulate(on, cfg), cfg)
        rng = np.random.default_rng(1234)
        best = np.inf
        for _ in range(500):
            x = rng.random((cfg.horizon, cfg.n_pumps))
            state = simulate(x, cfg)
            if state.feasible:
                best = min(best, energy_cost(x, state, cfg))
        assert np.isfinite(best)
        assert (cost_on - best) / cost_on >= 0.30

    def test_profiles_cover_the_day(self):
        cfg = default_config()
        assert cfg.horizon == 24
        assert cfg.tariff.shape == (24,)
        assert cfg.demand.shape == (24,)
        # cheap nights, expensive daytime
        assert cfg.tariff[0] < cfg.tariff[12]


class TestLoadConfig:
    def test_overrides_and_defaults(self, tmp_path):
        path = tmp_path / "net.cfg"
        path.write_text("tank_area = 800\n# comment\n\nefficiency=0.8\n")
        cfg = load_config(path)
        assert cfg.tank_area == 800.0
        assert cfg.pumps[0].efficiency == 0.8
        assert cfg.horizon == 24
        assert np.array_equal(cfg.demand, default_config().demand)

    def test_vector_override(self, tmp_path):
        path = tmp_path / "net.cfg"
        tariff = ",".join(["0.1"] * 24)
        path.write_text(f"tariff = {tariff}\n")
        cfg = load_config(path)
        assert np.all(cfg.tariff == 0.1)

    def test_unknown_key_is_named(self, tmp_path):
        path = tmp_path / "net.cfg"
        path.write_text("tank_volume = 3\n")
        with pytest.raises(ValueError, match="tank_volume"):
            load_config(path)

    def test_horizon_change_requires_profiles(self, tmp_path):
        path = tmp_path / "net.cfg"
        path.write_text("horizon = 12\n")
        with pytest.raises(ValueError, match="horizon"):
            load_config(path)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "net.cfg"
        path.write_text("just some words\n")
        with pytest.raises(ValueError):
            load_config(path)


class TestValidation:
    def test_pump_validation(self):
        with pytest.raises(ValueError):
            PumpModel(rated_flow=-1.0, rated_head=40.0, efficiency=0.75)
        with pytest.raises(ValueError):
            PumpModel(rated_flow=0.05, rated_head=40.0, efficiency=1.5)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            _one_pump_config(horizon=0)
        with pytest.raises(ValueError):
            NetworkConfig(
                pumps=(PumpModel(0.05, 40.0, 0.75),),
                horizon=2,
                dt_hours=1.0,
                tariff=np.array([0.1]),  # wrong length
                demand=np.array([0.02, 0.02]),
                tank_area=100.0,
                initial_level=3.0,
                min_level=0.0,
                max_level=6.0,
                min_pressure_level=1.5,
            )
