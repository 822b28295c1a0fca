"""Single-tank pump-scheduling problem.

A bank of variable-speed pumps fills one storage tank against a diurnal
demand profile. Pump operating points follow the affinity laws (flow
scales with speed, head with speed squared), the tank follows hourly mass
balance, and a schedule is feasible when the level never drops below a
pressure-proxy floor and the day ends at least as full as it began.
Energy is billed per step against a time-of-use tariff.

All functions are pure in (schedule, config); safe to evaluate from
worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import Problem
from .kernels import Decomposition, SearchSpace

__all__ = [
    "PumpModel",
    "NetworkConfig",
    "HydraulicState",
    "simulate",
    "energy_cost",
    "pso_problem",
    "default_config",
    "load_config",
    "DEFAULT_PENALTY",
]

DEFAULT_PENALTY = 1000.0


@dataclass(frozen=True)
class PumpModel:
    """A variable-speed pump: rated flow (m^3/s), rated head (m), and
    wire-to-water efficiency."""

    rated_flow: float
    rated_head: float
    efficiency: float

    def __post_init__(self) -> None:
        if self.rated_flow <= 0 or self.rated_head <= 0:
            raise ValueError("rated flow and head must be positive")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must be in (0, 1]")


@dataclass(frozen=True)
class NetworkConfig:
    """Pumps, horizon, tariff/demand profiles, and the tank geometry.

    tariff is $/kWh per step, demand is m^3/s per step; both must have
    length ``horizon``. Levels are meters, the tank area m^2, and
    ``specific_weight`` kN/m^3 so that flow x head / efficiency is kW.
    """

    pumps: tuple[PumpModel, ...]
    horizon: int
    dt_hours: float
    tariff: np.ndarray
    demand: np.ndarray
    tank_area: float
    initial_level: float
    min_level: float
    max_level: float
    min_pressure_level: float
    specific_weight: float = 9.81

    def __post_init__(self) -> None:
        object.__setattr__(self, "tariff", np.asarray(self.tariff, dtype=float))
        object.__setattr__(self, "demand", np.asarray(self.demand, dtype=float))
        if not self.pumps:
            raise ValueError("at least one pump is required")
        if self.horizon < 1 or self.dt_hours <= 0:
            raise ValueError("horizon and dt_hours must be positive")
        if self.tariff.shape != (self.horizon,) or self.demand.shape != (self.horizon,):
            raise ValueError("tariff and demand must have one entry per step")
        if np.any(self.tariff < 0) or np.any(self.demand < 0):
            raise ValueError("tariff and demand must be nonnegative")
        if self.tank_area <= 0:
            raise ValueError("tank area must be positive")
        if not self.min_level < self.initial_level < self.max_level:
            raise ValueError("tank levels must satisfy min < initial < max")

    @property
    def n_pumps(self) -> int:
        return len(self.pumps)

    @property
    def dim(self) -> int:
        return self.horizon * self.n_pumps


@dataclass
class HydraulicState:
    """Simulation output: flows and heads are (horizon, n_pumps), levels
    has one extra leading entry for the initial level, spill is the total
    overflow volume in m^3. violation sums level deficits in meters."""

    flows: np.ndarray
    heads: np.ndarray
    levels: np.ndarray
    spill: float
    feasible: bool
    violation: float


def simulate(schedule: np.ndarray, cfg: NetworkConfig) -> HydraulicState:
    """Run the tank recurrence for a (horizon, n_pumps) speed matrix.

    level_{t+1} = level_t + dt*3600*(sum_k Q_k^t - demand_t)/area, clamped
    at the tank top (excess spills) but not at the bottom; deficits below
    the pressure floor accumulate into the violation instead.
    """
    x = np.asarray(schedule, dtype=float)
    if x.shape != (cfg.horizon, cfg.n_pumps):
        raise ValueError(
            f"schedule must have shape {(cfg.horizon, cfg.n_pumps)}, got {x.shape}"
        )
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("pump speeds must lie in [0, 1]")

    q_rated = np.array([p.rated_flow for p in cfg.pumps])
    h_rated = np.array([p.rated_head for p in cfg.pumps])
    flows = x * q_rated
    heads = x**2 * h_rated

    levels = np.empty(cfg.horizon + 1)
    levels[0] = cfg.initial_level
    seconds = cfg.dt_hours * 3600.0
    spill = 0.0
    for t in range(cfg.horizon):
        inflow = float(flows[t].sum()) - cfg.demand[t]
        nxt = levels[t] + seconds * inflow / cfg.tank_area
        if nxt > cfg.max_level:
            spill += (nxt - cfg.max_level) * cfg.tank_area
            nxt = cfg.max_level
        levels[t + 1] = nxt

    deficits = np.maximum(cfg.min_pressure_level - levels, 0.0)
    shortfall = max(cfg.initial_level - levels[-1], 0.0)
    violation = float(deficits.sum() + shortfall)
    feasible = bool(np.all(levels >= cfg.min_pressure_level) and shortfall == 0.0)
    return HydraulicState(
        flows=flows,
        heads=heads,
        levels=levels,
        spill=float(spill),
        feasible=feasible,
        violation=violation,
    )


def energy_cost(schedule: np.ndarray, state: HydraulicState, cfg: NetworkConfig) -> float:
    """Dollars for the schedule: dt * sum_t c_t * sum_k gamma*x*Q*H/eta.

    gamma (kN/m^3) times Q (m^3/s) times H (m) is kW, so each term is
    kW x hours x $/kWh.
    """
    x = np.asarray(schedule, dtype=float)
    eta = np.array([p.efficiency for p in cfg.pumps])
    power_kw = cfg.specific_weight * x * state.flows * state.heads / eta
    step_cost = cfg.tariff * power_kw.sum(axis=1)
    return float(cfg.dt_hours * step_cost.sum())


def pso_problem(cfg: NetworkConfig, penalty: float = DEFAULT_PENALTY) -> Problem:
    """Wrap the scheduling task as a flat box-bounded Problem.

    The decision vector concatenates one speed per pump per step, grouped
    by step, so the decomposition has ``horizon`` groups of ``n_pumps``
    variables. Infeasible schedules score cost + penalty*(1 + violation).
    """
    if penalty <= 0:
        raise ValueError("penalty must be positive")
    d = cfg.dim

    def objective(flat: np.ndarray) -> tuple[float, bool]:
        schedule = np.asarray(flat, dtype=float).reshape(cfg.horizon, cfg.n_pumps)
        state = simulate(schedule, cfg)
        cost = energy_cost(schedule, state, cfg)
        if state.feasible:
            return cost, True
        return cost + penalty * (1.0 + state.violation), False

    groups = tuple(
        tuple(range(t * cfg.n_pumps, (t + 1) * cfg.n_pumps)) for t in range(cfg.horizon)
    )
    return Problem(
        space=SearchSpace(np.zeros(d), np.ones(d)),
        objective=objective,
        decomposition=Decomposition(groups),
        known_optimum=None,
        name="watersim",
        failure_value=2.0 * penalty,
    )


def default_config() -> NetworkConfig:
    """Four identical pumps against a two-peak day and a cheap-night tariff.

    Sized so that leaving every pump off drains the tank below the
    pressure floor within hours, full speed all day stays comfortably
    feasible, and random schedules span a wide cost range. Rated flow
    leaves ample headroom over demand: per-volume energy grows with the
    cube of pump speed, so most of the cost range comes from how far a
    schedule throttles down, not from skirting infeasibility.
    """
    tariff = np.where(_night_mask(24), 0.05, 0.20)
    demand = np.array(
        [
            0.05, 0.05, 0.05, 0.05, 0.05, 0.05,   # night
            0.10, 0.13, 0.13, 0.10,               # morning peak
            0.07, 0.07, 0.07, 0.07, 0.07, 0.07, 0.07,  # daytime
            0.12, 0.14, 0.14, 0.12,               # evening peak
            0.09, 0.07, 0.05,                     # wind-down
        ]
    )
    pump = PumpModel(rated_flow=0.08, rated_head=40.0, efficiency=0.75)
    return NetworkConfig(
        pumps=(pump,) * 4,
        horizon=24,
        dt_hours=1.0,
        tariff=tariff,
        demand=demand,
        tank_area=600.0,
        initial_level=3.0,
        min_level=0.0,
        max_level=6.0,
        min_pressure_level=1.5,
    )


def _night_mask(T: int) -> np.ndarray:
    hours = np.arange(T) % 24
    return (hours < 7) | (hours >= 22)


_SCALAR_KEYS = {
    "q_rated": float,
    "h_rated": float,
    "efficiency": float,
    "pumps": int,
    "horizon": int,
    "dt_hours": float,
    "tank_area": float,
    "initial_level": float,
    "min_level": float,
    "max_level": float,
    "min_pressure_level": float,
    "specific_weight": float,
}
_VECTOR_KEYS = ("tariff", "demand")


def load_config(path) -> NetworkConfig:
    """Read a NetworkConfig from a flat key=value file.

    Lines are ``key = value``; blank lines and ``#`` comments are skipped.
    Unset keys keep their defaults. Recognized keys:

    - pumps (count), q_rated (m^3/s), h_rated (m), efficiency: a uniform
      pump bank
    - horizon (steps), dt_hours
    - tariff, demand: comma-separated lists, one entry per step
    - tank_area, initial_level, min_level, max_level, min_pressure_level
    - specific_weight (kN/m^3)
    """
    base = default_config()
    values: dict[str, object] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key in _SCALAR_KEYS:
                values[key] = _SCALAR_KEYS[key](val)
            elif key in _VECTOR_KEYS:
                values[key] = np.array([float(v) for v in val.split(",")])
            else:
                raise ValueError(f"unknown config key {key!r} at {path}:{lineno}")

    pump0 = base.pumps[0]
    pump = PumpModel(
        rated_flow=float(values.get("q_rated", pump0.rated_flow)),
        rated_head=float(values.get("h_rated", pump0.rated_head)),
        efficiency=float(values.get("efficiency", pump0.efficiency)),
    )
    n_pumps = int(values.get("pumps", base.n_pumps))
    if n_pumps < 1:
        raise ValueError("pumps must be at least 1")
    horizon = int(values.get("horizon", base.horizon))
    tariff = values.get("tariff", base.tariff)
    demand = values.get("demand", base.demand)
    if horizon != base.horizon:
        # profiles must be respecified when the horizon changes
        for key in _VECTOR_KEYS:
            if key not in values:
                raise ValueError(f"config sets horizon={horizon} but not {key}")
    return NetworkConfig(
        pumps=(pump,) * n_pumps,
        horizon=horizon,
        dt_hours=float(values.get("dt_hours", base.dt_hours)),
        tariff=tariff,
        demand=demand,
        tank_area=float(values.get("tank_area", base.tank_area)),
        initial_level=float(values.get("initial_level", base.initial_level)),
        min_level=float(values.get("min_level", base.min_level)),
        max_level=float(values.get("max_level", base.max_level)),
        min_pressure_level=float(values.get("min_pressure_level", base.min_pressure_level)),
        specific_weight=float(values.get("specific_weight", base.specific_weight)),
    )
