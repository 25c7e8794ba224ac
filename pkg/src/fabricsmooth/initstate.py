"""Randomized starting states for the three difficulty tiers.

Tier 1 lightly perturbs a flat fabric with short pulls (high coverage, all
corners visible). Tier 2 drops the fabric from a vertical pose over a plane
edge, drags a top corner toward the center, then drags nearby fabric over
that corner to occlude it (medium coverage). Tier 3 lifts one point several
times higher than a normal action, drags, and drops (low coverage, corners
often hidden).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import render, sim
from .env import Action, EnvConfig, execute_action, out_of_bounds
from .sim import FabricState, SimParams, SimulationDiverged

MAX_ATTEMPTS = 10


@dataclass
class TierSpec:
    """Tunable generation ranges (plane-relative lengths)."""

    t1_pull_range: tuple = (0.10, 0.20)
    t1_third_pull_trigger: float = 90.0
    t2_drag_frac: float = 0.5
    t2_noise: float = 0.01
    t2_near_radius: float = 0.15
    t2_clearance: float = 0.01
    t3_lift_range: tuple = (4.0, 5.0)
    t3_drag_range: tuple = (0.10, 0.25)


def _clamp01(v: float) -> float:
    return min(max(v, 0.0), 1.0)


def _pull(state: FabricState, config: EnvConfig, pick_xy, direction,
          length: float, lift_iters: int | None = None) -> None:
    dx = float(np.clip(direction[0] * length, -1.0, 1.0))
    dy = float(np.clip(direction[1] * length, -1.0, 1.0))
    action = Action(_clamp01(pick_xy[0]), _clamp01(pick_xy[1]), dx, dy)
    cfg = config if lift_iters is None else replace(config, pull_up_iters=lift_iters)
    execute_action(state, action, cfg)


def _random_fabric_pick(state: FabricState, rng: np.random.Generator):
    idx = int(rng.integers(0, state.n_points))
    return state.pos[idx, 0], state.pos[idx, 1]


def _random_direction(rng: np.random.Generator):
    theta = rng.uniform(0.0, 2.0 * np.pi)
    return np.cos(theta), np.sin(theta)


def gen_tier1(seed: int, sim_params: SimParams | None = None,
              tier_spec: TierSpec | None = None,
              env_config: EnvConfig | None = None) -> FabricState:
    """Two short random pulls from flat; a third if coverage stays high."""
    spec = tier_spec or TierSpec()
    config = env_config or EnvConfig()
    rng = np.random.default_rng(seed)
    state = sim.build_grid(sim_params or SimParams())
    for _ in range(2):
        _pull(state, config, _random_fabric_pick(state, rng),
              _random_direction(rng), rng.uniform(*spec.t1_pull_range))
    if render.coverage(state) > spec.t1_third_pull_trigger:
        _pull(state, config, _random_fabric_pick(state, rng),
              _random_direction(rng), rng.uniform(*spec.t1_pull_range))
    return state


def gen_tier2(seed: int, sim_params: SimParams | None = None,
              tier_spec: TierSpec | None = None,
              env_config: EnvConfig | None = None) -> FabricState:
    """Vertical drop over a plane edge, a drag toward the center, then a
    drag over the exposed corner to occlude it."""
    spec = tier_spec or TierSpec()
    config = env_config or EnvConfig()
    rng = np.random.default_rng(seed)
    params = sim_params or SimParams()
    state = sim.build_grid(params)

    # stand the fabric vertically above the chosen edge with tiny
    # perpendicular noise to break symmetry, then let it fall
    n = params.grid_n
    edge_x = 0.0 if rng.uniform() < 0.5 else 1.0
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    noise = rng.uniform(-spec.t2_noise, spec.t2_noise, size=n * n)
    state.pos[:, 0] = edge_x + noise
    state.pos[:, 1] = jj.ravel() * params.spacing
    state.pos[:, 2] = ii.ravel() * params.spacing + spec.t2_clearance
    state.prev[:] = state.pos
    sim.run_iterations(state, config.drop_iters, settle_eps=config.settle_eps)

    # drag one of the two originally-top corners roughly toward the center
    top = [state.grid_index(n - 1, 0), state.grid_index(n - 1, n - 1)]
    corner = top[int(rng.integers(0, 2))]
    cx, cy = state.pos[corner, 0], state.pos[corner, 1]
    to_center = np.array([0.5 - cx, 0.5 - cy])
    norm = np.linalg.norm(to_center)
    if norm < 1e-9:
        to_center, norm = np.array([1.0, 0.0]), 1.0
    ang = np.arctan2(to_center[1], to_center[0]) + rng.uniform(-0.15, 0.15)
    _pull(state, config, (cx, cy), (np.cos(ang), np.sin(ang)),
          spec.t2_drag_frac)

    # occlude the dragged corner: pick nearby fabric and drag it across
    cx, cy = state.pos[corner, 0], state.pos[corner, 1]
    r = spec.t2_near_radius * np.sqrt(rng.uniform())
    phi = rng.uniform(0.0, 2.0 * np.pi)
    px, py = cx + r * np.cos(phi), cy + r * np.sin(phi)
    over = np.array([cx - px, cy - py])
    norm = np.linalg.norm(over)
    if norm < 1e-9:
        over, norm = np.array([1.0, 0.0]), 1.0
    _pull(state, config, (px, py), over / norm, spec.t2_drag_frac)
    return state


def gen_tier3(seed: int, sim_params: SimParams | None = None,
              tier_spec: TierSpec | None = None,
              env_config: EnvConfig | None = None) -> FabricState:
    """One pull lifted 4-5x higher than a normal action, dragged a short
    distance, and dropped."""
    spec = tier_spec or TierSpec()
    config = env_config or EnvConfig()
    rng = np.random.default_rng(seed)
    state = sim.build_grid(sim_params or SimParams())
    lift_mult = rng.uniform(*spec.t3_lift_range)
    lift_iters = int(round(lift_mult * config.pull_up_iters))
    _pull(state, config, _random_fabric_pick(state, rng),
          _random_direction(rng), rng.uniform(*spec.t3_drag_range),
          lift_iters=lift_iters)
    return state


_GENERATORS = {1: gen_tier1, 2: gen_tier2, 3: gen_tier3}


def generate(tier: int, seed: int, sim_params: SimParams | None = None,
             tier_spec: TierSpec | None = None,
             env_config: EnvConfig | None = None) -> FabricState:
    """Generate a tier start state; retry with seed XOR attempt on
    divergence or an invalid result (out of bounds / over-stretched)."""
    if tier not in _GENERATORS:
        raise ValueError(f"tier must be 1, 2, or 3, got {tier}")
    gen = _GENERATORS[tier]
    last_error = None
    for attempt in range(MAX_ATTEMPTS):
        try:
            state = gen(int(seed) ^ attempt, sim_params, tier_spec, env_config)
        except SimulationDiverged as err:
            last_error = err
            continue
        cfg = env_config or EnvConfig()
        ok = (np.isfinite(state.pos).all()
              and not out_of_bounds(state, cfg.oob_fraction)
              and state.max_stretch_ratio() <= 1.0 + state.params.max_stretch + 1e-6)
        if ok:
            return state
        last_error = RuntimeError("generated state failed validity checks")
    raise RuntimeError(
        f"tier {tier} generation failed after {MAX_ATTEMPTS} attempts"
    ) from last_error
