"""Pick-and-pull episode environment.

An action grasps the top fabric layer at a plane coordinate, lifts it,
drags it by a pull vector, and drops it. Execution runs six stages:
grasp, pull up, pause, linear pull, pause, drop-and-settle. Episodes end
when coverage reaches the threshold, the fabric leaves the plane by more
than the out-of-bounds fraction, or the action budget is spent.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import render, sim
from .sim import FabricState, SimParams

# Stage-4 drag speed in plane units per iteration; the iteration count
# scales with pull length so the commanded speed stays constant.
PULL_STEP = 0.004


@dataclass
class Action:
    """Pick point (plane coordinates) plus pull vector."""

    x: float
    y: float
    dx: float
    dy: float

    def validate(self) -> "Action":
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise ValueError(f"pick point ({self.x}, {self.y}) outside the plane")
        if not (-1.0 <= self.dx <= 1.0 and -1.0 <= self.dy <= 1.0):
            raise ValueError("pull deltas must lie in [-1, 1]")
        return self

    def clamped(self) -> "Action":
        return Action(min(max(self.x, 0.0), 1.0), min(max(self.y, 0.0), 1.0),
                      min(max(self.dx, -1.0), 1.0), min(max(self.dy, -1.0), 1.0))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.dx, self.dy], dtype=np.float64)


def action_from_network(vec) -> Action:
    """Map a tanh output in [-1,1]^4 to an action: pick-point components go
    affinely to [0,1], pull deltas pass through."""
    v = np.clip(np.asarray(vec, dtype=np.float64), -1.0, 1.0)
    return Action((v[0] + 1.0) / 2.0, (v[1] + 1.0) / 2.0, v[2], v[3])


def action_to_network(action: Action) -> np.ndarray:
    return np.array([2.0 * action.x - 1.0, 2.0 * action.y - 1.0,
                     action.dx, action.dy], dtype=np.float64)


class Termination(enum.Enum):
    NONE = "none"
    COVERAGE = "coverage"
    OUT_OF_BOUNDS = "out_of_bounds"
    ACTION_CAP = "action_cap"


@dataclass
class EnvConfig:
    """Episode rules, grasp geometry, stage iteration counts, observation
    settings. settle_eps stops pause/drop stages once per-step motion dies
    out; 0 runs every iteration."""

    max_actions: int = 10
    coverage_threshold: float = 92.0
    oob_fraction: float = 0.25
    grasp_radius: float = 0.045
    pull_up_iters: int = 50
    pause1_iters: int = 80
    pause2_iters: int = 300
    drop_iters: int = 1000
    obs_mode: str = "rgb"
    image_hw: int = 100
    domain_randomization: bool = False
    settle_eps: float = 1e-7

    def validate(self) -> None:
        if self.max_actions <= 0:
            raise ValueError("max_actions must be positive")
        if not 0.0 < self.coverage_threshold <= 100.0:
            raise ValueError("coverage_threshold must be in (0, 100]")
        for name in ("oob_fraction", "grasp_radius", "pull_up_iters",
                     "pause1_iters", "pause2_iters", "drop_iters"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.obs_mode not in render.OBS_MODES:
            raise ValueError(f"obs_mode must be one of {render.OBS_MODES}")


@dataclass
class StepOutcome:
    observation: Optional[render.Observation]
    coverage: float
    done: bool
    termination: Termination
    info: dict

    def __post_init__(self):
        assert self.done == (self.termination is not Termination.NONE)


def grasp(state: FabricState, x: float, y: float,
          radius: float = 0.045) -> np.ndarray:
    """Indices pinned by a gripper descending over (x, y).

    Candidates are points within ``radius`` of the pick point in the plane;
    of those, only the top layer is taken: points within one collision
    thickness of the highest candidate, which is where the descending
    gripper first closes. Empty result means the grasp missed the fabric.
    """
    dx = state.pos[:, 0] - x
    dy = state.pos[:, 1] - y
    near = dx * dx + dy * dy < radius * radius
    if not near.any():
        return np.empty(0, dtype=np.int64)
    z = state.pos[:, 2]
    z_top = z[near].max()
    band = state.params.self_collision_thickness
    return np.nonzero(near & (z >= z_top - band))[0].astype(np.int64)


def out_of_bounds(state: FabricState, oob_fraction: float = 0.25) -> bool:
    """True when any point's (x, y) is more than the fraction beyond a
    plane edge (plane side = 1)."""
    xy = state.pos[:, :2]
    lo = -oob_fraction
    hi = 1.0 + oob_fraction
    return bool((xy < lo).any() or (xy > hi).any())


@dataclass
class ActionInfo:
    grasp_missed: bool
    points_grasped: int
    iterations: int


def execute_action(state: FabricState, action: Action,
                   config: EnvConfig) -> ActionInfo:
    """Run the six-stage grasp/pull protocol in place.

    1. grasp; 2. lift pinned points by dz per iteration; 3. pause;
    4. drag pinned points toward (x+dx, y+dy) at a fixed speed with z held;
    5. pause; 6. release and settle. A missed grasp degenerates to the
    settling stages only.
    """
    action.validate()
    p = state.params
    eps = config.settle_eps
    pinned_before = state.pinned.copy()
    idx = grasp(state, action.x, action.y, config.grasp_radius)
    iters = 0
    if idx.size:
        sim.pin(state, idx)
        iters += sim.run_iterations(state, config.pull_up_iters,
                                    pin_delta=(0.0, 0.0, p.dz))
        iters += sim.run_iterations(state, config.pause1_iters, settle_eps=eps)
        length = math.hypot(action.dx, action.dy)
        if length > 0.0:
            n_pull = int(math.ceil(length / PULL_STEP))
            ux = action.dx / length
            uy = action.dy / length
            whole = length / n_pull
            iters += sim.run_iterations(
                state, n_pull, pin_delta=(ux * whole, uy * whole, 0.0))
        iters += sim.run_iterations(state, config.pause2_iters, settle_eps=eps)
        sim.unpin(state, idx)
        # restore pins that were held before this action (none in normal play)
        state.pinned |= pinned_before
        iters += sim.run_iterations(state, config.drop_iters, settle_eps=eps)
        return ActionInfo(False, int(idx.size), iters)
    iters += sim.run_iterations(state, config.pause1_iters, settle_eps=eps)
    iters += sim.run_iterations(state, config.pause2_iters, settle_eps=eps)
    iters += sim.run_iterations(state, config.drop_iters, settle_eps=eps)
    return ActionInfo(True, 0, iters)


class FabricEnv:
    """Episode wrapper tying the simulator, renderer, and termination rules.

    One instance is single-threaded; run several instances for parallelism.
    All randomness flows from the seed given to :meth:`reset`.
    """

    def __init__(self, tier: int = 1, config: EnvConfig | None = None,
                 sim_params: SimParams | None = None):
        self.tier = tier
        self.config = config or EnvConfig()
        self.config.validate()
        self.sim_params = sim_params or SimParams()
        self.sim_params.validate()
        self.state: FabricState | None = None
        self.rng: np.random.Generator | None = None
        self.action_count = 0
        self.done = True
        self.termination = Termination.NONE
        self._coverage = 0.0

    def observe(self) -> render.Observation:
        return render.render_observation(
            self.state, self.config.obs_mode, self.config.image_hw,
            rng=self.rng,
            domain_randomization=self.config.domain_randomization)

    @property
    def coverage(self) -> float:
        return self._coverage

    def reset(self, seed: int):
        """Draw a tier starting state. Divergent generations retry with a
        derived seed up to 10 attempts. Returns (state, observation)."""
        from . import initstate  # deferred: initstate builds on this module

        self.state = initstate.generate(self.tier, seed, self.sim_params,
                                        env_config=self.config)
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, self.tier]))
        self.action_count = 0
        self.done = False
        self.termination = Termination.NONE
        self._coverage = render.coverage(self.state)
        return self.state, self.observe()

    def step(self, action: Action) -> StepOutcome:
        """Validate and execute one action, then apply termination rules in
        order: coverage threshold, out-of-bounds, action cap."""
        if self.done:
            raise RuntimeError("step() called on a finished episode")
        info = execute_action(self.state, action, self.config)
        self.action_count += 1
        self._coverage = render.coverage(self.state)
        termination = Termination.NONE
        if self._coverage >= self.config.coverage_threshold:
            termination = Termination.COVERAGE
        elif out_of_bounds(self.state, self.config.oob_fraction):
            termination = Termination.OUT_OF_BOUNDS
        elif self.action_count >= self.config.max_actions:
            termination = Termination.ACTION_CAP
        self.done = termination is not Termination.NONE
        self.termination = termination
        return StepOutcome(
            observation=self.observe(),
            coverage=self._coverage,
            done=self.done,
            termination=termination,
            info={"grasp_missed": info.grasp_missed,
                  "points_grasped": info.points_grasped,
                  "iterations": info.iterations},
        )
