"""Mass-spring fabric dynamics.

The fabric is a square grid of unit-mass points joined by structural, shear,
and flexion springs. Free points integrate with damped position Verlet:

    p_next = p + (1 - d) * (p - p_prev) + a * dt^2

followed by an iterative projection that keeps every spring at most
``(1 + max_stretch)`` times its rest length, and a floor at z = floor_z.
Per-pair separating forces keep non-adjacent points at least
``self_collision_thickness`` apart so folds have volume.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels

CONSTRAINT_MAX_SWEEPS = 30
DIVERGENCE_LIMIT = 1e6


class SpringKind(enum.IntEnum):
    STRUCTURAL = 0
    SHEAR = 1
    FLEXION = 2


class SimulationDiverged(RuntimeError):
    """Raised when integration produces a non-finite position."""

    def __init__(self, point_index: int):
        super().__init__(f"simulation diverged at point {point_index}")
        self.point_index = point_index


@dataclass
class SimParams:
    """Simulator constants. Spring constant, damping, collision thickness,
    and the per-iteration lift dz follow the reference fabric; dt, gravity,
    and floor friction were calibrated against the tier coverage targets."""

    grid_n: int = 25
    k_s: float = 5000.0
    damping: float = 0.02
    dt: float = 0.008
    gravity: float = 9.8
    self_collision_thickness: float = 0.020
    max_stretch: float = 0.10
    dz: float = 0.0025
    floor_z: float = 0.0
    floor_friction: float = 0.5

    def validate(self) -> None:
        if self.grid_n < 4:
            raise ValueError("grid_n must be >= 4")
        for name in ("k_s", "dt", "gravity", "self_collision_thickness",
                     "max_stretch", "dz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.damping <= 1.0:
            raise ValueError("damping must be in [0, 1]")
        if not 0.0 <= self.floor_friction <= 1.0:
            raise ValueError("floor_friction must be in [0, 1]")

    @property
    def spacing(self) -> float:
        return 1.0 / (self.grid_n - 1)


def spring_topology(grid_n: int):
    """Spring endpoint indices, rest lengths, and kinds for the grid.

    Structural springs join horizontal/vertical neighbors, shear springs
    both diagonals of each cell, flexion springs points two apart along a
    row or column.
    """
    spacing = 1.0 / (grid_n - 1)
    a, b, rest, kind = [], [], [], []

    def add(i0, j0, i1, j1, r, k):
        a.append(i0 * grid_n + j0)
        b.append(i1 * grid_n + j1)
        rest.append(r)
        kind.append(int(k))

    for i in range(grid_n):
        for j in range(grid_n):
            if j + 1 < grid_n:
                add(i, j, i, j + 1, spacing, SpringKind.STRUCTURAL)
            if i + 1 < grid_n:
                add(i, j, i + 1, j, spacing, SpringKind.STRUCTURAL)
            if i + 1 < grid_n and j + 1 < grid_n:
                add(i, j, i + 1, j + 1, spacing * np.sqrt(2.0), SpringKind.SHEAR)
            if i + 1 < grid_n and j - 1 >= 0:
                add(i, j, i + 1, j - 1, spacing * np.sqrt(2.0), SpringKind.SHEAR)
            if j + 2 < grid_n:
                add(i, j, i, j + 2, 2.0 * spacing, SpringKind.FLEXION)
            if i + 2 < grid_n:
                add(i, j, i + 2, j, 2.0 * spacing, SpringKind.FLEXION)
    return (np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64),
            np.asarray(rest, dtype=np.float64), np.asarray(kind, dtype=np.int64))


@dataclass
class FabricState:
    """Full simulator state: positions, previous positions, pin flags.

    Operations mutate in place and return the state; use :meth:`copy` when a
    snapshot is needed. No arrays are shared between copies.
    """

    params: SimParams
    pos: np.ndarray
    prev: np.ndarray
    pinned: np.ndarray
    spring_a: np.ndarray
    spring_b: np.ndarray
    spring_rest: np.ndarray
    spring_kind: np.ndarray
    cap_hit: bool = False
    _order: np.ndarray = field(default=None, repr=False)
    _forces: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = self.pos.shape[0]
        if self._order is None:
            self._order = np.arange(n, dtype=np.int64)
        if self._forces is None:
            self._forces = np.zeros((n, 3), dtype=np.float64)

    @property
    def n_points(self) -> int:
        return self.pos.shape[0]

    def grid_index(self, i: int, j: int) -> int:
        return i * self.params.grid_n + j

    def copy(self) -> "FabricState":
        return FabricState(
            params=replace(self.params),
            pos=self.pos.copy(),
            prev=self.prev.copy(),
            pinned=self.pinned.copy(),
            spring_a=self.spring_a,
            spring_b=self.spring_b,
            spring_rest=self.spring_rest,
            spring_kind=self.spring_kind,
            cap_hit=self.cap_hit,
        )

    def spring_lengths(self) -> np.ndarray:
        d = self.pos[self.spring_b] - self.pos[self.spring_a]
        return np.linalg.norm(d, axis=1)

    def max_stretch_ratio(self) -> float:
        return float(np.max(self.spring_lengths() / self.spring_rest))


def build_grid(params: SimParams, z0: float = 0.0) -> FabricState:
    """Flat fabric covering [0,1]^2 at height z0, zero initial velocity."""
    params.validate()
    n = params.grid_n
    xs = np.linspace(0.0, 1.0, n)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    pos = np.column_stack([gx.ravel(), gy.ravel(), np.full(n * n, float(z0))])
    sa, sb, rest, kind = spring_topology(n)
    return FabricState(params=params, pos=pos, prev=pos.copy(),
                       pinned=np.zeros(n * n, dtype=np.bool_),
                       spring_a=sa, spring_b=sb, spring_rest=rest,
                       spring_kind=kind)


def spring_force(q_a: np.ndarray, q_b: np.ndarray, rest: float, k_s: float):
    """Hooke force on point a: magnitude k_s * (|q_a - q_b| - rest) along
    the unit vector toward b (restoring when stretched). A zero-length
    spring has no defined direction and yields zero force."""
    if rest <= 0:
        raise ValueError("rest length must be positive")
    diff = np.asarray(q_b, dtype=np.float64) - np.asarray(q_a, dtype=np.float64)
    dist = float(np.linalg.norm(diff))
    if dist == 0.0:
        return 0.0, np.zeros(3)
    magnitude = k_s * (dist - rest)
    return magnitude, diff / dist


def run_iterations(state: FabricState, n_steps: int,
                   pin_delta=(0.0, 0.0, 0.0), settle_eps: float = 0.0) -> int:
    """Advance ``n_steps`` iterations, translating pinned points by
    ``pin_delta`` each iteration. Returns iterations actually run (fewer
    than requested only when settle_eps triggered early exit)."""
    p = state.params
    diverged, iters, cap_hits = kernels.run_steps(
        state.pos, state.prev, state.pinned, state._order, p.grid_n,
        state.spring_a, state.spring_b, state.spring_rest, state._forces,
        n_steps, p.k_s, p.k_s, p.damping, p.dt, p.gravity,
        p.self_collision_thickness, 1.0 + p.max_stretch,
        CONSTRAINT_MAX_SWEEPS, p.floor_z, p.floor_friction,
        float(pin_delta[0]), float(pin_delta[1]), float(pin_delta[2]),
        settle_eps)
    state.cap_hit = cap_hits > 0
    if diverged >= 0:
        raise SimulationDiverged(diverged)
    if np.abs(state.pos).max() > DIVERGENCE_LIMIT:
        raise SimulationDiverged(int(np.abs(state.pos).max(axis=1).argmax()))
    return iters


def step(state: FabricState) -> FabricState:
    """One integration step: gravity + spring + self-collision forces,
    damped Verlet update of free points, then the stretch-cap projection."""
    run_iterations(state, 1)
    return state


def enforce_length_constraint(state: FabricState) -> FabricState:
    """Project over-stretched springs to at most (1+max_stretch)*rest.

    Free endpoint pairs split the correction; a pinned endpoint leaves the
    whole correction to the free one. Sweeps are capped; state.cap_hit
    records whether the cap was reached before convergence.
    """
    p = state.params
    sweeps = kernels.constraint_sweeps(
        state.pos, state.pinned, state.spring_a, state.spring_b,
        state.spring_rest, 1.0 + p.max_stretch, CONSTRAINT_MAX_SWEEPS,
        p.floor_z)
    state.cap_hit = sweeps >= CONSTRAINT_MAX_SWEEPS
    return state


def spring_forces(state: FabricState) -> np.ndarray:
    """Per-point net spring force array (for inspection and tests)."""
    out = np.zeros_like(state.pos)
    kernels.add_spring_forces(state.pos, state.spring_a, state.spring_b,
                              state.spring_rest, state.params.k_s, out)
    return out


def self_collision_forces(state: FabricState) -> np.ndarray:
    """Per-point separating forces between non-adjacent close pairs."""
    out = np.zeros_like(state.pos)
    p = state.params
    order = state._order.copy()
    kernels.sort_by_x(state.pos, order)
    kernels.add_collision_forces(state.pos, order, p.grid_n,
                                 p.self_collision_thickness, p.k_s, out)
    return out


def pin(state: FabricState, indices) -> FabricState:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= state.n_points):
        raise IndexError("pin index out of range")
    state.pinned[idx] = True
    return state


def unpin(state: FabricState, indices) -> FabricState:
    """Clear pin flags; released points restart with zero velocity."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= state.n_points):
        raise IndexError("unpin index out of range")
    state.pinned[idx] = False
    state.prev[idx] = state.pos[idx]
    return state
