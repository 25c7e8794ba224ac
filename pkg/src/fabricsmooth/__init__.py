"""Fabric smoothing: simulator, baselines, renderer, and imitation learning."""

from .sim import (SimParams, FabricState, SimulationDiverged, build_grid,
                  spring_force, step, enforce_length_constraint, pin, unpin)
from .env import Action, EnvConfig, StepOutcome, Termination, FabricEnv
from .render import (CameraParams, RandomizationParams, Observation,
                     coverage, rasterize, randomize, postprocess)

__all__ = [
    "SimParams", "FabricState", "SimulationDiverged", "build_grid",
    "spring_force", "step", "enforce_length_constraint", "pin", "unpin",
    "Action", "EnvConfig", "StepOutcome", "Termination", "FabricEnv",
    "CameraParams", "RandomizationParams", "Observation",
    "coverage", "rasterize", "randomize", "postprocess",
]
