"""Software rasterizer: coverage measurement and RGB/D/RGBD observations.

The fabric grid is triangulated (two triangles per cell) and drawn with a
z-buffer. Coverage rasterizes the (x, y) footprint onto a fixed occupancy
grid over the unit plane and never depends on randomization, so randomized
and nominal renders of one state always report the same coverage.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .sim import FabricState

COVERAGE_GRID = 500

# World z window mapped onto depth intensity 0..255; the top end leaves
# headroom for the highest tier-3 lifts.
DEPTH_Z_WINDOW = 0.6

# Lambert shading clamp keeps backfaces readable instead of going black.
SHADE_MIN = 0.4

OBS_MODES = ("rgb", "d", "rgbd")


@dataclass
class CameraParams:
    """Pose plus projection of the observation camera.

    Orientation is XYZ Euler angles in degrees; (0, 0, 0) looks straight
    down with image x along world x. The orthographic window spans
    ``2 * ortho_half_extent`` world units; the nominal window covers the
    plane with a small margin.
    """

    position: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5, 1.0]))
    orientation_deg: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orthographic: bool = True
    image_hw: int = 100
    ortho_half_extent: float = 0.55
    fov_deg: float = 60.0

    def validate(self) -> None:
        if self.image_hw < 8:
            raise ValueError("image size must be >= 8")
        if not np.all(np.isfinite(self.orientation_deg)):
            raise ValueError("orientation must be finite")
        if self.ortho_half_extent <= 0:
            raise ValueError("ortho_half_extent must be positive")

    def rotation(self) -> np.ndarray:
        rx, ry, rz = np.deg2rad(np.asarray(self.orientation_deg, dtype=np.float64))
        cx, sx = np.cos(rx), np.sin(rx)
        cy, sy = np.cos(ry), np.sin(ry)
        cz, sz = np.cos(rz), np.sin(rz)
        mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        return mz @ my @ mx


@dataclass
class RandomizationParams:
    """Concrete per-image appearance values. Defaults are the identity
    configuration: nominal blue fabric, white plane, no gamma/offset/noise."""

    fg_color: np.ndarray = field(default_factory=lambda: np.array([0.07, 0.05, 0.60]))
    bg_color: np.ndarray = field(default_factory=lambda: np.array([0.07, 0.30, 0.90]))
    plane_shade: float = 1.0
    gamma: float = 1.0
    depth_beta: float = 0.0
    noise_bound: float = 0.0


# Sampling ranges used by randomize(); the color jitter is one shared
# three-vector added to both fabric colors.
COLOR_JITTER = 0.35
PLANE_SHADE_RANGE = (0.4, 1.0)
GAMMA_RANGE = (0.8, 1.2)
DEPTH_BETA_RANGE = (-50.0, -40.0)
NOISE_BOUND = 15.0
CAMERA_POS_SIGMA = 0.04
CAMERA_ANGLE_SIGMA = 0.9


@dataclass
class Observation:
    pixels: np.ndarray  # H x W x c uint8
    mode: str

    def __post_init__(self):
        expect = {"rgb": 3, "d": 1, "rgbd": 4}[self.mode]
        if self.pixels.ndim != 3 or self.pixels.shape[2] != expect:
            raise ValueError(f"{self.mode} observation needs {expect} channels")


def triangulate(grid_n: int) -> np.ndarray:
    """Two counter-clockwise triangles per grid cell (viewed from +z)."""
    tris = []
    for i in range(grid_n - 1):
        for j in range(grid_n - 1):
            a = i * grid_n + j
            b = (i + 1) * grid_n + j
            c = i * grid_n + (j + 1)
            d = (i + 1) * grid_n + (j + 1)
            tris.append((a, b, d))
            tris.append((a, d, c))
    return np.asarray(tris, dtype=np.int64)


_TRI_CACHE: dict[int, np.ndarray] = {}


def mesh_triangles(grid_n: int) -> np.ndarray:
    if grid_n not in _TRI_CACHE:
        _TRI_CACHE[grid_n] = triangulate(grid_n)
    return _TRI_CACHE[grid_n]


def coverage(state: FabricState, grid: int = COVERAGE_GRID) -> float:
    """Percent of the unit plane covered by the projected fabric mesh."""
    tris = mesh_triangles(state.params.grid_n)
    occ = np.zeros((grid, grid), dtype=np.bool_)
    kernels.fill_occupancy(np.ascontiguousarray(state.pos[:, :2]), tris,
                           occ, 0.0, 1.0)
    return 100.0 * float(occ.sum()) / (grid * grid)


def nominal_camera(image_hw: int = 100) -> CameraParams:
    return CameraParams(image_hw=image_hw)


def randomize(rng: np.random.Generator, image_hw: int = 100):
    """Sample a perturbed camera and appearance parameters.

    Camera pose gets zero-mean Gaussian noise (sigma 0.04 position units,
    0.9 degrees); fabric colors share one uniform jitter vector; gamma,
    depth offset, and pixel-noise bound come from their fixed ranges.
    """
    cam = nominal_camera(image_hw)
    cam.position = cam.position + rng.normal(0.0, CAMERA_POS_SIGMA, size=3)
    cam.orientation_deg = cam.orientation_deg + rng.normal(
        0.0, CAMERA_ANGLE_SIGMA, size=3)
    jitter = rng.uniform(-COLOR_JITTER, COLOR_JITTER, size=3)
    params = RandomizationParams(
        fg_color=RandomizationParams().fg_color + jitter,
        bg_color=RandomizationParams().bg_color + jitter,
        plane_shade=rng.uniform(*PLANE_SHADE_RANGE),
        gamma=rng.uniform(*GAMMA_RANGE),
        depth_beta=rng.uniform(*DEPTH_BETA_RANGE),
        noise_bound=NOISE_BOUND,
    )
    return cam, params


def _project(state: FabricState, camera: CameraParams):
    """Vertex pixel coordinates and camera-space depth."""
    hw = camera.image_hw
    rot = camera.rotation()
    rel = (state.pos - camera.position) @ rot  # camera-frame coordinates
    depth = -rel[:, 2]  # camera looks along -z of its frame
    if camera.orthographic:
        u = rel[:, 0]
        v = rel[:, 1]
        he = camera.ortho_half_extent
        col = (u / (2.0 * he) + 0.5) * hw
        row = (0.5 - v / (2.0 * he)) * hw
    else:
        safe = np.where(np.abs(depth) < 1e-9, 1e-9, depth)
        f = hw / (2.0 * np.tan(np.deg2rad(camera.fov_deg) / 2.0))
        col = rel[:, 0] / safe * f + hw / 2.0
        row = -rel[:, 1] / safe * f + hw / 2.0
    pix = np.column_stack([col, row])
    if not np.isfinite(pix).all():
        raise ValueError("camera projection produced non-finite coordinates")
    span = max(np.ptp(pix[:, 0]), np.ptp(pix[:, 1]))
    if span < 1e-9:
        raise ValueError("degenerate camera: fabric projects to zero area")
    return pix, depth


def _shade_buffers(state: FabricState, camera: CameraParams):
    tris = mesh_triangles(state.params.grid_n)
    pix, depth = _project(state, camera)
    h = w = camera.image_hw
    tri_buf = np.full((h, w), -1, dtype=np.int64)
    depth_buf = np.full((h, w), np.inf, dtype=np.float64)
    z_buf = np.full((h, w), state.params.floor_z, dtype=np.float64)
    kernels.raster_triangles(pix, depth, np.ascontiguousarray(state.pos[:, 2]),
                             tris, tri_buf, depth_buf, z_buf)
    return tris, tri_buf, z_buf


def rasterize(state: FabricState, camera: CameraParams, mode: str,
              params: RandomizationParams | None = None) -> Observation:
    """Render the fabric over its plane.

    RGB: front faces (world normal z > 0) use the foreground color, back
    faces the background color, both modulated by a clamped Lambert term
    from an overhead light; plane pixels use the plane shade. D: world
    height mapped linearly onto [0, 255] over a fixed window, so higher
    fabric is brighter. RGBD concatenates both.
    """
    if mode not in OBS_MODES:
        raise ValueError(f"mode must be one of {OBS_MODES}")
    camera.validate()
    if params is None:
        params = RandomizationParams()
    tris, tri_buf, z_buf = _shade_buffers(state, camera)

    channels = []
    if mode in ("rgb", "rgbd"):
        v0 = state.pos[tris[:, 0]]
        n = np.cross(state.pos[tris[:, 1]] - v0, state.pos[tris[:, 2]] - v0)
        norm = np.linalg.norm(n, axis=1)
        norm[norm == 0] = 1.0
        nz = n[:, 2] / norm
        lambert = np.clip(np.abs(nz), SHADE_MIN, 1.0)
        tri_rgb = np.where((nz >= 0)[:, None],
                           params.fg_color[None, :],
                           params.bg_color[None, :]) * lambert[:, None]
        palette = np.vstack([tri_rgb, np.full(3, params.plane_shade)])
        rgb = palette[tri_buf] * 255.0
        channels.append(rgb)
    if mode in ("d", "rgbd"):
        floor = state.params.floor_z
        d = np.clip((z_buf - floor) / DEPTH_Z_WINDOW, 0.0, 1.0) * 255.0
        channels.append(d[:, :, None])
    img = np.concatenate(channels, axis=2)
    return Observation(np.clip(np.rint(img), 0, 255).astype(np.uint8), mode)


def postprocess(obs: Observation, params: RandomizationParams,
                rng: np.random.Generator) -> Observation:
    """Gamma-correct color channels, offset the depth channel, then add
    per-pixel uniform noise with one per-image amplitude, clamping to
    [0, 255]. Identity parameters leave the image unchanged."""
    img = obs.pixels.astype(np.float64)
    if obs.mode in ("rgb", "rgbd"):
        rgb = img[:, :, :3]
        img[:, :, :3] = 255.0 * (rgb / 255.0) ** (1.0 / params.gamma)
    if obs.mode in ("d", "rgbd"):
        img[:, :, -1] += params.depth_beta
    if params.noise_bound > 0:
        amplitude = abs(rng.uniform(-params.noise_bound, params.noise_bound))
        img += rng.uniform(-amplitude, amplitude, size=img.shape)
    return Observation(np.clip(np.rint(img), 0, 255).astype(np.uint8), obs.mode)


def render_observation(state: FabricState, mode: str, image_hw: int,
                       rng: np.random.Generator | None = None,
                       domain_randomization: bool = False) -> Observation:
    """Rasterize + postprocess in one call; the nominal path needs no rng."""
    if domain_randomization:
        if rng is None:
            raise ValueError("domain randomization requires an rng")
        cam, params = randomize(rng, image_hw)
        return postprocess(rasterize(state, cam, mode, params), params, rng)
    return rasterize(state, nominal_camera(image_hw), mode)
