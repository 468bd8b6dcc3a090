"""Ray launching and marching with beam matrix propagation.

Rays start on a uniform elevation/azimuth grid, reflect specularly off scene
facets up to a reflection cap, and stop once their travel time budget is
spent. Each ray carries a pair of 2x2 complex matrices (P, Q) describing the
Gaussian envelope around it; in a homogeneous medium P is constant and Q
grows linearly with arc length, so only the launch values are stored.

Launch convention for a source with beam parameter im_b < 0:

    Q0 = 1j * im_b * I        (negative imaginary part)
    P0 = (1 / c) * I

which keeps Im(P Q(s)^-1) positive definite along the whole ray, so the
envelope decays away from the axis everywhere and det Q never vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .scene import Scene

SOUND_SPEED_0C = 331.3
KELVIN_0C = 273.15


def sound_speed(temperature_c: float) -> float:
    """Speed of sound in air at the given temperature, m/s."""
    if temperature_c <= -KELVIN_0C:
        raise ValueError("temperature at or below absolute zero")
    return SOUND_SPEED_0C * math.sqrt(1.0 + temperature_c / KELVIN_0C)


@dataclass(frozen=True)
class Atmosphere:
    """Ambient air state. Humidity and pressure are carried for reporting but
    only temperature affects propagation (no absorption model)."""
    temperature_c: float = 20.0
    rel_humidity_pct: float = 70.0
    pressure_atm: float = 1.0

    @property
    def sound_speed(self) -> float:
        return sound_speed(self.temperature_c)


@dataclass(frozen=True)
class SourceSpec:
    position: np.ndarray
    frequencies: tuple
    amplitude_phi: float = 1.0
    beam_param_im: float = -10.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "frequencies", tuple(float(f) for f in self.frequencies))
        if any(f <= 0 for f in self.frequencies):
            raise ValueError("frequencies must be positive")
        if not self.beam_param_im < 0:
            raise ValueError("beam parameter imaginary part must be negative")
        if not self.amplitude_phi > 0:
            raise ValueError("amplitude constant must be positive")

    @property
    def omegas(self) -> np.ndarray:
        return 2.0 * np.pi * np.asarray(self.frequencies)


@dataclass(frozen=True)
class LaunchGrid:
    theta_min: float = 0.0
    theta_max: float = 180.0
    phi_min: float = 0.0
    phi_max: float = 360.0
    n_theta: int = 64
    n_phi: int = 64

    def __post_init__(self):
        if not (0.0 <= self.theta_min < self.theta_max <= 180.0):
            raise ValueError("elevation range must be non-degenerate within [0, 180]")
        if not (0.0 <= self.phi_min < self.phi_max <= 360.0):
            raise ValueError("azimuth range must be non-degenerate within [0, 360]")
        if self.n_theta < 1 or self.n_phi < 1:
            raise ValueError("grid counts must be at least 1")

    @property
    def n_rays(self) -> int:
        return self.n_theta * self.n_phi


@dataclass(frozen=True)
class TraceConfig:
    n_steps: int
    dt: float
    r_max: int

    def __post_init__(self):
        if self.n_steps <= 0 or self.dt <= 0 or self.r_max <= 0:
            raise ValueError("n_steps, dt, and r_max must all be positive")

    def length_cap(self, c: float) -> float:
        return self.n_steps * self.dt * c


@dataclass(frozen=True)
class LaunchSet:
    """Cell-center directions of a launch grid, with solid-angle weights."""
    gamma1: np.ndarray  # elevation, radians
    gamma2: np.ndarray  # azimuth, radians
    directions: np.ndarray  # (n, 3) unit vectors
    weights: np.ndarray  # sin(theta) dtheta dphi, steradians
    e1: np.ndarray  # (n, 3) launch frame, elevation tangent
    e2: np.ndarray  # (n, 3) launch frame, azimuth tangent

    def __len__(self) -> int:
        return self.directions.shape[0]

    def __getitem__(self, i):
        return (float(self.gamma1[i]), float(self.gamma2[i]),
                self.directions[i], float(self.weights[i]))


def launch_directions(grid: LaunchGrid) -> LaunchSet:
    """Directions at the cell centers of the uniform theta x phi grid.

    Weights are the solid-angle cell measures; over the full sphere their sum
    converges to 4 pi as the grid is refined.
    """
    th_lo = math.radians(grid.theta_min)
    th_hi = math.radians(grid.theta_max)
    ph_lo = math.radians(grid.phi_min)
    ph_hi = math.radians(grid.phi_max)
    d_th = (th_hi - th_lo) / grid.n_theta
    d_ph = (ph_hi - ph_lo) / grid.n_phi
    th = th_lo + (np.arange(grid.n_theta) + 0.5) * d_th
    ph = ph_lo + (np.arange(grid.n_phi) + 0.5) * d_ph
    T, P = np.meshgrid(th, ph, indexing="ij")
    t = T.reshape(-1)
    p = P.reshape(-1)
    st, ct = np.sin(t), np.cos(t)
    sp, cp = np.sin(p), np.cos(p)
    dirs = np.stack([st * cp, st * sp, ct], axis=1)
    e1 = np.stack([ct * cp, ct * sp, -st], axis=1)  # theta-hat
    e2 = np.stack([-sp, cp, np.zeros_like(p)], axis=1)  # phi-hat
    w = st * d_th * d_ph
    return LaunchSet(gamma1=t, gamma2=p, directions=np.ascontiguousarray(dirs),
                     weights=np.ascontiguousarray(w),
                     e1=np.ascontiguousarray(e1), e2=np.ascontiguousarray(e2))


def initial_pq(source: SourceSpec, c: float):
    """Launch matrices (P0, Q0) for an isotropic Gaussian envelope."""
    if not source.beam_param_im < 0:
        raise ValueError("beam parameter imaginary part must be negative")
    eye = np.eye(2, dtype=np.complex128)
    q0 = 1j * source.beam_param_im * eye
    p0 = (1.0 / c) * eye
    return p0, q0


@dataclass(frozen=True)
class Segment:
    origin: np.ndarray
    direction: np.ndarray
    length: float
    s_start: float
    t_start: float
    e1: np.ndarray
    e2: np.ndarray
    cum_reflection: float = 1.0


@dataclass
class BeamPath:
    """One traced ray: polyline, transported frame, and launch data."""
    gamma1: float
    gamma2: float
    weight_dgamma: float
    segments: list
    n_reflections: int
    c: float
    beam_param_im: float
    amplitude_phi: float = 1.0

    @property
    def P0(self) -> np.ndarray:
        return (1.0 / self.c) * np.eye(2, dtype=np.complex128)

    @property
    def Q0(self) -> np.ndarray:
        return 1j * self.beam_param_im * np.eye(2, dtype=np.complex128)

    @property
    def total_length(self) -> float:
        last = self.segments[-1]
        return last.s_start + last.length


def q_at(path: BeamPath, s: float, c: float) -> np.ndarray:
    """Q(s) = Q0 + c P0 s; Q passes through planar reflections unchanged."""
    if s < 0 or s > path.total_length + 1e-9:
        raise ValueError("arc length outside the traced path")
    return path.Q0 + c * path.P0 * s


def travel_time(path: BeamPath, s: float) -> float:
    """Travel time to arc length s in the homogeneous medium."""
    if s < 0 or s > path.total_length + 1e-9:
        raise ValueError("arc length outside the traced path")
    return s / path.c


@dataclass
class PathBundle:
    """Strided segment arrays for a batch of rays, as the kernels consume them.

    Row block i*max_seg .. i*max_seg+n_segs[i] holds ray i's segments. Bundles
    are immutable in use and cheap to hand between worker threads.
    """
    seg_origin: np.ndarray
    seg_dir: np.ndarray
    seg_e1: np.ndarray
    seg_e2: np.ndarray
    seg_len: np.ndarray
    seg_s0: np.ndarray
    seg_refl: np.ndarray
    n_segs: np.ndarray
    n_refls: np.ndarray
    max_seg: int
    weights: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    c: float
    beam_param_im: float
    amplitude_phi: float

    @property
    def n_paths(self) -> int:
        return self.n_segs.shape[0]

    def nbytes_per_ray(self) -> int:
        per_row = (self.seg_origin.itemsize * 12 +
                   self.seg_len.itemsize + self.seg_s0.itemsize + self.seg_refl.itemsize)
        return self.max_seg * per_row

    def path(self, i: int) -> BeamPath:
        """Materialize ray i as a BeamPath."""
        segs = []
        base = i * self.max_seg
        for k in range(int(self.n_segs[i])):
            r = base + k
            segs.append(Segment(
                origin=self.seg_origin[r].copy(),
                direction=self.seg_dir[r].copy(),
                length=float(self.seg_len[r]),
                s_start=float(self.seg_s0[r]),
                t_start=float(self.seg_s0[r]) / self.c,
                e1=self.seg_e1[r].copy(),
                e2=self.seg_e2[r].copy(),
                cum_reflection=float(self.seg_refl[r]),
            ))
        return BeamPath(gamma1=float(self.gamma1[i]), gamma2=float(self.gamma2[i]),
                        weight_dgamma=float(self.weights[i]), segments=segs,
                        n_reflections=int(self.n_refls[i]), c=self.c,
                        beam_param_im=self.beam_param_im,
                        amplitude_phi=self.amplitude_phi)


def allocate_bundle(n_rays: int, launch: LaunchSet, lo: int, source: SourceSpec,
                    cfg: TraceConfig, c: float) -> PathBundle:
    max_seg = cfg.r_max + 1
    rows = n_rays * max_seg
    sl = slice(lo, lo + n_rays)
    return PathBundle(
        seg_origin=np.zeros((rows, 3)), seg_dir=np.zeros((rows, 3)),
        seg_e1=np.zeros((rows, 3)), seg_e2=np.zeros((rows, 3)),
        seg_len=np.zeros(rows), seg_s0=np.zeros(rows), seg_refl=np.ones(rows),
        n_segs=np.zeros(n_rays, np.int32), n_refls=np.zeros(n_rays, np.int32),
        max_seg=max_seg, weights=np.ascontiguousarray(launch.weights[sl]),
        gamma1=np.ascontiguousarray(launch.gamma1[sl]),
        gamma2=np.ascontiguousarray(launch.gamma2[sl]),
        c=c, beam_param_im=source.beam_param_im,
        amplitude_phi=source.amplitude_phi)


def trace_into(scene: Scene, source: SourceSpec, launch: LaunchSet,
               cfg: TraceConfig, c: float, bundle: PathBundle,
               chunk_lo: int, lo: int, hi: int) -> None:
    """Trace launch rays [lo, hi) into bundle rows [lo-chunk_lo, hi-chunk_lo)."""
    bvh = scene.bvh
    kernels.trace_range(
        bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right,
        bvh.leaf_start, bvh.leaf_count, bvh.prim_index,
        scene.v0, scene.v1, scene.v2, scene.refl,
        scene.bounds[0], scene.bounds[1], scene.diameter,
        source.position,
        launch.directions[chunk_lo:], launch.e1[chunk_lo:], launch.e2[chunk_lo:],
        cfg.length_cap(c), cfg.r_max, bundle.max_seg,
        bundle.seg_origin, bundle.seg_dir, bundle.seg_e1, bundle.seg_e2,
        bundle.seg_len, bundle.seg_s0, bundle.seg_refl,
        bundle.n_segs, bundle.n_refls, lo - chunk_lo, hi - chunk_lo)


def trace(scene: Scene, source: SourceSpec, direction, cfg: TraceConfig,
          atmosphere: Atmosphere, weight_dgamma: float = 1.0,
          gamma1: float = 0.0, gamma2: float = 0.0) -> BeamPath:
    """Trace a single ray and return its BeamPath.

    Uses the same kernel as batch tracing, so results are bit-identical with
    pipeline output for the same launch data.
    """
    direction = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise ValueError("ray direction must be unit length")
    c = atmosphere.sound_speed
    # Launch frame: elevation/azimuth tangents of the direction.
    st = math.sqrt(max(direction[0] ** 2 + direction[1] ** 2, 0.0))
    theta = math.atan2(st, direction[2])
    phi = math.atan2(direction[1], direction[0])
    e1 = np.array([math.cos(theta) * math.cos(phi),
                   math.cos(theta) * math.sin(phi), -math.sin(theta)])
    e2 = np.array([-math.sin(phi), math.cos(phi), 0.0])
    launch = LaunchSet(gamma1=np.array([gamma1]), gamma2=np.array([gamma2]),
                       directions=direction.reshape(1, 3),
                       weights=np.array([weight_dgamma]),
                       e1=e1.reshape(1, 3), e2=e2.reshape(1, 3))
    bundle = allocate_bundle(1, launch, 0, source, cfg, c)
    trace_into(scene, source, launch, cfg, c, bundle, 0, 0, 1)
    return bundle.path(0)
