"""Field reconstruction by beam summation.

Every traced beam carries a Gaussian-shaped complex field around its path.
The pressure at an observer is the weighted sum of all beam fields evaluated
at the observer's ray-centered coordinates (arc length of the nearest path
point plus the transverse offset), accumulated in ascending beam index so the
result is bit-reproducible under any execution plan.

The summation weight of a beam is

    scale * (i omega / (2 pi c)) * weight_dgamma

where `scale` is a real constant fitted once against the free-field monopole
at 10 m (see calibrate_phi). Carrying the omega factor in the weight makes
the fitted scale frequency independent.

Observers that fall behind a beam's launch point (nearest point is the path
start with a negative axial projection) receive no contribution from that
beam; a one-way beam has no field behind its source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .beamtrace import Atmosphere, BeamPath, PathBundle, SourceSpec
from .errors import CalibrationError, DegenerateBeamError

P_REF = 2e-5  # SPL reference pressure, Pa

CALIBRATION_RADIUS = 10.0
CALIBRATION_MIN_RAYS = 64 * 64


def spl(pressure):
    """Sound pressure level re 20 uPa; zero magnitude maps to -inf."""
    mag = np.abs(pressure)
    with np.errstate(divide="ignore"):
        out = 20.0 * np.log10(mag / P_REF)
    if np.isscalar(pressure) or np.asarray(pressure).ndim == 0:
        return float(out)
    return out


def continuous_sqrt(values: np.ndarray) -> np.ndarray:
    """Square root with the branch tracked continuously along a sampled path.

    The first sample uses the principal branch; subsequent samples follow the
    phase continuously (unwrapped), flipping the branch whenever the path
    crosses the cut. Needed wherever det Q is followed along a ray.
    """
    values = np.asarray(values, dtype=np.complex128)
    mag = np.sqrt(np.abs(values))
    ang = np.unwrap(np.angle(values))
    return mag * np.exp(0.5j * ang)


@dataclass(frozen=True)
class ObserverSet:
    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3)
        if pts.shape[0] < 1:
            raise ValueError("observer set must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("observer coordinates must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]


@dataclass
class FieldResult:
    """Complex pressure and SPL per (observer, frequency)."""
    pressure: np.ndarray  # (n_obs, n_freq) complex
    spl: np.ndarray  # (n_obs, n_freq) dB re 20 uPa
    calibration: float

    @classmethod
    def from_pressure(cls, pressure: np.ndarray, calibration: float) -> "FieldResult":
        return cls(pressure=pressure, spl=spl(pressure), calibration=calibration)


def bundle_from_paths(paths, atmosphere: Atmosphere | None = None) -> PathBundle:
    """Pack BeamPath objects into the strided arrays the kernels consume."""
    paths = list(paths)
    if not paths:
        raise ValueError("empty path list")
    c = paths[0].c
    imb = paths[0].beam_param_im
    phi = paths[0].amplitude_phi
    max_seg = max(len(p.segments) for p in paths)
    n = len(paths)
    rows = n * max_seg
    b = PathBundle(
        seg_origin=np.zeros((rows, 3)), seg_dir=np.zeros((rows, 3)),
        seg_e1=np.zeros((rows, 3)), seg_e2=np.zeros((rows, 3)),
        seg_len=np.zeros(rows), seg_s0=np.zeros(rows), seg_refl=np.ones(rows),
        n_segs=np.zeros(n, np.int32), n_refls=np.zeros(n, np.int32),
        max_seg=max_seg,
        weights=np.array([p.weight_dgamma for p in paths]),
        gamma1=np.array([p.gamma1 for p in paths]),
        gamma2=np.array([p.gamma2 for p in paths]),
        c=c, beam_param_im=imb, amplitude_phi=phi)
    for i, p in enumerate(paths):
        if p.c != c or p.beam_param_im != imb or p.amplitude_phi != phi:
            raise ValueError("paths in one bundle must share launch constants")
        b.n_segs[i] = len(p.segments)
        b.n_refls[i] = p.n_reflections
        for k, seg in enumerate(p.segments):
            r = i * max_seg + k
            b.seg_origin[r] = seg.origin
            b.seg_dir[r] = seg.direction
            b.seg_e1[r] = seg.e1
            b.seg_e2[r] = seg.e2
            b.seg_len[r] = seg.length
            b.seg_s0[r] = seg.s_start
            b.seg_refl[r] = seg.cum_reflection
    return b


def _as_bundle(paths) -> PathBundle:
    return paths if isinstance(paths, PathBundle) else bundle_from_paths(paths)


def nearest_on_path(observer, path: BeamPath):
    """Closest polyline point to the observer; ties go to smaller arc length.

    Returns (segment_index, s_star, q) with q the transverse offset 2-vector
    in the segment's (e1, e2) frame.
    """
    bundle = bundle_from_paths([path])
    px, py, pz = np.asarray(observer, dtype=np.float64)
    k, s, q1, q2, _refl, _behind = kernels.nearest_on_segments(
        bundle.seg_origin, bundle.seg_dir, bundle.seg_e1, bundle.seg_e2,
        bundle.seg_len, bundle.seg_s0, bundle.seg_refl,
        0, int(bundle.n_segs[0]), px, py, pz)
    return int(k), float(s), np.array([q1, q2])


def beam_pressure(path: BeamPath, s_star: float, q, omega: float,
                  atmosphere: Atmosphere, source: SourceSpec) -> complex:
    """Beam field at ray-centered coordinates (s_star, q).

    p = phi * sqrt(c / det Q(s*)) * r_acc
          * exp[i omega T(s*) + (i omega / 2) q^T P Q(s*)^-1 q]

    with sqrt(det Q) taken on the branch continuous along s (for the
    isotropic launch this is s + i*im_b for all s > 0; see continuous_sqrt).
    Raises DegenerateBeamError when the launch matrices violate regularity.
    """
    imb = path.beam_param_im
    if not imb < 0:
        raise DegenerateBeamError("beam envelope matrix is not decaying (Im(PQ^-1) not positive)")
    c = atmosphere.sound_speed
    q = np.asarray(q, dtype=np.float64)
    qs = s_star + 1j * imb  # scalar of Q(s)/I; det Q = qs^2, sqrt -> qs
    if qs == 0:
        raise DegenerateBeamError("det Q vanished along the beam")
    r_acc = 1.0
    for seg in path.segments:
        if seg.s_start <= s_star or math.isclose(seg.s_start, s_star):
            r_acc = seg.cum_reflection
    q_sq = float(q @ q)
    expo = 1j * omega * (s_star / c) + 1j * omega * q_sq / (2.0 * c * qs)
    return complex(source.amplitude_phi * np.sqrt(c) / qs * r_acc * np.exp(expo))


def sum_at_observer(observer, paths, omega, atmosphere: Atmosphere,
                    source: SourceSpec, calibration: float = 1.0,
                    use_cutoff: bool = True):
    """Calibrated beam sum at one observer, beams in ascending index order.

    omega may be a scalar or an array; contributions below the amplitude
    cutoff are skipped unless use_cutoff is False.
    """
    if not isinstance(paths, PathBundle) and len(paths) == 0:
        omegas = np.atleast_1d(np.asarray(omega, dtype=np.float64))
        if np.isscalar(omega) or np.asarray(omega).ndim == 0:
            return 0j
        return np.zeros(omegas.shape[0], dtype=np.complex128)
    bundle = _as_bundle(paths)
    if not bundle.beam_param_im < 0:
        raise DegenerateBeamError("bundle carries a non-decaying beam parameter")
    omegas = np.atleast_1d(np.asarray(omega, dtype=np.float64))
    obs = np.asarray(observer, dtype=np.float64).reshape(1, 3)
    acc = np.zeros((1, omegas.shape[0]), dtype=np.complex128)
    evals = np.zeros(1, dtype=np.int64)
    kernels.gbs_accumulate(
        bundle.seg_origin, bundle.seg_dir, bundle.seg_e1, bundle.seg_e2,
        bundle.seg_len, bundle.seg_s0, bundle.seg_refl,
        bundle.n_segs, bundle.max_seg, bundle.weights, obs, omegas,
        bundle.c, -bundle.beam_param_im, bundle.amplitude_phi,
        use_cutoff, acc, evals, 0, 1, 0, bundle.n_paths)
    out = calibration * acc[0]
    if np.isscalar(omega) or np.asarray(omega).ndim == 0:
        return complex(out[0])
    return out


def calibrate_phi(paths, atmosphere: Atmosphere, source: SourceSpec,
                  omegas=None, probe_radius: float = CALIBRATION_RADIUS) -> float:
    """Fit the real summation scale against the free-field monopole.

    The scale makes the summed |p| at the probe radius match 1/(4 pi r),
    averaged over 26 lattice probe directions. The fit is anchored at the
    first frequency; the remaining frequencies are checked to agree within
    0.5 dB, and the probe directions within 1 dB, otherwise calibration is
    rejected.
    """
    bundle = _as_bundle(paths)
    if bundle.n_paths < CALIBRATION_MIN_RAYS:
        raise CalibrationError(
            f"calibration needs a full-sphere launch of at least {CALIBRATION_MIN_RAYS} rays")
    if int(bundle.n_refls.max(initial=0)) > 0:
        raise CalibrationError("calibration requires free-field paths (no reflections)")
    if omegas is None:
        omegas = source.omegas
    omegas = np.atleast_1d(np.asarray(omegas, dtype=np.float64))

    probes = []
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            for k in (-1, 0, 1):
                if i == j == k == 0:
                    continue
                v = np.array([i, j, k], dtype=np.float64)
                probes.append(v / np.linalg.norm(v))
    probes = np.asarray(probes)

    target = 1.0 / (4.0 * np.pi * probe_radius)
    scales = []
    for w in omegas:
        mags = np.array([
            abs(sum_at_observer(probe_radius * d, bundle, float(w), atmosphere, source))
            for d in probes])
        if np.any(mags == 0.0):
            raise CalibrationError("calibration probe saw a null field")
        spread_db = 20.0 * np.log10(mags.max() / mags.min())
        if spread_db > 1.0:
            raise CalibrationError(
                f"calibration did not converge: {spread_db:.2f} dB spread over probe directions")
        scales.append(target / mags.mean())
    scales = np.asarray(scales)
    drift = np.abs(20.0 * np.log10(scales / scales[0]))
    if drift.max() > 0.5:
        raise CalibrationError(
            f"calibration scale varies {drift.max():.2f} dB across frequencies")
    return float(scales[0])
