"""Analytical references and brute-force baselines for verification.

Everything here is pure, bit-deterministic, and deliberately built on a
different code path (plain numpy, no acceleration structures, no cutoffs)
than the fast implementations it checks.

Time convention: e^{-i omega t}, so the outgoing point source carries
e^{+ikr}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamtrace import Atmosphere, SourceSpec


@dataclass(frozen=True)
class MonopoleCase:
    """Point source above a rigid plane z = 0."""
    source_z: float = 5.0
    freq: float = 500.0

    def __post_init__(self):
        if not self.source_z > 0:
            raise ValueError("source must sit above the plane")
        if not self.freq > 0:
            raise ValueError("frequency must be positive")


def monopole_free(r: float, k: float) -> complex:
    """Free-field point source, e^{ikr} / (4 pi r)."""
    if not r > 0:
        raise ValueError("radius must be positive")
    return complex(np.exp(1j * k * r) / (4.0 * np.pi * r))


def image_source_field(case: MonopoleCase, observer, c: float = 343.23) -> complex:
    """Direct plus mirror-source field over the rigid plane (coefficient +1)."""
    obs = np.asarray(observer, dtype=np.float64)
    if not obs[2] > 0:
        raise ValueError("observer must sit above the plane")
    k = 2.0 * np.pi * case.freq / c
    src = np.array([0.0, 0.0, case.source_z])
    img = np.array([0.0, 0.0, -case.source_z])
    r_direct = float(np.linalg.norm(obs - src))
    r_image = float(np.linalg.norm(obs - img))
    return monopole_free(r_direct, k) + monopole_free(r_image, k)


def brute_force_sum(observer, paths, omega: float, atmosphere: Atmosphere,
                    source: SourceSpec, calibration: float = 1.0) -> complex:
    """Reference beam sum: no cutoff, no shortcuts, ascending-index loop.

    Mirrors the contribution rule of the fast path (including the exclusion
    of observers behind a beam's launch point) with independent numpy math.
    """
    obs = np.asarray(observer, dtype=np.float64)
    c = atmosphere.sound_speed
    total = 0.0 + 0.0j
    for path in paths:
        best = None
        for k, seg in enumerate(path.segments):
            w = obs - seg.origin
            proj = float(w @ seg.direction)
            t = min(max(proj, 0.0), seg.length)
            v = w - t * seg.direction
            d2 = float(v @ v)
            if best is None or d2 < best[0]:
                q1 = float(v @ seg.e1)
                q2 = float(v @ seg.e2)
                behind = (k == 0) and (t == 0.0) and (proj < 0.0)
                best = (d2, seg.s_start + t, q1 * q1 + q2 * q2,
                        seg.cum_reflection, behind)
        if best is None or best[4]:
            continue
        _, s, q_sq, refl, _ = best
        qs = s + 1j * path.beam_param_im
        field = (source.amplitude_phi * np.sqrt(c) / qs * refl
                 * np.exp(1j * omega * s / c + 1j * omega * q_sq / (2.0 * c * qs)))
        total += (1j * omega / (2.0 * np.pi * c)) * path.weight_dgamma * field
    return complex(calibration * total)
