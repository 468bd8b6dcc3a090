import pathlib

import numpy as np
import pytest

from beamfield.beamtrace import Atmosphere, LaunchGrid, SourceSpec, TraceConfig
from beamfield.scene import _assemble, make_ground_plane

CONFIG_DIR = pathlib.Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def atmo():
    return Atmosphere(temperature_c=20.0)


@pytest.fixture(scope="session")
def empty_scene():
    return _assemble(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)), [], [])


@pytest.fixture(scope="session")
def ground():
    return make_ground_plane(1000.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def make_source(freqs=(500.0,), im_b=-12.0, position=(0.0, 0.0, 0.0)):
    return SourceSpec(position=np.asarray(position), frequencies=freqs,
                      beam_param_im=im_b)


def full_sphere(n=64):
    return LaunchGrid(0.0, 180.0, 0.0, 360.0, n, n)


def quick_trace_cfg(n_steps=2000, dt=1e-4, r_max=10):
    return TraceConfig(n_steps=n_steps, dt=dt, r_max=r_max)


def random_triangles(rng, n, lo=-50.0, hi=50.0, size=4.0):
    """Random triangle soup as an (n, 3, 3) vertex array."""
    centers = rng.uniform(lo, hi, size=(n, 3))
    tris = centers[:, None, :] + rng.uniform(-size, size, size=(n, 3, 3))
    return tris


def scene_from_triangles(tris, categories=None):
    tris = np.asarray(tris, dtype=np.float64)
    n = tris.shape[0]
    cats = categories if categories is not None else ["building"] * n
    return _assemble(tris[:, 0], tris[:, 1], tris[:, 2], [0] * n, cats)
