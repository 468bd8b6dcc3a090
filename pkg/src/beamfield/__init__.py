"""Gaussian beam field solver over triangulated outdoor scenes.

Traces beams through a scene, reconstructs complex pressure at observers by
beam summation, and offers sequential, flat-parallel, and dynamic-splitting
execution plans with bounded-memory chunking.
"""

__version__ = "0.1.0"

from .beamtrace import (Atmosphere, BeamPath, LaunchGrid, SourceSpec,
                        TraceConfig, initial_pq, launch_directions, q_at,
                        sound_speed, trace, travel_time)
from .config import CaseConfig, parse_config
from .errors import (BudgetError, CalibrationError, ConfigError,
                     DegenerateBeamError, SceneError)
from .gbs import (FieldResult, ObserverSet, beam_pressure, calibrate_phi,
                  nearest_on_path, spl, sum_at_observer)
from .oracle import MonopoleCase, brute_force_sum, image_source_field, monopole_free
from .parallel import (ChunkPlan, ExecPlan, PhaseTimings, measure,
                       plan_chunks, run_dynamic, run_flat, run_pipeline)
from .scene import (Material, RayHit, Scene, Triangle, build_bvh, intersect,
                    load_scene, make_city, make_ground_plane, write_scene)

__all__ = [
    "Atmosphere", "BeamPath", "BudgetError", "CalibrationError", "CaseConfig",
    "ChunkPlan", "ConfigError", "DegenerateBeamError", "ExecPlan",
    "FieldResult", "LaunchGrid", "Material", "MonopoleCase", "ObserverSet",
    "PhaseTimings", "RayHit", "Scene", "SceneError", "SourceSpec",
    "TraceConfig", "Triangle", "beam_pressure", "brute_force_sum", "build_bvh",
    "calibrate_phi", "image_source_field", "initial_pq", "intersect",
    "launch_directions", "load_scene", "make_city", "make_ground_plane",
    "measure", "monopole_free", "nearest_on_path", "parse_config",
    "plan_chunks", "q_at", "run_dynamic", "run_flat", "run_pipeline",
    "sound_speed", "spl", "sum_at_observer", "trace", "travel_time",
    "write_scene",
]
