"""Workflow orchestration: validate, run, bench, and plot-ready outputs.

The harness wires configs into the pipeline and writes deterministic files:
field CSVs, timing CSVs, grayscale SPL heatmaps with sidecar scales, and a
JSON run report. Field outputs are bit-identical for a given config + scene
across runs and execution plans; timing files, by nature, are not.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import __version__ as _pkg_version
from .beamtrace import (Atmosphere, LaunchGrid, SourceSpec, TraceConfig,
                        launch_directions, sound_speed)
from .config import CaseConfig, ObserverGridSpec, echo_config
from .errors import ConfigError
from .gbs import ObserverSet, spl
from .oracle import MonopoleCase, image_source_field
from .parallel import (ExecPlan, PhaseTimings, pipeline_calibration,
                       run_pipeline)
from .scene import Scene, load_scene, make_ground_plane

# Verification thresholds: SPL error vs the image-source reference on the
# probe line, excluding points near predicted interference nulls.
VALIDATE_MEDIAN_DB = 1.0
VALIDATE_MAX_DB = 3.0
NULL_EXCLUSION_LAMBDA = 0.1

FIELD_CSV_HEADER = "x,y,z,freq_hz,re_p,im_p,spl_db"
TIMING_CSV_HEADER = ("mode,workers,rays,observers,chunks,rt_s,gbs_s,total_s,"
                     "rt_share,gbs_share,speedup")


def _g(x) -> str:
    return format(float(x), ".17g")


def atmosphere_from_config(cfg: CaseConfig) -> Atmosphere:
    return Atmosphere(temperature_c=cfg.ta_c, rel_humidity_pct=cfg.hr_pct,
                      pressure_atm=cfg.pa_atm)


def source_from_config(cfg: CaseConfig, freqs=None) -> SourceSpec:
    return SourceSpec(position=np.asarray(cfg.src_pos),
                      frequencies=tuple(freqs) if freqs else cfg.freqs_hz,
                      amplitude_phi=cfg.phi_amp, beam_param_im=cfg.im_b)


def grid_from_config(cfg: CaseConfig) -> LaunchGrid:
    return LaunchGrid(cfg.theta_min_deg, cfg.theta_max_deg,
                      cfg.phi_min_deg, cfg.phi_max_deg, cfg.n_theta, cfg.n_phi)


def trace_config_from_config(cfg: CaseConfig) -> TraceConfig:
    return TraceConfig(n_steps=cfg.n_steps, dt=cfg.dt_s, r_max=cfg.r_max)


def plan_from_config(cfg: CaseConfig, mode=None, workers=None,
                     memory_budget=None) -> ExecPlan:
    return ExecPlan(mode=mode or cfg.mode,
                    workers=workers if workers is not None else cfg.workers,
                    split_threshold=cfg.split_threshold,
                    memory_budget=(memory_budget if memory_budget is not None
                                   else cfg.memory_budget_bytes))


def scaled_atmosphere(atmo: Atmosphere, speed_scale: float) -> Atmosphere:
    """Atmosphere whose sound speed is exactly speed_scale times the input's.

    Realized through the temperature so the speed/temperature relation still
    holds (used by the validation negative control).
    """
    c_target = atmo.sound_speed * speed_scale
    t_new = 273.15 * ((c_target / 331.3) ** 2 - 1.0)
    return Atmosphere(temperature_c=t_new, rel_humidity_pct=atmo.rel_humidity_pct,
                      pressure_atm=atmo.pressure_atm)


def predicted_null_exclusion(delta: float, wavelength: float,
                             band: float = NULL_EXCLUSION_LAMBDA) -> bool:
    """True when the direct/image path difference sits near a cancellation."""
    if delta <= 0:
        return False
    half = wavelength / 2.0
    m = np.arange(0, int(delta / half) + 2)
    return bool(np.min(np.abs(delta - (2 * m + 1) * half)) <= band * wavelength)


@dataclass
class FreqValidation:
    freq: float
    median_abs_db: float
    max_abs_db: float
    n_points: int
    n_excluded: int

    @property
    def passed(self) -> bool:
        return (self.median_abs_db <= VALIDATE_MEDIAN_DB
                and self.max_abs_db <= VALIDATE_MAX_DB)


@dataclass
class ValidationOutcome:
    per_freq: list
    calibration: float
    timings: PhaseTimings

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.per_freq)


def cmd_validate(cfg: CaseConfig, freq: float | None = None, out_dir=None,
                 sound_speed_scale: float = 1.0) -> ValidationOutcome:
    """Monopole-over-rigid-plane verification against the image source.

    Runs the beam solver on the config's probe observers and compares SPL
    point by point with the analytic two-path field, excluding points whose
    path difference predicts an interference null. sound_speed_scale != 1
    detunes the solver only (the reference keeps the true speed), which is
    the negative control.
    """
    freqs = cfg.freqs_hz if freq is None else tuple(f for f in cfg.freqs_hz if f == freq)
    if not freqs:
        raise ConfigError(f"frequency {freq} is not in the config list {cfg.freqs_hz}")
    if not cfg.src_pos[2] > 0:
        raise ConfigError("validation needs a source above the ground plane")

    atmo_true = atmosphere_from_config(cfg)
    atmo_solver = (atmo_true if sound_speed_scale == 1.0
                   else scaled_atmosphere(atmo_true, sound_speed_scale))
    source = source_from_config(cfg, freqs=freqs)
    grid = grid_from_config(cfg)
    tcfg = trace_config_from_config(cfg)
    scene = make_ground_plane(1000.0)
    observers = ObserverSet(cfg.observer_points())
    plan = plan_from_config(cfg)

    calibration = pipeline_calibration(source, grid, tcfg, atmo_solver)
    field, timings = run_pipeline(scene, source, grid, tcfg, observers, plan,
                                  atmo_solver, calibration=calibration)

    c_true = atmo_true.sound_speed
    src = np.asarray(cfg.src_pos)
    img = src * np.array([1.0, 1.0, -1.0])
    pts = observers.points
    r_direct = np.linalg.norm(pts - src, axis=1)
    r_image = np.linalg.norm(pts - img, axis=1)
    delta = r_image - r_direct

    per_freq = []
    for fi, f in enumerate(freqs):
        lam = c_true / f
        case = MonopoleCase(source_z=float(src[2]), freq=f)
        rows = []
        errs = []
        n_excl = 0
        for oi in range(pts.shape[0]):
            ref = image_source_field(case, pts[oi] - np.array([src[0], src[1], 0.0]),
                                     c=c_true)
            spl_ref = spl(ref)
            spl_gbt = float(field.spl[oi, fi])
            excluded = predicted_null_exclusion(float(delta[oi]), lam)
            if excluded:
                n_excl += 1
            else:
                errs.append(abs(spl_gbt - spl_ref))
            rows.append((pts[oi], spl_gbt, spl_ref, excluded))
        errs = np.asarray(errs)
        per_freq.append(FreqValidation(freq=f, median_abs_db=float(np.median(errs)),
                                       max_abs_db=float(errs.max()),
                                       n_points=pts.shape[0], n_excluded=n_excl))
        if out_dir is not None:
            path = _freq_file(out_dir, "validate", f, ".csv")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("x,y,z,spl_gbt_db,spl_oracle_db,abs_err_db,excluded\n")
                for p, s_g, s_o, ex in rows:
                    err = abs(s_g - s_o)
                    fh.write(f"{_g(p[0])},{_g(p[1])},{_g(p[2])},{_g(s_g)},"
                             f"{_g(s_o)},{_g(err)},{int(ex)}\n")
    return ValidationOutcome(per_freq=per_freq, calibration=calibration,
                             timings=timings)


def _freq_file(out_dir, stem, freq, suffix):
    import os
    tag = format(freq, "g").replace(".", "p")
    return os.path.join(out_dir, f"{stem}_{tag}hz{suffix}")


def write_field_csv(path, observers: ObserverSet, freqs, field) -> None:
    """Deterministic field rows: observer index major, frequency minor."""
    pts = observers.points
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(FIELD_CSV_HEADER + "\n")
        for oi in range(pts.shape[0]):
            x, y, z = pts[oi]
            for fi, f in enumerate(freqs):
                p = field.pressure[oi, fi]
                fh.write(f"{_g(x)},{_g(y)},{_g(z)},{_g(f)},{_g(p.real)},"
                         f"{_g(p.imag)},{_g(field.spl[oi, fi])}\n")


def write_timing_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TIMING_CSV_HEADER + "\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")


def timing_row(mode, workers, rays, observers, chunks, t: PhaseTimings):
    speedup = "" if t.speedup_vs_baseline is None else f"{t.speedup_vs_baseline:.4f}"
    return (mode, workers, rays, observers, chunks,
            f"{t.rt_seconds:.6f}", f"{t.gbs_seconds:.6f}", f"{t.total_seconds:.6f}",
            f"{t.rt_share:.6f}", f"{t.gbs_share:.6f}", speedup)


def emit_heatmap(spl_values, grid_spec: ObserverGridSpec, out_path) -> dict:
    """8-bit grayscale SPL raster plus a sidecar recording the scale.

    Pixels map [spl_min, spl_max] linearly onto [0, 255]; null points
    (non-finite SPL) render as 0 and are counted in the sidecar.
    """
    from PIL import Image

    vals = np.asarray(spl_values, dtype=np.float64).reshape(grid_spec.n2, grid_spec.n1)
    finite = np.isfinite(vals)
    n_null = int(vals.size - finite.sum())
    if finite.any():
        lo = float(vals[finite].min())
        hi = float(vals[finite].max())
    else:
        lo = hi = 0.0
    if hi > lo:
        scaled = np.clip((vals - lo) / (hi - lo), 0.0, 1.0)
        img = np.rint(scaled * 255.0).astype(np.uint8)
    else:
        img = np.zeros(vals.shape, dtype=np.uint8)
    img[~finite] = 0
    Image.fromarray(img, mode="L").save(out_path)
    meta = {"width": grid_spec.n1, "height": grid_spec.n2,
            "spl_min_db": lo, "spl_max_db": hi, "null_points": n_null}
    side = str(out_path) + ".txt"
    with open(side, "w", encoding="utf-8") as fh:
        fh.write(f"width={grid_spec.n1}\nheight={grid_spec.n2}\n")
        fh.write(f"spl_min_db={_g(lo)}\nspl_max_db={_g(hi)}\n")
        fh.write(f"null_points={n_null}\n")
        fh.write("mapping=linear [spl_min_db, spl_max_db] -> [0, 255], row-major\n")
    return meta


@dataclass
class RunReport:
    config_text: str
    calibration: float
    rt_seconds: float
    gbs_seconds: float
    total_seconds: float
    gbs_evaluations: int
    outputs: list
    versions: dict
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def _versions() -> dict:
    import numba
    import numpy
    return {"beamfield": _pkg_version, "numpy": numpy.__version__,
            "numba": numba.__version__}


def cmd_run(cfg: CaseConfig, scene_path, out_dir, mode=None, workers=None,
            memory_budget=None, dump_paths: bool = False,
            uncalibrated: bool = False) -> RunReport:
    """Full pipeline run; writes field CSV, timing CSV, heatmaps, report."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    scene = load_scene(scene_path, cfg) if scene_path is not None else make_ground_plane()
    atmo = atmosphere_from_config(cfg)
    source = source_from_config(cfg)
    grid = grid_from_config(cfg)
    tcfg = trace_config_from_config(cfg)
    observers = ObserverSet(cfg.observer_points())
    plan = plan_from_config(cfg, mode=mode, workers=workers, memory_budget=memory_budget)

    calibration = 1.0 if uncalibrated else pipeline_calibration(source, grid, tcfg, atmo)
    field, timings = run_pipeline(scene, source, grid, tcfg, observers, plan,
                                  atmo, calibration=calibration)

    outputs = []
    field_path = os.path.join(out_dir, "field.csv")
    write_field_csv(field_path, observers, cfg.freqs_hz, field)
    outputs.append(field_path)

    n_chunks = 1
    if plan.memory_budget is not None:
        from .parallel import measure_per_ray_bytes, plan_chunks
        launch = launch_directions(grid)
        per_ray = plan.per_ray_bytes or measure_per_ray_bytes(
            scene, source, launch, tcfg, atmo)
        n_chunks = plan_chunks(len(launch), plan.memory_budget, per_ray).n_chunks
    timing_path = os.path.join(out_dir, "timings.csv")
    write_timing_csv(timing_path, [timing_row(plan.mode, plan.workers,
                                              grid.n_rays, observers.count,
                                              n_chunks, timings)])
    outputs.append(timing_path)

    if cfg.obs_grid is not None:
        for fi, f in enumerate(cfg.freqs_hz):
            hp = _freq_file(out_dir, "heatmap", f, ".png")
            emit_heatmap(field.spl[:, fi], cfg.obs_grid, hp)
            outputs.append(hp)
            outputs.append(hp + ".txt")

    if dump_paths:
        outputs.append(_dump_paths(cfg, scene, atmo, source, grid, tcfg, out_dir))

    report = RunReport(config_text=echo_config(cfg), calibration=calibration,
                       rt_seconds=timings.rt_seconds, gbs_seconds=timings.gbs_seconds,
                       total_seconds=timings.total_seconds,
                       gbs_evaluations=timings.gbs_evaluations,
                       outputs=[os.path.basename(p) for p in outputs],
                       versions=_versions())
    with open(os.path.join(out_dir, "run_report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    return report


def _dump_paths(cfg, scene, atmo, source, grid, tcfg, out_dir):
    """Diagnostic CSV, one row per traced segment."""
    import os

    from .beamtrace import allocate_bundle, trace_into

    launch = launch_directions(grid)
    c = atmo.sound_speed
    bundle = allocate_bundle(len(launch), launch, 0, source, tcfg, c)
    trace_into(scene, source, launch, tcfg, c, bundle, 0, 0, len(launch))
    path = os.path.join(out_dir, "paths.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ray,segment,ox,oy,oz,dx,dy,dz,length_m,s_start_m,t_start_s,"
                 "cum_reflection\n")
        for i in range(bundle.n_paths):
            base = i * bundle.max_seg
            for k in range(int(bundle.n_segs[i])):
                r = base + k
                o = bundle.seg_origin[r]
                d = bundle.seg_dir[r]
                fh.write(f"{i},{k},{_g(o[0])},{_g(o[1])},{_g(o[2])},"
                         f"{_g(d[0])},{_g(d[1])},{_g(d[2])},"
                         f"{_g(bundle.seg_len[r])},{_g(bundle.seg_s0[r])},"
                         f"{_g(bundle.seg_s0[r] / c)},{_g(bundle.seg_refl[r])}\n")
    return path


def _factor_rays(total: int):
    for d in range(int(math.isqrt(total)), 0, -1):
        if total % d == 0:
            return d, total // d
    return 1, total


def cmd_bench(cfg: CaseConfig, scene_path, rays_list, modes, workers_list,
              out_csv) -> list:
    """Timing sweep over ray counts x modes x worker counts.

    Each ray count gets a sequential baseline; other cells report speedup
    against it. Fields are discarded (scale fixed at 1), only timings are
    kept.
    """
    from .parallel import measure

    scene = load_scene(scene_path, cfg) if scene_path is not None else make_ground_plane()
    atmo = atmosphere_from_config(cfg)
    source = source_from_config(cfg)
    tcfg = trace_config_from_config(cfg)
    observers = ObserverSet(cfg.observer_points())

    rows = []
    results = []
    for total in rays_list:
        n_th, n_ph = _factor_rays(int(total))
        grid = LaunchGrid(cfg.theta_min_deg, cfg.theta_max_deg,
                          cfg.phi_min_deg, cfg.phi_max_deg, n_th, n_ph)

        def do_run(plan):
            return run_pipeline(scene, source, grid, tcfg, observers, plan,
                                atmo, calibration=1.0)

        base_plan = ExecPlan(mode="sequential", workers=1,
                             split_threshold=cfg.split_threshold,
                             memory_budget=cfg.memory_budget_bytes)
        baseline = measure(lambda: do_run(base_plan))
        baseline.speedup_vs_baseline = 1.0
        rows.append(timing_row("sequential", 1, grid.n_rays, observers.count,
                               1, baseline))
        results.append(("sequential", 1, grid.n_rays, baseline))
        for mode in modes:
            if mode == "sequential":
                continue
            for w in workers_list:
                plan = ExecPlan(mode=mode, workers=w,
                                split_threshold=cfg.split_threshold,
                                memory_budget=cfg.memory_budget_bytes)
                t = measure(lambda: do_run(plan), baseline=baseline)
                rows.append(timing_row(mode, w, grid.n_rays, observers.count,
                                       1, t))
                results.append((mode, w, grid.n_rays, t))
    if out_csv is not None:
        write_timing_csv(out_csv, rows)
    return results
