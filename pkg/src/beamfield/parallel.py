"""Execution plans: sequential baseline, flat partition, dynamic splitting.

Flat mode statically blocks an index range across a fixed pool of OS threads.
Dynamic mode lets any worker split a range whose estimated cost exceeds a
threshold and push the halves onto a shared queue, so idle workers absorb
skewed loads. All modes write results into per-index slots and accumulate
per-observer sums in ascending beam order, which makes the field output
bit-identical across modes, worker counts, and chunkings.

Compute kernels release the GIL, so OS threads give genuine parallelism.
"""

from __future__ import annotations

import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .beamtrace import (Atmosphere, LaunchGrid, SourceSpec, TraceConfig,
                        allocate_bundle, launch_directions, trace_into)
from .errors import BudgetError
from .gbs import FieldResult, ObserverSet, calibrate_phi
from .scene import Scene

MODES = ("sequential", "flat", "dynamic")

DEFAULT_SPLIT_THRESHOLD = 4096  # estimated beam evaluations per task

PER_RAY_SAFETY = 1.5


@dataclass(frozen=True)
class ExecPlan:
    mode: str = "sequential"
    workers: int = 1
    split_threshold: int = DEFAULT_SPLIT_THRESHOLD
    memory_budget: int | None = None
    per_ray_bytes: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown execution mode {self.mode!r}")
        if self.workers < 1:
            raise ValueError("worker count must be at least 1")
        if self.split_threshold < 1:
            raise ValueError("split threshold must be at least 1")
        if (self.memory_budget is not None and self.per_ray_bytes is not None
                and self.memory_budget < self.per_ray_bytes):
            raise ValueError("memory budget smaller than one ray")


@dataclass(frozen=True)
class ChunkPlan:
    chunk_sizes: tuple

    def __post_init__(self):
        object.__setattr__(self, "chunk_sizes", tuple(int(c) for c in self.chunk_sizes))
        if any(c <= 0 for c in self.chunk_sizes):
            raise ValueError("chunk sizes must be positive")

    @property
    def n_chunks(self) -> int:
        return len(self.chunk_sizes)

    @property
    def total(self) -> int:
        return sum(self.chunk_sizes)


@dataclass
class PhaseTimings:
    rt_seconds: float
    gbs_seconds: float
    total_seconds: float
    rt_share: float = 0.0
    gbs_share: float = 0.0
    speedup_vs_baseline: float | None = None
    gbs_evaluations: int = 0

    def __post_init__(self):
        if self.total_seconds > 0 and self.rt_share == 0.0 and self.gbs_share == 0.0:
            self.rt_share = self.rt_seconds / self.total_seconds
            self.gbs_share = self.gbs_seconds / self.total_seconds


def plan_chunks(total_rays: int, memory_budget: int, per_ray_bytes: int) -> ChunkPlan:
    """Greedy maximal chunks under the memory budget; last chunk the remainder."""
    if total_rays < 1:
        raise ValueError("need at least one ray to plan chunks")
    if per_ray_bytes <= 0:
        raise ValueError("per-ray size must be positive")
    cap = memory_budget // per_ray_bytes
    if cap <= 0:
        raise BudgetError(
            f"memory budget {memory_budget} cannot hold one ray of {per_ray_bytes} bytes")
    sizes = [cap] * (total_rays // cap)
    rem = total_rays % cap
    if rem:
        sizes.append(rem)
    return ChunkPlan(tuple(sizes))


def block_partition(n: int, workers: int):
    """Contiguous near-even blocks of [0, n), one per worker."""
    workers = max(1, workers)
    base, rem = divmod(n, workers)
    blocks = []
    lo = 0
    for w in range(workers):
        size = base + (1 if w < rem else 0)
        blocks.append((lo, lo + size))
        lo += size
    return blocks


class WorkerPool:
    """Fixed pool of OS threads; one pool serves a whole pipeline run."""

    def __init__(self, workers: int):
        self.workers = max(1, int(workers))
        self._executor = ThreadPoolExecutor(max_workers=self.workers)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self._executor.shutdown(wait=True)
        return False

    def flat(self, n: int, run_range) -> None:
        """Static block partition of [0, n) across the workers."""
        futures = [self._executor.submit(run_range, lo, hi)
                   for lo, hi in block_partition(n, self.workers) if hi > lo]
        for f in futures:
            f.result()

    def dynamic(self, n: int, run_range, cost_range, split_threshold: int) -> None:
        """Recursive range splitting with a shared work queue.

        A worker that pops a range costing more than the threshold splits it
        in half and requeues both halves; idle workers pick them up.
        """
        if n <= 0:
            return
        q: queue.Queue = queue.Queue()
        q.put((0, n))
        stop = None
        errors: list = []

        def consume():
            while True:
                item = q.get()
                try:
                    if item is stop:
                        return
                    lo, hi = item
                    if hi - lo >= 2 and cost_range(lo, hi) > split_threshold:
                        mid = (lo + hi) // 2
                        q.put((lo, mid))
                        q.put((mid, hi))
                    else:
                        try:
                            run_range(lo, hi)
                        except BaseException as exc:  # noqa: BLE001 - reraised below
                            errors.append(exc)
                finally:
                    q.task_done()

        futures = [self._executor.submit(consume) for _ in range(self.workers)]
        q.join()
        for _ in futures:
            q.put(stop)
        for f in futures:
            f.result()
        if errors:
            raise errors[0]


def run_flat(tasks, workers: int):
    """Run independent tasks under a static block partition.

    Returns results in task order; the result list is identical for any
    worker count.
    """
    tasks = list(tasks)
    results = [None] * len(tasks)

    def run_range(lo, hi):
        for i in range(lo, hi):
            results[i] = tasks[i]()

    with WorkerPool(workers) as pool:
        pool.flat(len(tasks), run_range)
    return results


def run_dynamic(tasks, workers: int, split_threshold: int, costs=None):
    """Run independent tasks with dynamic range splitting and a shared queue.

    costs are per-task estimates (default 1 each); ranges split while their
    summed estimate exceeds split_threshold. Results come back in task order
    regardless of scheduling, so the reduction matches the sequential one.
    """
    tasks = list(tasks)
    n = len(tasks)
    if costs is None:
        costs = [1.0] * n
    prefix = np.concatenate([[0.0], np.cumsum(np.asarray(costs, dtype=np.float64))])
    results = [None] * n

    def run_range(lo, hi):
        for i in range(lo, hi):
            results[i] = tasks[i]()

    def cost_range(lo, hi):
        return prefix[hi] - prefix[lo]

    with WorkerPool(workers) as pool:
        pool.dynamic(n, run_range, cost_range, split_threshold)
    return results


def measure(run, baseline: PhaseTimings | None = None) -> PhaseTimings:
    """Time a pipeline-style callable on the monotonic clock.

    run() must return (result, PhaseTimings) or a PhaseTimings. The returned
    timing uses the outer wall time as the total, so phase shares leave any
    remainder to overhead; speedup is filled when a baseline is supplied.
    """
    t0 = time.perf_counter()
    out = run()
    total = time.perf_counter() - t0
    inner = out[1] if isinstance(out, tuple) else out
    t = PhaseTimings(rt_seconds=inner.rt_seconds, gbs_seconds=inner.gbs_seconds,
                     total_seconds=total,
                     rt_share=inner.rt_seconds / total if total > 0 else 0.0,
                     gbs_share=inner.gbs_seconds / total if total > 0 else 0.0,
                     gbs_evaluations=inner.gbs_evaluations)
    if baseline is not None:
        t.speedup_vs_baseline = baseline.total_seconds / total if total > 0 else None
    return t


def measure_per_ray_bytes(scene: Scene, source: SourceSpec, launch, cfg: TraceConfig,
                          atmosphere: Atmosphere) -> int:
    """Estimate chunk memory per ray from one traced ray, with a safety factor."""
    c = atmosphere.sound_speed
    bundle = allocate_bundle(1, launch, 0, source, cfg, c)
    trace_into(scene, source, launch, cfg, c, bundle, 0, 0, 1)
    per_row = 15 * 8  # 12 vector components + length, offset, reflection product
    measured = max(1, int(bundle.n_segs[0])) * per_row
    return int(measured * PER_RAY_SAFETY)


def run_pipeline(scene: Scene, source: SourceSpec, grid: LaunchGrid,
                 cfg: TraceConfig, observers: ObserverSet, plan: ExecPlan,
                 atmosphere: Atmosphere, calibration: float | None = None,
                 use_cutoff: bool = True):
    """Trace-then-sum pipeline under an execution plan, chunked to a budget.

    Each chunk is traced (rays in launch order) and summed (beams in global
    index order continuing per-observer accumulators), so the field output is
    bit-identical across modes, worker counts, and chunkings. Returns
    (FieldResult, PhaseTimings).
    """
    t_start = time.perf_counter()
    c = atmosphere.sound_speed
    launch = launch_directions(grid)
    n_rays = len(launch)
    omegas = source.omegas

    if plan.memory_budget is not None:
        per_ray = plan.per_ray_bytes
        if per_ray is None:
            per_ray = measure_per_ray_bytes(scene, source, launch, cfg, atmosphere)
        chunk_plan = plan_chunks(n_rays, plan.memory_budget, per_ray)
    else:
        chunk_plan = ChunkPlan((n_rays,))

    if calibration is None:
        calibration = pipeline_calibration(source, grid, cfg, atmosphere)

    n_obs = observers.count
    acc = np.zeros((n_obs, omegas.shape[0]), dtype=np.complex128)
    evals = np.zeros(n_obs, dtype=np.int64)
    obs_pts = observers.points

    rt_seconds = 0.0
    gbs_seconds = 0.0
    pool = WorkerPool(plan.workers) if plan.mode != "sequential" else None
    try:
        lo = 0
        for chunk_size in chunk_plan.chunk_sizes:
            hi = lo + chunk_size
            bundle = allocate_bundle(chunk_size, launch, lo, source, cfg, c)

            t0 = time.perf_counter()

            def rt_range(rlo, rhi, _lo=lo, _bundle=bundle):
                trace_into(scene, source, launch, cfg, c, _bundle,
                           _lo, _lo + rlo, _lo + rhi)

            if plan.mode == "sequential":
                rt_range(0, chunk_size)
            elif plan.mode == "flat":
                pool.flat(chunk_size, rt_range)
            else:
                max_seg = bundle.max_seg
                pool.dynamic(chunk_size, rt_range,
                             lambda a, b: (b - a) * max_seg, plan.split_threshold)
            rt_seconds += time.perf_counter() - t0

            t0 = time.perf_counter()

            def gbs_range(olo, ohi, _bundle=bundle, _n=chunk_size):
                kernels.gbs_accumulate(
                    _bundle.seg_origin, _bundle.seg_dir, _bundle.seg_e1,
                    _bundle.seg_e2, _bundle.seg_len, _bundle.seg_s0,
                    _bundle.seg_refl, _bundle.n_segs, _bundle.max_seg,
                    _bundle.weights, obs_pts, omegas, c,
                    -source.beam_param_im, source.amplitude_phi,
                    use_cutoff, acc, evals, olo, ohi, 0, _n)

            if plan.mode == "sequential":
                gbs_range(0, n_obs)
            elif plan.mode == "flat":
                pool.flat(n_obs, gbs_range)
            else:
                pool.dynamic(n_obs, gbs_range,
                             lambda a, b: (b - a) * chunk_size, plan.split_threshold)
            gbs_seconds += time.perf_counter() - t0

            lo = hi
    finally:
        if pool is not None:
            pool.__exit__(None, None, None)

    pressure = calibration * acc
    result = FieldResult.from_pressure(pressure, calibration)
    total = time.perf_counter() - t_start
    timings = PhaseTimings(rt_seconds=rt_seconds, gbs_seconds=gbs_seconds,
                           total_seconds=total,
                           rt_share=rt_seconds / total if total > 0 else 0.0,
                           gbs_share=gbs_seconds / total if total > 0 else 0.0,
                           gbs_evaluations=int(evals.sum()))
    return result, timings


def pipeline_calibration(source: SourceSpec, grid: LaunchGrid, cfg: TraceConfig,
                         atmosphere: Atmosphere) -> float:
    """Free-field calibration scale for a source, traced on an empty scene."""
    from .scene import _assemble  # local import to keep module load light

    empty = _assemble(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)), [], [])
    cal_grid = grid
    if (grid.n_rays < 64 * 64 or grid.theta_min > 0 or grid.theta_max < 180
            or grid.phi_min > 0 or grid.phi_max < 360):
        cal_grid = LaunchGrid(0.0, 180.0, 0.0, 360.0, 64, 64)
    launch = launch_directions(cal_grid)
    c = atmosphere.sound_speed
    bundle = allocate_bundle(len(launch), launch, 0, source, cfg, c)
    trace_into(empty, source, launch, cfg, c, bundle, 0, 0, len(launch))
    return calibrate_phi(bundle, atmosphere, source)
