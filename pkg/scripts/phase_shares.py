#!/usr/bin/env python3
"""Measure trace/summation time shares on a city workload per ray count.

Reproduces the phase-dominance analysis at desk scale: with enough rays and
observers the summation phase swamps the trace phase in a sequential run.
"""

import argparse

import numpy as np

from beamfield.beamtrace import Atmosphere, LaunchGrid, SourceSpec, TraceConfig
from beamfield.gbs import ObserverSet
from beamfield.parallel import ExecPlan, run_pipeline
from beamfield.scene import make_city


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rays", default="256,1024,4096",
                    help="comma list of ray counts (squares work best)")
    ap.add_argument("--observers", type=int, default=101,
                    help="observer grid edge length")
    args = ap.parse_args()

    scene = make_city()
    atmo = Atmosphere(20.0)
    source = SourceSpec(position=[20.0, 20.0, 2.0], frequencies=[125.0],
                        beam_param_im=-10.0)
    tcfg = TraceConfig(n_steps=5000, dt=1e-4, r_max=20)
    edge = args.observers
    xs = np.linspace(-50, 50, edge)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    observers = ObserverSet(np.stack([gx.ravel(), gy.ravel(),
                                      np.full(gx.size, 1.8)], axis=1))

    print(f"{'rays':>8} {'rt_s':>9} {'gbs_s':>9} {'rt_share':>9} {'gbs_share':>10}")
    for total in (int(x) for x in args.rays.split(",")):
        n = max(2, int(np.sqrt(total)))
        grid = LaunchGrid(n_theta=n, n_phi=total // n)
        _, t = run_pipeline(scene, source, grid, tcfg, observers,
                            ExecPlan(mode="sequential"), atmo, calibration=1.0)
        print(f"{grid.n_rays:>8} {t.rt_seconds:>9.3f} {t.gbs_seconds:>9.3f} "
              f"{t.rt_share:>9.3f} {t.gbs_share:>10.3f}")


if __name__ == "__main__":
    main()
