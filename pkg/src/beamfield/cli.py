"""Command line interface: validate, run, bench.

Exit codes: 0 success (validation passed), 1 validation failed, 2 input
error (bad config, scene, or arguments).
"""

from __future__ import annotations

import argparse
import sys

from .config import parse_config
from .errors import BudgetError, CalibrationError, ConfigError, SceneError


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="beamfield",
                                 description="Gaussian beam field solver")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="verify against the rigid-plane analytic field")
    v.add_argument("--config", required=True)
    v.add_argument("--freq", type=float, default=None,
                   help="restrict to one of the config's frequencies")
    v.add_argument("--out", default=None, help="directory for per-point error CSVs")
    v.add_argument("--sound-speed-scale", type=float, default=1.0,
                   help="detune the solver sound speed (negative control)")

    r = sub.add_parser("run", help="full pipeline over a scene")
    r.add_argument("--config", required=True)
    r.add_argument("--scene", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--mode", choices=["seq", "flat", "dyn"], default=None)
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--chunk-budget", type=int, default=None, metavar="BYTES")
    r.add_argument("--dump-paths", action="store_true",
                   help="also write one CSV row per traced segment")
    r.add_argument("--uncalibrated", action="store_true",
                   help="skip the free-field calibration (scale 1)")

    b = sub.add_parser("bench", help="timing sweep over rays x modes x workers")
    b.add_argument("--config", required=True)
    b.add_argument("--scene", required=True)
    b.add_argument("--rays", required=True, help="comma list of ray counts")
    b.add_argument("--modes", default="flat,dynamic", help="comma list of modes")
    b.add_argument("--workers", default="1,2,4", help="comma list of worker counts")
    b.add_argument("--out", required=True, help="timing CSV path")
    return ap


_MODE_NAMES = {"seq": "sequential", "flat": "flat", "dyn": "dynamic", None: None}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.command == "validate":
            from .harness import cmd_validate
            outcome = cmd_validate(cfg, freq=args.freq, out_dir=args.out,
                                   sound_speed_scale=args.sound_speed_scale)
            for f in outcome.per_freq:
                status = "PASS" if f.passed else "FAIL"
                print(f"{status} {f.freq:g} Hz: median |dSPL| = {f.median_abs_db:.3f} dB, "
                      f"max = {f.max_abs_db:.3f} dB "
                      f"({f.n_points - f.n_excluded}/{f.n_points} points, "
                      f"{f.n_excluded} near predicted nulls excluded)")
            return 0 if outcome.passed else 1
        if args.command == "run":
            from .harness import cmd_run
            report = cmd_run(cfg, args.scene, args.out,
                             mode=_MODE_NAMES[args.mode], workers=args.workers,
                             memory_budget=args.chunk_budget,
                             dump_paths=args.dump_paths,
                             uncalibrated=args.uncalibrated)
            print(f"wrote {', '.join(report.outputs)} to {args.out} "
                  f"(rt {report.rt_seconds:.3f} s, gbs {report.gbs_seconds:.3f} s)")
            return 0
        if args.command == "bench":
            from .harness import cmd_bench
            rays = [int(x) for x in args.rays.split(",") if x]
            modes = [m for m in args.modes.split(",") if m]
            workers = [int(x) for x in args.workers.split(",") if x]
            for m in modes:
                if m not in ("sequential", "flat", "dynamic"):
                    raise ConfigError(f"unknown mode {m!r}")
            cmd_bench(cfg, args.scene, rays, modes, workers, args.out)
            print(f"wrote {args.out}")
            return 0
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, SceneError, BudgetError, CalibrationError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
