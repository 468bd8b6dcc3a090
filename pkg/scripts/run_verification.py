#!/usr/bin/env python3
"""Run both rigid-plane verification cases and print the error summaries."""

import argparse
import pathlib
import sys

from beamfield.config import parse_config
from beamfield.harness import cmd_validate

CONFIGS = pathlib.Path(__file__).resolve().parent.parent / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=None, help="directory for per-point CSVs")
    ap.add_argument("--sound-speed-scale", type=float, default=1.0)
    args = ap.parse_args()

    ok = True
    for name in ("validate_50hz.cfg", "validate_500hz.cfg"):
        cfg = parse_config(CONFIGS / name)
        outcome = cmd_validate(cfg, out_dir=args.out,
                               sound_speed_scale=args.sound_speed_scale)
        for f in outcome.per_freq:
            status = "PASS" if f.passed else "FAIL"
            print(f"{status} {f.freq:g} Hz: median |dSPL| = {f.median_abs_db:.3f} dB, "
                  f"max = {f.max_abs_db:.3f} dB over "
                  f"{f.n_points - f.n_excluded} points "
                  f"({f.n_excluded} near predicted nulls excluded)")
        ok &= outcome.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
