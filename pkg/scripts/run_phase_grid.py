#!/usr/bin/env python3
"""Phase-transition grid: success rate over (K1, K2) at fixed bandwidth.

Writes one CSV row per cell. Trials per cell redraw the modulator while
supports and amplitudes stay fixed, so the grid is deterministic in the
seed and stable under regridding.
"""

import argparse

from atomdemix import experiments


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--M", type=int, default=16)
    ap.add_argument("--K1-max", type=int, default=5)
    ap.add_argument("--K2-max", type=int, default=5)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--delta-min", type=float, default=None,
                    help="minimum separation (default 1/(2M))")
    ap.add_argument("--out", default="phase_grid.csv")
    args = ap.parse_args()

    cfg = experiments.ExperimentConfig(
        kind="phase-transition", m=args.M, k1=args.K1_max, k2=args.K2_max,
        delta_min=args.delta_min, trials=args.trials, seed=args.seed,
    )
    cells = experiments.run_phase_transition(cfg)
    experiments.save_phase_csv(args.out, cells)
    print(f"wrote {args.out} ({len(cells)} cells)")
    for c in cells:
        print(f"  K1={c.k1} K2={c.k2}  rate={c.rate:.2f}")


if __name__ == "__main__":
    main()
