#!/usr/bin/env python3
"""Success-rate sweeps along one axis: source count or bandwidth.

Produces the two monotonicity curves: rate vs K at fixed M (K1=K2=K)
and rate vs M at fixed K1=K2.
"""

import argparse

from atomdemix import experiments


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--M", type=int, default=16)
    ap.add_argument("--K", type=int, default=2)
    ap.add_argument("--k-values", default="1,2,3,4,5")
    ap.add_argument("--m-values", default="4,8,12,16")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-k", default="sweep_k.csv")
    ap.add_argument("--out-m", default="sweep_m.csv")
    args = ap.parse_args()

    cfg = experiments.ExperimentConfig(
        kind="phase-transition", m=args.M, k1=args.K, k2=args.K,
        trials=args.trials, seed=args.seed,
    )
    k_values = [int(v) for v in args.k_values.split(",")]
    m_values = [int(v) for v in args.m_values.split(",")]

    k_curve = experiments.run_success_sweep(cfg, k_values=k_values)
    experiments.save_sweep_csv(args.out_k, k_curve)
    print(f"wrote {args.out_k}")
    for x, rate in k_curve:
        print(f"  K={int(x)}  rate={rate:.2f}")

    m_curve = experiments.run_success_sweep(cfg, m_values=m_values)
    experiments.save_sweep_csv(args.out_m, m_curve)
    print(f"wrote {args.out_m}")
    for x, rate in m_curve:
        print(f"  M={int(x)}  rate={rate:.2f}")


if __name__ == "__main__":
    main()
