#!/usr/bin/env python3
"""Build, validate, and trace one dual certificate.

Draws random separated supports and unit signs, solves the interpolation
system, validates on a grid, and writes the |P|, |Q| trace CSV for
plotting.
"""

import argparse

import numpy as np

from atomdemix import certificate, dualpoly, model


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--M", type=int, default=32)
    ap.add_argument("--K1", type=int, default=4)
    ap.add_argument("--K2", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--grid-size", type=int, default=65_536)
    ap.add_argument("--out", default="certificate_trace.csv")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    k_total = args.K1 + args.K2
    supports = model.draw_supports(k_total, 1.0 / args.M, rng)
    signs = np.exp(2j * np.pi * rng.uniform(size=k_total))
    modulator = model.draw_modulator(args.M, seed=args.seed)
    kern = certificate.fejer_coeffs(args.M)

    sys = certificate.assemble_system(
        kern, supports[: args.K1], signs[: args.K1],
        supports[args.K1 :], signs[args.K1 :], modulator,
    )
    sys = certificate.solve_certificate(sys)
    report = certificate.validate_certificate(
        sys, certificate.ValidationConfig(grid_size=args.grid_size)
    )
    norms = certificate.block_norm_report(sys)

    print(f"interpolation residual: {report.interp_residual:.3e}")
    print(f"max |P| off supports:   {max(report.channel1.max_far, report.channel1.max_near):.8f}")
    print(f"max |Q| off supports:   {max(report.channel2.max_far, report.channel2.max_near):.8f}")
    print(f"block norms in bounds:  {norms.within_bounds}")
    print(f"valid:                  {report.valid}")

    p_hat = certificate.certificate_to_dual_vector(sys)
    dualpoly.save_polynomial_csv(args.out, p_hat, modulator, args.grid_size)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
