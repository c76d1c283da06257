"""Command-line front end.

Subcommands: synth, solve, localize, certify, phase-transition, crb-compare.
Every flag can also come from a key=value config file (--config); flags win
on conflict. Outputs are written atomically. Exit codes: 0 success, 2 for
configuration problems, 3 for solver or numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import certificate, crb, dualpoly, experiments, model, solver
from .exceptions import AtomdemixError
from .seeding import derived_rng

# seed-derivation stages for draws made by the CLI itself (certify)
_STAGE_SUPPORTS1 = 11
_STAGE_SUPPORTS2 = 12
_STAGE_SIGNS1 = 13
_STAGE_SIGNS2 = 14
_STAGE_MODULATOR = 15

#: config-file keys, matching the flag spellings without leading dashes
CONFIG_KEYS = (
    "M", "K1", "K2", "delta-min", "trials", "seed", "sigma", "snr-db",
    "lambda", "out", "instance", "grid-size",
)


class UsageError(ValueError):
    """Configuration problem that maps to exit code 2."""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atomdemix",
        description="Two-channel point-source demixing experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("synth", "draw a random problem instance and write it as JSON"),
        ("solve", "demix an instance file and write the solution JSON"),
        ("localize", "demix, then localize sources off the dual polynomials"),
        ("certify", "build and validate a dual certificate"),
        ("phase-transition", "success-rate grid over source counts"),
        ("crb-compare", "localization MSE against the CRB over an SNR sweep"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="key=value file mirroring the flags")
        p.add_argument("--M", type=int, dest="m")
        p.add_argument("--K1", type=int, dest="k1")
        p.add_argument("--K2", type=int, dest="k2")
        p.add_argument("--delta-min", type=float, dest="delta_min")
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--sigma", type=float)
        p.add_argument(
            "--snr-db", dest="snr_db",
            help="target SNR in dB (comma-separated list for crb-compare)",
        )
        p.add_argument(
            "--lambda", type=float, dest="lambda_w",
            help="override the noise-matched penalty weight",
        )
        p.add_argument("--out", help="output path (default: print to stdout)")
        p.add_argument("--instance", help="instance JSON produced by synth")
        p.add_argument("--grid-size", type=int, dest="grid_size")
    return parser


def parse_config_file(path: str) -> dict:
    """key = value lines; '#' comments and blank lines are skipped."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key '{key}'")
        values[key] = value.strip()
    return values


_KEY_TO_ATTR = {
    "M": ("m", int),
    "K1": ("k1", int),
    "K2": ("k2", int),
    "delta-min": ("delta_min", float),
    "trials": ("trials", int),
    "seed": ("seed", int),
    "sigma": ("sigma", float),
    "snr-db": ("snr_db", str),
    "lambda": ("lambda_w", float),
    "out": ("out", str),
    "instance": ("instance", str),
    "grid-size": ("grid_size", int),
}

_DEFAULTS = {"m": 8, "k1": 2, "k2": 2, "trials": 20, "seed": 0}


def _merge_options(args: argparse.Namespace) -> dict:
    """Flags over config-file values over built-in defaults."""
    opts = dict(_DEFAULTS)
    for key in _KEY_TO_ATTR:
        opts.setdefault(_KEY_TO_ATTR[key][0], None)
    if args.config:
        for key, raw in parse_config_file(args.config).items():
            attr, cast = _KEY_TO_ATTR[key]
            try:
                opts[attr] = cast(raw)
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {raw!r}") from exc
    for attr in _KEY_TO_ATTR.values():
        flag_value = getattr(args, attr[0], None)
        if flag_value is not None:
            opts[attr[0]] = flag_value
    if opts["sigma"] is not None and opts["snr_db"] is not None:
        raise UsageError("give either --sigma or --snr-db, not both")
    return opts


def _snr_values(opts: dict) -> list[float]:
    raw = opts["snr_db"]
    if raw is None:
        raise UsageError("crb-compare needs --snr-db (comma-separated list)")
    try:
        return [float(tok) for tok in str(raw).split(",") if tok.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --snr-db list: {raw!r}") from exc


def _emit(opts: dict, text: str) -> None:
    if opts["out"]:
        model.atomic_write_text(opts["out"], text)
        print(f"wrote {opts['out']}")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _localization_config(opts: dict) -> dualpoly.LocalizationConfig:
    if opts["grid_size"] is None:
        return dualpoly.LocalizationConfig()
    return dualpoly.LocalizationConfig(grid_size=opts["grid_size"])


def _synth_instance(opts: dict) -> model.Instance:
    delta = opts["delta_min"] if opts["delta_min"] is not None else 0.5 / opts["m"]
    inst = model.draw_instance(
        opts["m"], opts["k1"], opts["k2"], delta, opts["seed"],
        noise_sigma=0.0,
    )
    if opts["sigma"] is not None:
        inst.noise_sigma = float(opts["sigma"])
    elif opts["snr_db"] is not None:
        clean = model.instance_measurement(inst).y
        inst.noise_sigma = model.sigma_for_snr(clean, float(opts["snr_db"]))
    return inst


def _cmd_synth(opts: dict) -> int:
    inst = _synth_instance(opts)
    _emit(opts, json.dumps(model.instance_to_dict(inst), indent=2) + "\n")
    return 0


def _solve_instance(opts: dict):
    """Load + demix an instance file; shared by solve and localize."""
    if not opts["instance"]:
        raise UsageError("this command needs --instance <file.json>")
    try:
        inst = model.load_instance(opts["instance"])
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load instance: {exc}") from exc
    meas = model.instance_measurement(inst)
    if inst.noise_sigma == 0.0 and opts["lambda_w"] is None:
        sol = solver.demix_exact(meas)
    else:
        lam = opts["lambda_w"]
        if lam is None:
            if inst.noise_kind == "bounded":
                lam = solver.lambda_bounded(inst.noise_sigma, inst.m)
            else:
                lam = solver.lambda_gaussian(inst.noise_sigma, inst.m)
        sol = solver.demix_regularized(
            meas, solver.RegularizationConfig(lambda_w=lam)
        )
    return inst, meas, sol


def _print_channel_errors(inst: model.Instance, sol) -> None:
    for idx, (sig, x_hat) in enumerate(
        zip(inst.signals, (sol.x1_hat, sol.x2_hat)), start=1
    ):
        if sig.k == 0:
            continue
        truth = model.synthesize_spectrum(sig, inst.m)
        err = float(np.linalg.norm(x_hat - truth) / np.linalg.norm(truth))
        print(f"channel {idx} normalized error: {err:.6e}")


def _cmd_solve(opts: dict) -> int:
    inst, _, sol = _solve_instance(opts)
    if opts["out"]:
        solver.save_solution(opts["out"], sol)
        print(f"wrote {opts['out']}")
    else:
        sys.stdout.write(json.dumps(solver.solution_to_dict(sol), indent=2) + "\n")
    _print_channel_errors(inst, sol)
    print(f"converged: {sol.converged} after {sol.iterations} iterations")
    return 0 if sol.converged else 3


def _cmd_localize(opts: dict) -> int:
    inst, meas, sol = _solve_instance(opts)
    estimate = dualpoly.recover_sources(meas, sol.p_hat, _localization_config(opts))
    payload = {
        "supports1": [float(v) for v in estimate.supports1],
        "amplitudes1_re": [float(v) for v in estimate.amplitudes1.real],
        "amplitudes1_im": [float(v) for v in estimate.amplitudes1.imag],
        "supports2": [float(v) for v in estimate.supports2],
        "amplitudes2_re": [float(v) for v in estimate.amplitudes2.real],
        "amplitudes2_im": [float(v) for v in estimate.amplitudes2.imag],
        "residual_norm": float(estimate.residual_norm),
    }
    _emit(opts, json.dumps(payload, indent=2) + "\n")
    report = dualpoly.match_and_score(estimate, inst.signals[0], inst.signals[1])
    print(f"max location error: {report.max_location_error:.6e}")
    print(f"converged: {sol.converged} after {sol.iterations} iterations")
    return 0 if sol.converged else 3


def _cmd_certify(opts: dict) -> int:
    m, k1, k2, seed = opts["m"], opts["k1"], opts["k2"], opts["seed"]
    delta = opts["delta_min"] if opts["delta_min"] is not None else 1.0 / m
    sup1 = model.draw_supports(k1, delta, derived_rng(seed, _STAGE_SUPPORTS1))
    sup2 = model.draw_supports(k2, delta, derived_rng(seed, _STAGE_SUPPORTS2))
    signs1 = np.exp(
        2j * np.pi * derived_rng(seed, _STAGE_SIGNS1).uniform(size=k1)
    )
    signs2 = np.exp(
        2j * np.pi * derived_rng(seed, _STAGE_SIGNS2).uniform(size=k2)
    )
    phases = derived_rng(seed, _STAGE_MODULATOR).uniform(size=model.band_size(m))
    mod = model.modulator_from_phases(phases, m)
    kern = certificate.fejer_coeffs(m)
    system = certificate.solve_certificate(
        certificate.assemble_system(kern, sup1, signs1, sup2, signs2, mod)
    )
    vcfg = certificate.ValidationConfig()
    if opts["grid_size"] is not None:
        vcfg = certificate.ValidationConfig(grid_size=opts["grid_size"])
    report = certificate.validate_certificate(system, vcfg)
    norms = certificate.block_norm_report(system)
    payload = certificate.certificate_report_dict(report, norms)
    _emit(opts, json.dumps(payload, indent=2) + "\n")
    if opts["out"]:
        trace_path = str(Path(opts["out"]).with_suffix(".csv"))
        p_hat = certificate.certificate_to_dual_vector(system)
        dualpoly.save_polynomial_csv(trace_path, p_hat, mod, vcfg.grid_size)
        print(f"wrote {trace_path}")
    return 0 if report.valid else 3


def _cmd_phase_transition(opts: dict) -> int:
    cfg = experiments.ExperimentConfig(
        kind="phase-transition", m=opts["m"], k1=opts["k1"], k2=opts["k2"],
        delta_min=opts["delta_min"], trials=opts["trials"], seed=opts["seed"],
    )
    cells = experiments.run_phase_transition(cfg)
    _emit(opts, experiments.format_phase_csv(cells))
    return 0


def _cmd_crb_compare(opts: dict) -> int:
    snrs = _snr_values(opts)
    points = crb.mse_vs_crb(
        opts["m"], snrs, trials=opts["trials"], seed=opts["seed"],
        localization_config=_localization_config(opts),
        delta_min=opts["delta_min"],
    )
    _emit(opts, crb.format_curve_csv(points))
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "solve": _cmd_solve,
    "localize": _cmd_localize,
    "certify": _cmd_certify,
    "phase-transition": _cmd_phase_transition,
    "crb-compare": _cmd_crb_compare,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        opts = _merge_options(args)
        return _COMMANDS[args.command](opts)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AtomdemixError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
