"""Monte Carlo experiment orchestration: phase transitions and success sweeps.

Every experiment is bit-reproducible from (config, master seed): per-cell
and per-trial randomness comes from seeds derived off the master, never
from global state, so the aggregate is independent of execution order and
of the worker pool size. ATOMDEMIX_THREADS caps the pool; the default is
the machine's CPU count and a pool of one runs inline.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import model, solver
from .exceptions import AtomdemixError
from .seeding import derived_rng

KINDS = (
    "synth", "solve", "localize", "certify", "phase-transition", "crb-compare",
)
MONTE_CARLO_KINDS = ("phase-transition", "crb-compare")

#: total normalized estimate error at or below this counts as a success
SUCCESS_THRESHOLD = 1e-4

PHASE_CSV_HEADER = ("k1", "k2", "successes", "trials", "rate")
SWEEP_CSV_HEADER = ("x", "rate")

# per-cell seed derivation stages
_STAGE_SUPPORTS1 = 1
_STAGE_SUPPORTS2 = 2
_STAGE_AMPS1 = 3
_STAGE_AMPS2 = 4
_STAGE_MODULATOR = 5


@dataclass
class NoiseSpec:
    """Noise selection: at most one of sigma / snr_db may be given.

    Neither set means noise-free (sigma 0). snr_db defers the sigma
    computation to the point where the clean signal energy is known.
    """

    kind: str = "gaussian"
    sigma: float | None = None
    snr_db: float | None = None

    def validate(self) -> None:
        if self.kind not in ("gaussian", "bounded"):
            raise ValueError(f"unknown noise kind '{self.kind}'")
        if self.sigma is not None and self.snr_db is not None:
            raise ValueError("give either sigma or snr_db, not both")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


@dataclass
class ExperimentConfig:
    """One runnable experiment: what to do and with which knobs."""

    kind: str
    m: int = 8
    k1: int = 2
    k2: int = 2
    delta_min: float | None = None
    trials: int = 20
    seed: int = 0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    #: penalty-weight override for the regularized solver
    lambda_w: float | None = None
    admm: solver.AdmmConfig | None = None
    grid_size: int | None = None
    out: str | None = None
    instance_path: str | None = None

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind '{self.kind}'")
        if self.m < 1:
            raise ValueError("M must be at least 1")
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError("source counts must be nonnegative")
        if self.kind in MONTE_CARLO_KINDS and self.trials < 1:
            raise ValueError("Monte Carlo runs need trials >= 1")
        if self.delta_min is not None and self.delta_min <= 0:
            raise ValueError("delta_min must be positive")
        if self.lambda_w is not None and self.lambda_w <= 0:
            raise ValueError("lambda override must be positive")
        self.noise.validate()

    def separation(self, m: int | None = None) -> float:
        """Effective minimum separation: explicit value or 1/(2M)."""
        if self.delta_min is not None:
            return self.delta_min
        return 0.5 / (m if m is not None else self.m)


@dataclass
class PhaseCell:
    """Success tally for one (K1, K2) cell of a phase-transition grid."""

    k1: int
    k2: int
    successes: int
    trials: int
    rate: float

    def __post_init__(self):
        if not 0 <= self.successes <= self.trials:
            raise ValueError("successes must lie in [0, trials]")


def worker_count() -> int:
    """Size of the worker pool; ATOMDEMIX_THREADS caps it."""
    cap = os.cpu_count() or 1
    env = os.environ.get("ATOMDEMIX_THREADS")
    if env is None:
        return cap
    try:
        requested = int(env)
    except ValueError as exc:
        raise ValueError("ATOMDEMIX_THREADS must be an integer") from exc
    return max(1, min(requested, cap))


def _map_jobs(fn, jobs):
    """Order-preserving map over independent jobs, pooled when allowed."""
    workers = worker_count()
    if workers == 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _cell_successes(job) -> int:
    """Noise-free recovery successes for one (M, K1, K2) cell.

    Supports and amplitudes are drawn once per cell; the modulator is
    redrawn for every trial. A trial succeeds when the summed normalized
    estimate error over the non-empty channels is at most the threshold;
    the empty-empty cell succeeds by definition.
    """
    m, k1, k2, delta_min, trials, seed, admm = job
    if k1 == 0 and k2 == 0:
        return trials
    sigs = []
    for channel, (k, st_sup, st_amp) in enumerate(
        ((k1, _STAGE_SUPPORTS1, _STAGE_AMPS1), (k2, _STAGE_SUPPORTS2, _STAGE_AMPS2))
    ):
        locs = model.draw_supports(k, delta_min, derived_rng(seed, m, k1, k2, st_sup))
        amps = model.draw_amplitudes(k, derived_rng(seed, m, k1, k2, st_amp))
        sigs.append(model.PointSourceSignal(locs, amps))
    x1 = model.synthesize_spectrum(sigs[0], m)
    x2 = model.synthesize_spectrum(sigs[1], m)
    n1 = float(np.linalg.norm(x1))
    n2 = float(np.linalg.norm(x2))

    successes = 0
    for trial in range(trials):
        phases = derived_rng(seed, m, k1, k2, _STAGE_MODULATOR, trial).uniform(
            0.0, 1.0, size=model.band_size(m)
        )
        mod = model.modulator_from_phases(phases, m)
        meas = model.MeasurementSet(y=x1 + mod.g * x2, modulator=mod)
        try:
            sol = solver.demix_exact(meas, admm)
        except AtomdemixError:
            continue
        err = 0.0
        if k1:
            err += float(np.linalg.norm(sol.x1_hat - x1)) / n1
        if k2:
            err += float(np.linalg.norm(sol.x2_hat - x2)) / n2
        if err <= SUCCESS_THRESHOLD:
            successes += 1
    return successes


def run_phase_transition(
    cfg: ExperimentConfig, k1_range=None, k2_range=None
) -> list[PhaseCell]:
    """Success-rate grid over source counts at fixed bandwidth.

    Defaults to K1 in 1..cfg.k1 crossed with K2 in 1..cfg.k2; explicit
    ranges override (and may include 0). Cells are independent jobs, so
    the grid is deterministic in the master seed and stable under
    regridding.
    """
    cfg.validate()
    if cfg.kind != "phase-transition":
        raise ValueError("config kind must be phase-transition")
    k1s = list(k1_range) if k1_range is not None else list(range(1, cfg.k1 + 1))
    k2s = list(k2_range) if k2_range is not None else list(range(1, cfg.k2 + 1))
    delta = cfg.separation()
    jobs = [
        (cfg.m, a, b, delta, cfg.trials, cfg.seed, cfg.admm)
        for a in k1s
        for b in k2s
    ]
    counts = _map_jobs(_cell_successes, jobs)
    return [
        PhaseCell(k1=job[1], k2=job[2], successes=s, trials=cfg.trials,
                  rate=s / cfg.trials)
        for job, s in zip(jobs, counts)
    ]


def run_success_sweep(
    cfg: ExperimentConfig, m_values=None, k_values=None
) -> list[tuple[float, float]]:
    """Success rate along one axis: bandwidths (m_values) or K1=K2=k
    (k_values), all other parameters fixed. Exactly one axis is required.
    Returns (x, rate) pairs with x as float.
    """
    cfg.validate()
    if cfg.kind != "phase-transition":
        raise ValueError("config kind must be phase-transition")
    if (m_values is None) == (k_values is None):
        raise ValueError("exactly one sweep axis is required")
    jobs = []
    xs = []
    if m_values is not None:
        for mv in m_values:
            mv = int(mv)
            jobs.append(
                (mv, cfg.k1, cfg.k2, cfg.separation(mv), cfg.trials, cfg.seed,
                 cfg.admm)
            )
            xs.append(float(mv))
    else:
        delta = cfg.separation()
        for kv in k_values:
            kv = int(kv)
            jobs.append((cfg.m, kv, kv, delta, cfg.trials, cfg.seed, cfg.admm))
            xs.append(float(kv))
    counts = _map_jobs(_cell_successes, jobs)
    return [(x, s / cfg.trials) for x, s in zip(xs, counts)]


# --------------------------------------------------------------------------
# CSV data products
# --------------------------------------------------------------------------


def format_phase_csv(cells) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PHASE_CSV_HEADER)
    for c in cells:
        writer.writerow([c.k1, c.k2, c.successes, c.trials, repr(c.rate)])
    return buf.getvalue()


def parse_phase_csv(text: str) -> list[PhaseCell]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != PHASE_CSV_HEADER:
        raise ValueError("unexpected phase CSV header")
    return [
        PhaseCell(k1=int(r[0]), k2=int(r[1]), successes=int(r[2]),
                  trials=int(r[3]), rate=float(r[4]))
        for r in rows[1:]
    ]


def save_phase_csv(path, cells) -> None:
    model.atomic_write_text(path, format_phase_csv(cells))


def format_sweep_csv(points) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_CSV_HEADER)
    for x, rate in points:
        writer.writerow([repr(float(x)), repr(float(rate))])
    return buf.getvalue()


def parse_sweep_csv(text: str) -> list[tuple[float, float]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != SWEEP_CSV_HEADER:
        raise ValueError("unexpected sweep CSV header")
    return [(float(r[0]), float(r[1])) for r in rows[1:]]


def save_sweep_csv(path, points) -> None:
    model.atomic_write_text(path, format_sweep_csv(points))
