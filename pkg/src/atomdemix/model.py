"""Signal model: point sources, modulators, measurements, instance files.

Index convention used everywhere: vectors over the spectral band are
ordered by frequency n = -2M .. 2M (ascending), so they have length
4M + 1 and position i corresponds to n = i - 2M.
"""

import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InfeasibleSeparation, LengthMismatch, OutOfRangeTau
from .seeding import derived_rng

#: stage tags mixed into derived seeds so instance components are independent
STAGE_MODULATOR = 1
STAGE_SUPPORTS = 2
STAGE_AMPLITUDES = 3
STAGE_NOISE = 4

#: wrap-separation value reported for sets with fewer than two points
SINGLETON_SEPARATION = 0.5

REJECTION_ATTEMPTS = 10_000


def band_size(m: int) -> int:
    """Number of spectral samples for bandwidth parameter M."""
    return 4 * m + 1


def freq_index(m: int) -> np.ndarray:
    """Frequency indices n = -2M .. 2M as a float array."""
    return np.arange(-2 * m, 2 * m + 1, dtype=float)


@dataclass
class PointSourceSignal:
    """Sparse point-source signal: locations on [0,1) with complex amplitudes."""

    locations: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        self.locations = np.atleast_1d(np.asarray(self.locations, dtype=float))
        self.amplitudes = np.atleast_1d(
            np.asarray(self.amplitudes, dtype=np.complex128)
        )
        if self.locations.shape != self.amplitudes.shape:
            raise LengthMismatch(
                f"{self.locations.size} locations vs "
                f"{self.amplitudes.size} amplitudes"
            )
        if self.locations.size:
            if np.any(self.locations < 0.0) or np.any(self.locations >= 1.0):
                raise OutOfRangeTau("locations must lie in [0, 1)")
            if np.unique(self.locations).size != self.locations.size:
                raise ValueError("locations must be pairwise distinct")
            if np.any(self.amplitudes == 0):
                raise ValueError("amplitudes must be nonzero")

    @property
    def k(self) -> int:
        return self.locations.size

    @staticmethod
    def empty() -> "PointSourceSignal":
        return PointSourceSignal(np.empty(0), np.empty(0, dtype=np.complex128))


@dataclass
class Modulator:
    """Known unit-modulus spectral modulation g_n = exp(j 2 pi phi_n)."""

    g: np.ndarray
    m: int

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=np.complex128)
        if self.g.shape != (band_size(self.m),):
            raise LengthMismatch(
                f"modulator length {self.g.size} != 4M+1 = {band_size(self.m)}"
            )
        if np.max(np.abs(np.abs(self.g) - 1.0)) > 1e-12:
            raise ValueError("modulator entries must be unit modulus")


@dataclass
class MeasurementSet:
    """One observed band y = spec(x1) + g * spec(x2) + w."""

    y: np.ndarray
    modulator: Modulator
    sigma_w: float = 0.0

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.complex128)
        if self.y.shape != self.modulator.g.shape:
            raise LengthMismatch("measurement and modulator length differ")

    @property
    def m(self) -> int:
        return self.modulator.m

    @property
    def g(self) -> np.ndarray:
        return self.modulator.g


@dataclass
class SeparationReport:
    delta1: float
    delta2: float

    @property
    def delta(self) -> float:
        return min(self.delta1, self.delta2)


def atom(tau: float, m: int) -> np.ndarray:
    """Unit-atom spectrum c(tau): entries exp(-j 2 pi n tau), n = -2M..2M."""
    if not 0.0 <= tau < 1.0:
        raise OutOfRangeTau(f"tau = {tau} outside [0, 1)")
    return np.exp(-2j * np.pi * freq_index(m) * tau)


def synthesize_spectrum(signal: PointSourceSignal, m: int) -> np.ndarray:
    """Band samples of a point-source signal: sum_k a_k c(tau_k)."""
    out = np.zeros(band_size(m), dtype=np.complex128)
    n = freq_index(m)
    for tau, a in zip(signal.locations, signal.amplitudes):
        if not 0.0 <= tau < 1.0:
            raise OutOfRangeTau(f"tau = {tau} outside [0, 1)")
        out += a * np.exp(-2j * np.pi * n * tau)
    return out


def synthesize_measurement(
    sig1: PointSourceSignal,
    sig2: PointSourceSignal,
    modulator: Modulator,
    noise: np.ndarray | None = None,
    sigma_w: float = 0.0,
) -> MeasurementSet:
    """Superpose the two channels through the modulator, plus optional noise."""
    m = modulator.m
    y = synthesize_spectrum(sig1, m) + modulator.g * synthesize_spectrum(sig2, m)
    if noise is not None:
        noise = np.asarray(noise, dtype=np.complex128)
        if noise.shape != y.shape:
            raise LengthMismatch("noise length differs from band size")
        y = y + noise
    return MeasurementSet(y=y, modulator=modulator, sigma_w=sigma_w)


def draw_modulator(m: int, seed: int) -> Modulator:
    """Random modulator with i.i.d. uniform phases, deterministic in seed."""
    rng = derived_rng(seed, STAGE_MODULATOR)
    phases = rng.uniform(0.0, 1.0, size=band_size(m))
    return Modulator(g=np.exp(2j * np.pi * phases), m=m)


def modulator_from_phases(phases: np.ndarray, m: int) -> Modulator:
    phases = np.asarray(phases, dtype=float)
    return Modulator(g=np.exp(2j * np.pi * phases), m=m)


def wrap_distance(a, b) -> np.ndarray:
    """Distance on the unit circle (wrap-around metric)."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    return np.minimum(d, 1.0 - d)


def min_separation(locations) -> float:
    """Smallest pairwise wrap distance; 0.5 sentinel below two points."""
    locs = np.atleast_1d(np.asarray(locations, dtype=float))
    if locs.size < 2:
        return SINGLETON_SEPARATION
    s = np.sort(locs)
    gaps = np.diff(s)
    wrap_gap = 1.0 - (s[-1] - s[0])
    return float(min(gaps.min(), wrap_gap))


def separation_report(
    sig1: PointSourceSignal, sig2: PointSourceSignal
) -> SeparationReport:
    return SeparationReport(
        delta1=min_separation(sig1.locations),
        delta2=min_separation(sig2.locations),
    )


def draw_supports(k: int, delta_min: float, rng: np.random.Generator) -> np.ndarray:
    """k locations on [0,1) with pairwise wrap separation >= delta_min.

    Rejection sampling first; after REJECTION_ATTEMPTS failures, falls
    back to an evenly spaced grid with jitter small enough to keep the
    separation guarantee.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0:
        return np.empty(0)
    if k * delta_min >= 1.0:
        raise InfeasibleSeparation(
            f"{k} points with separation {delta_min} cannot fit on the circle"
        )
    if k == 1:
        return rng.uniform(0.0, 1.0, size=1)
    for _ in range(REJECTION_ATTEMPTS):
        cand = np.sort(rng.uniform(0.0, 1.0, size=k))
        if min_separation(cand) >= delta_min:
            return cand
    # dense regime: evenly spaced points, jittered within the slack
    slack = (1.0 / k - delta_min) / 2.0
    base = np.arange(k) / k + rng.uniform(0.0, 1.0)
    jitter = rng.uniform(-slack / 2.0, slack / 2.0, size=k)
    return np.sort((base + jitter) % 1.0)


def draw_amplitudes(k: int, rng: np.random.Generator) -> np.ndarray:
    """Standard complex Gaussian amplitudes (unit variance per entry)."""
    return (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / math.sqrt(2.0)


def draw_noise(m: int, sigma: float, kind: str, rng: np.random.Generator) -> np.ndarray:
    """Noise vector on the band.

    kind='bounded': uniformly random direction scaled so the l2 norm is
    exactly sigma. kind='gaussian': i.i.d. complex Gaussian entries with
    per-entry variance sigma^2.
    """
    n = band_size(m)
    w = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
    if kind == "bounded":
        if sigma == 0.0:
            return np.zeros(n, dtype=np.complex128)
        return w * (sigma / np.linalg.norm(w))
    if kind == "gaussian":
        return sigma * w
    raise ValueError(f"unknown noise kind {kind!r}")


def snr_db(y_clean: np.ndarray, sigma: float) -> float:
    """SNR in dB: signal power per sample over per-sample noise variance."""
    y_clean = np.asarray(y_clean)
    p = float(np.vdot(y_clean, y_clean).real) / y_clean.size
    return 10.0 * math.log10(p / sigma**2)


def sigma_for_snr(y_clean: np.ndarray, snr: float) -> float:
    """Per-sample noise sigma that realizes a target SNR in dB."""
    y_clean = np.asarray(y_clean)
    p = float(np.vdot(y_clean, y_clean).real) / y_clean.size
    return math.sqrt(p / 10.0 ** (snr / 10.0))


# --------------------------------------------------------------------------
# instance files
# --------------------------------------------------------------------------


@dataclass
class Instance:
    """A fully specified problem draw, serializable to JSON.

    Noise is stored as (kind, sigma) and regenerated deterministically
    from the stored seed, so a file plus this code pins the measurement.
    """

    m: int
    seed: int
    signals: list = field(default_factory=list)
    modulator_phases: np.ndarray = field(default_factory=lambda: np.empty(0))
    noise_kind: str = "gaussian"
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.modulator_phases = np.asarray(self.modulator_phases, dtype=float)
        if self.modulator_phases.shape != (band_size(self.m),):
            raise LengthMismatch("modulator_phases length != 4M+1")
        if len(self.signals) != 2:
            raise ValueError("an instance carries exactly two signals")


def draw_instance(
    m: int,
    k1: int,
    k2: int,
    delta_min: float,
    seed: int,
    noise_kind: str = "gaussian",
    noise_sigma: float = 0.0,
) -> Instance:
    """Random instance: supports, Gaussian amplitudes, fresh modulator."""
    signals = []
    for channel, k in enumerate((k1, k2)):
        rng_s = derived_rng(seed, STAGE_SUPPORTS, channel)
        rng_a = derived_rng(seed, STAGE_AMPLITUDES, channel)
        locs = draw_supports(k, delta_min, rng_s)
        amps = draw_amplitudes(k, rng_a)
        signals.append(PointSourceSignal(locs, amps))
    rng_g = derived_rng(seed, STAGE_MODULATOR)
    phases = rng_g.uniform(0.0, 1.0, size=band_size(m))
    return Instance(
        m=m,
        seed=seed,
        signals=signals,
        modulator_phases=phases,
        noise_kind=noise_kind,
        noise_sigma=noise_sigma,
    )


def instance_measurement(inst: Instance) -> MeasurementSet:
    """Rebuild the measurement an instance describes (noise from its seed)."""
    mod = modulator_from_phases(inst.modulator_phases, inst.m)
    noise = None
    if inst.noise_sigma > 0.0:
        noise = draw_noise(
            inst.m,
            inst.noise_sigma,
            inst.noise_kind,
            derived_rng(inst.seed, STAGE_NOISE),
        )
    return synthesize_measurement(
        inst.signals[0],
        inst.signals[1],
        mod,
        noise=noise,
        sigma_w=inst.noise_sigma,
    )


def instance_to_dict(inst: Instance) -> dict:
    return {
        "M": inst.m,
        "seed": inst.seed,
        "signals": [
            {
                "locations": [float(t) for t in s.locations],
                "amplitudes_re": [float(a.real) for a in s.amplitudes],
                "amplitudes_im": [float(a.imag) for a in s.amplitudes],
            }
            for s in inst.signals
        ],
        "modulator_phases": [float(p) for p in inst.modulator_phases],
        "noise": {"kind": inst.noise_kind, "sigma": float(inst.noise_sigma)},
    }


def instance_from_dict(d: dict) -> Instance:
    signals = [
        PointSourceSignal(
            np.asarray(s["locations"], dtype=float),
            np.asarray(s["amplitudes_re"], dtype=float)
            + 1j * np.asarray(s["amplitudes_im"], dtype=float),
        )
        for s in d["signals"]
    ]
    return Instance(
        m=int(d["M"]),
        seed=int(d["seed"]),
        signals=signals,
        modulator_phases=np.asarray(d["modulator_phases"], dtype=float),
        noise_kind=d["noise"]["kind"],
        noise_sigma=float(d["noise"]["sigma"]),
    )


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_instance(path: str, inst: Instance) -> None:
    atomic_write_text(path, json.dumps(instance_to_dict(inst), indent=2) + "\n")


def load_instance(path: str) -> Instance:
    with open(path) as f:
        return instance_from_dict(json.load(f))
