"""Dual polynomials: evaluation, peak localization, amplitude recovery.

A dual vector p on the band defines the trigonometric polynomial
P(tau) = sum_n p_n exp(j 2 pi n tau). Sources in channel 1 live where
|P| touches 1; channel 2 uses the conjugate-modulated coefficients
p_n * conj(g_n).
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import linalg, model
from .exceptions import LengthMismatch, NoPeaksFound

CSV_HEADER = ("tau", "absP", "absQ")


@dataclass
class DualPolynomial:
    """Band-limited polynomial given by its 4M+1 spectral coefficients."""

    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.complex128)
        if self.coefficients.ndim != 1 or (self.coefficients.size - 1) % 4 != 0:
            raise LengthMismatch(
                f"coefficient length {self.coefficients.size} is not 4M+1"
            )

    @property
    def m(self) -> int:
        return (self.coefficients.size - 1) // 4


@dataclass
class LocalizationConfig:
    grid_size: int = 16_384
    peak_epsilon: float = 1e-3
    newton_iters: int = 20
    #: dedupe radius; None resolves to 0.25 / M at use
    merge_radius: float | None = None

    def resolved_merge_radius(self, m: int) -> float:
        return 0.25 / m if self.merge_radius is None else self.merge_radius

    def validate(self, m: int) -> None:
        if self.grid_size < 8 * m:
            raise ValueError(f"grid_size {self.grid_size} < 8M = {8 * m}")
        if self.newton_iters < 0:
            raise ValueError("newton_iters must be nonnegative")


@dataclass
class RecoveryEstimate:
    """Estimated supports (sorted) and matching amplitudes per channel."""

    supports1: np.ndarray
    amplitudes1: np.ndarray
    supports2: np.ndarray
    amplitudes2: np.ndarray
    residual_norm: float = 0.0

    def __post_init__(self):
        for sup, amp in ((self.supports1, self.amplitudes1),
                         (self.supports2, self.amplitudes2)):
            if np.asarray(sup).size != np.asarray(amp).size:
                raise LengthMismatch("supports and amplitudes counts differ")


def eval_poly(poly: DualPolynomial, tau, order: int = 0):
    """P^(order)(tau) = sum_n c_n (j 2 pi n)^order exp(j 2 pi n tau).

    tau may be a scalar or an array; orders 0..3 are supported (the
    validator needs the third derivative for curvature fits).
    """
    if order not in (0, 1, 2, 3):
        raise ValueError(f"derivative order {order} not supported")
    n = model.freq_index(poly.m)
    c = poly.coefficients * (2j * np.pi * n) ** order
    tau_arr = np.asarray(tau, dtype=float)
    phase = np.exp(2j * np.pi * np.outer(tau_arr.ravel(), n))
    vals = phase @ c
    return vals.reshape(tau_arr.shape) if tau_arr.ndim else complex(vals[0])


def grid_eval(poly: DualPolynomial, grid_size: int, order: int = 0) -> np.ndarray:
    """Values of P^(order) on the uniform grid tau_i = i / grid_size via FFT."""
    m = poly.m
    if grid_size < 4 * m + 1:
        raise ValueError("grid must be at least as fine as the band")
    n = model.freq_index(m)
    c = poly.coefficients * (2j * np.pi * n) ** order if order else poly.coefficients
    padded = np.zeros(grid_size, dtype=np.complex128)
    idx = (np.arange(-2 * m, 2 * m + 1)) % grid_size
    padded[idx] = c
    return grid_size * np.fft.ifft(padded)


def grid_taus(grid_size: int) -> np.ndarray:
    return np.arange(grid_size) / grid_size


def _refine_peak(poly: DualPolynomial, tau0: float, iters: int, cell: float) -> float:
    """Newton ascent on f = |P|^2 from tau0, clamped near the starting cell."""
    tau = tau0
    for _ in range(iters):
        p0 = eval_poly(poly, tau, 0)
        p1 = eval_poly(poly, tau, 1)
        p2 = eval_poly(poly, tau, 2)
        f1 = 2.0 * (np.conj(p0) * p1).real
        f2 = 2.0 * (abs(p1) ** 2 + (np.conj(p0) * p2).real)
        if f2 >= 0.0:
            break
        step = -f1 / f2
        step = max(-cell, min(cell, step))
        new = (tau + step) % 1.0
        if abs(step) < 1e-16:
            tau = new
            break
        tau = new
    return tau


def _grid_local_maxima(absvals: np.ndarray) -> np.ndarray:
    """Indices of circular local maxima of a sampled nonnegative function."""
    left = np.roll(absvals, 1)
    right = np.roll(absvals, -1)
    return np.nonzero((absvals >= left) & (absvals > right))[0]


def _merge_peaks(taus: np.ndarray, values: np.ndarray, radius: float) -> np.ndarray:
    """Greedy dedupe: keep strongest peak, drop others within wrap radius."""
    order = np.argsort(-values)
    kept = []
    for i in order:
        if all(model.wrap_distance(taus[i], taus[j]) > radius for j in kept):
            kept.append(i)
    return np.sort(taus[kept])


def refined_local_maxima(
    poly: DualPolynomial, cfg: LocalizationConfig, floor: float = 0.0
):
    """All Newton-refined local maxima of |P| above an absolute floor.

    Returns (taus, values) sorted by descending value, already deduped
    within the merge radius.
    """
    cfg.validate(poly.m)
    vals = np.abs(grid_eval(poly, cfg.grid_size))
    idx = _grid_local_maxima(vals)
    if idx.size == 0:
        return np.empty(0), np.empty(0)
    # between-grid dip bound for a degree-2M trig polynomial
    guard = 2.0 * np.pi * poly.m / cfg.grid_size * float(vals.max())
    idx = idx[vals[idx] >= floor - guard]
    cell = 1.0 / cfg.grid_size
    taus = np.array(
        [_refine_peak(poly, i * cell, cfg.newton_iters, 1.5 * cell) for i in idx]
    )
    values = np.abs(eval_poly(poly, taus)) if taus.size else np.empty(0)
    keep = values >= floor
    taus, values = taus[keep], values[keep]
    merged = _merge_peaks(taus, values, cfg.resolved_merge_radius(poly.m))
    merged_vals = np.abs(eval_poly(poly, merged)) if merged.size else np.empty(0)
    order = np.argsort(-merged_vals)
    return merged[order], merged_vals[order]


def locate(poly: DualPolynomial, cfg: LocalizationConfig | None = None) -> np.ndarray:
    """Support candidates: refined local maxima of |P| above 1 - peak_epsilon.

    Requires an (approximately) dual-feasible polynomial; raises
    NoPeaksFound when nothing reaches the threshold, which is the
    legitimate outcome for an all-zero channel.
    """
    cfg = cfg or LocalizationConfig()
    taus, values = refined_local_maxima(poly, cfg, floor=1.0 - cfg.peak_epsilon)
    if values.size and float(values.max()) > 1.0 + 1e-2:
        raise ValueError(
            f"polynomial peaks at {float(values.max()):.4f}; "
            "not dual feasible, localization is meaningless"
        )
    if taus.size == 0:
        raise NoPeaksFound("no local maxima above 1 - peak_epsilon")
    return np.sort(taus)


def strongest_peaks(
    poly: DualPolynomial, k: int, cfg: LocalizationConfig | None = None
) -> np.ndarray:
    """Top-k refined peaks by |P| value, no feasibility threshold."""
    cfg = cfg or LocalizationConfig()
    taus, _ = refined_local_maxima(poly, cfg, floor=0.0)
    return np.sort(taus[:k])


def dual_polynomials(p_hat: np.ndarray, modulator: model.Modulator):
    """Channel polynomials (P, Q) from a dual vector and the modulator."""
    p_hat = np.asarray(p_hat, dtype=np.complex128)
    if p_hat.shape != modulator.g.shape:
        raise LengthMismatch("dual vector length differs from band size")
    return (
        DualPolynomial(p_hat),
        DualPolynomial(p_hat * np.conj(modulator.g)),
    )


def estimate_amplitudes(
    meas: model.MeasurementSet,
    supports1: np.ndarray,
    supports2: np.ndarray,
):
    """Least-squares amplitudes on fixed supports.

    Columns are channel-1 atoms and modulated channel-2 atoms; returns
    (amplitudes1, amplitudes2, residual_norm). Propagates RankDeficient
    for (numerically) collapsed support sets.
    """
    supports1 = np.atleast_1d(np.asarray(supports1, dtype=float))
    supports2 = np.atleast_1d(np.asarray(supports2, dtype=float))
    k1, k2 = supports1.size, supports2.size
    nb = model.band_size(meas.m)
    if k1 + k2 > nb:
        raise ValueError(f"{k1 + k2} columns exceed band size {nb}")
    if k1 + k2 == 0:
        return (
            np.empty(0, dtype=np.complex128),
            np.empty(0, dtype=np.complex128),
            float(np.linalg.norm(meas.y)),
        )
    cols = [model.atom(t, meas.m) for t in supports1]
    cols += [meas.g * model.atom(t, meas.m) for t in supports2]
    a = np.column_stack(cols)
    x = linalg.lstsq(a, meas.y)
    residual = float(np.linalg.norm(meas.y - a @ x))
    return x[:k1], x[k1:], residual


#: fitted amplitudes below this fraction of the largest are spurious
PRUNE_RATIO = 1e-3


def recover_sources(
    meas: model.MeasurementSet,
    p_hat: np.ndarray,
    cfg: LocalizationConfig | None = None,
) -> RecoveryEstimate:
    """Full pipeline: peaks of |P| and |Q|, LS amplitudes, one pruning pass."""
    cfg = cfg or LocalizationConfig()
    poly_p, poly_q = dual_polynomials(p_hat, meas.modulator)
    sups = []
    for poly in (poly_p, poly_q):
        try:
            sups.append(locate(poly, cfg))
        except NoPeaksFound:
            sups.append(np.empty(0))
    s1, s2 = sups
    a1, a2, res = estimate_amplitudes(meas, s1, s2)
    mags = np.abs(np.concatenate([a1, a2]))
    if mags.size:
        floor = PRUNE_RATIO * float(mags.max())
        keep1 = np.abs(a1) >= floor
        keep2 = np.abs(a2) >= floor
        if not (keep1.all() and keep2.all()):
            s1, s2 = s1[keep1], s2[keep2]
            a1, a2, res = estimate_amplitudes(meas, s1, s2)
    return RecoveryEstimate(
        supports1=s1, amplitudes1=a1, supports2=s2, amplitudes2=a2,
        residual_norm=res,
    )


@dataclass
class ChannelMatch:
    true_count: int
    est_count: int
    matched: int
    location_rmse: float
    amplitude_rmse: float
    max_location_error: float
    #: wrap distance from each true source to its nearest estimate
    #: (0.5 when the channel has no estimates at all)
    nearest_per_true: np.ndarray = field(default_factory=lambda: np.empty(0))


@dataclass
class MatchReport:
    channel1: ChannelMatch
    channel2: ChannelMatch

    @property
    def max_location_error(self) -> float:
        return max(
            self.channel1.max_location_error, self.channel2.max_location_error
        )


def _match_channel(
    true_locs, true_amps, est_locs, est_amps, radius: float | None
) -> ChannelMatch:
    true_locs = np.atleast_1d(np.asarray(true_locs, dtype=float))
    est_locs = np.atleast_1d(np.asarray(est_locs, dtype=float))
    nt, ne = true_locs.size, est_locs.size
    if nt and ne:
        dist = model.wrap_distance(true_locs[:, None], est_locs[None, :])
        nearest = dist.min(axis=1)
    else:
        dist = np.empty((nt, ne))
        nearest = np.full(nt, model.SINGLETON_SEPARATION)
    pairs = []
    used_t, used_e = set(), set()
    order = np.argsort(dist, axis=None)
    for flat in order:
        i, j = divmod(int(flat), max(ne, 1))
        if i in used_t or j in used_e:
            continue
        if radius is not None and dist[i, j] > radius:
            break
        pairs.append((i, j))
        used_t.add(i)
        used_e.add(j)
    if pairs:
        loc_err = np.array([dist[i, j] for i, j in pairs])
        amp_err = np.array(
            [abs(true_amps[i] - est_amps[j]) for i, j in pairs]
        )
        loc_rmse = float(np.sqrt(np.mean(loc_err**2)))
        amp_rmse = float(np.sqrt(np.mean(amp_err**2)))
    else:
        loc_rmse = amp_rmse = float("nan")
    return ChannelMatch(
        true_count=nt,
        est_count=ne,
        matched=len(pairs),
        location_rmse=loc_rmse,
        amplitude_rmse=amp_rmse,
        max_location_error=float(nearest.max()) if nt else 0.0,
        nearest_per_true=nearest,
    )


def match_and_score(
    estimate: RecoveryEstimate,
    truth1: model.PointSourceSignal,
    truth2: model.PointSourceSignal,
    radius: float | None = None,
) -> MatchReport:
    """Greedy nearest-pair matching of estimates to truth, per channel."""
    return MatchReport(
        channel1=_match_channel(
            truth1.locations, truth1.amplitudes,
            estimate.supports1, estimate.amplitudes1, radius,
        ),
        channel2=_match_channel(
            truth2.locations, truth2.amplitudes,
            estimate.supports2, estimate.amplitudes2, radius,
        ),
    )


# --------------------------------------------------------------------------
# CSV trace of the two dual polynomial magnitudes
# --------------------------------------------------------------------------


def dual_polynomial_rows(
    p_hat: np.ndarray, modulator: model.Modulator, grid_size: int
):
    """(tau, |P|, |Q|) sampled on the uniform grid."""
    poly_p, poly_q = dual_polynomials(p_hat, modulator)
    taus = grid_taus(grid_size)
    abs_p = np.abs(grid_eval(poly_p, grid_size))
    abs_q = np.abs(grid_eval(poly_q, grid_size))
    return taus, abs_p, abs_q


def format_polynomial_csv(taus, abs_p, abs_q) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in zip(taus, abs_p, abs_q):
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def parse_polynomial_csv(text: str):
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader))
    if header != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    rows = [[float(v) for v in row] for row in reader if row]
    arr = np.asarray(rows, dtype=float)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def save_polynomial_csv(
    path: str, p_hat: np.ndarray, modulator: model.Modulator, grid_size: int
) -> None:
    taus, abs_p, abs_q = dual_polynomial_rows(p_hat, modulator, grid_size)
    model.atomic_write_text(path, format_polynomial_csv(taus, abs_p, abs_q))
