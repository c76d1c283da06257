"""Dual-certificate laboratory.

Builds the interpolating dual polynomial pair (P, Q) for given supports
and sign patterns out of the squared Fejer kernel and its modulated
variants, solves the interpolation system, and validates the resulting
certificate on a dense grid (unit modulus on the supports, strictly
below 1 elsewhere, quadratic decay near the supports).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import dualpoly, linalg, model
from .seeding import derived_rng
from .exceptions import (
    DegenerateM,
    DuplicateSupport,
    LengthMismatch,
    SingularSystem,
)

#: near/far split radius is TAU_S_FACTOR / M around each support
TAU_S_FACTOR = 8.245e-2

#: spectral-norm bounds for the same-channel interpolation blocks at
#: separation >= 1/M
I_MINUS_W_BOUND = 0.3623
W_BOUND = 1.3623
W_INV_BOUND = 1.568

#: modulated cross-block concentration holds only below this
DELTA_MAX = 0.6376

CONDITION_LIMIT = 1e10


def fejer_coefficient_vector(m: int) -> np.ndarray:
    """Raw squared-kernel coefficients s_n, n = -2M..2M (works for M >= 1).

    s is the (1/M)-scaled self-convolution of the triangle
    f_i = 1 - |i|/M on |i| <= M; every entry lies in [0, 1] and the
    vector is symmetric.
    """
    if m < 1:
        raise DegenerateM(f"M = {m} < 1")
    i = np.arange(-m, m + 1)
    f = 1.0 - np.abs(i) / m
    return np.convolve(f, f) / m


@dataclass
class FejerKernel:
    """Squared Fejer kernel K(tau) = (1/M) sum_n s_n exp(j 2 pi n tau)."""

    m: int
    s: np.ndarray

    @property
    def kpp0(self) -> float:
        """Second derivative at zero, -(4/3) pi^2 (M^2 - 1)."""
        return -(4.0 / 3.0) * math.pi**2 * (self.m**2 - 1)

    @property
    def scale(self) -> float:
        """sqrt(|K''(0)|), the unit used to balance derivative rows."""
        return math.sqrt(abs(self.kpp0))


def fejer_coeffs(m: int) -> FejerKernel:
    """Kernel for bandwidth M; M < 2 has no curvature and is rejected."""
    if m < 2:
        raise DegenerateM(f"M = {m} < 2 degenerates to a curvature-free kernel")
    return FejerKernel(m=m, s=fejer_coefficient_vector(m))


def kernel_eval(kern: FejerKernel, tau, order: int = 0):
    """K^(order)(tau) = (1/M) sum_n s_n (j 2 pi n)^order exp(j 2 pi n tau)."""
    return modulated_kernel_eval(kern, None, tau, order)


def modulated_kernel_eval(kern: FejerKernel, weights, tau, order: int = 0):
    """Kernel with unit-modulus weights folded in: (1/M) sum s_n w_n (...).

    weights=None gives the plain kernel; pass the modulator g for K_g or
    its conjugate for K_gbar. tau may be scalar or any-dimensional.
    """
    if order not in (0, 1, 2, 3):
        raise ValueError(f"derivative order {order} not supported")
    n = model.freq_index(kern.m)
    c = kern.s * (2j * np.pi * n) ** order
    if weights is not None:
        weights = np.asarray(weights, dtype=np.complex128)
        if weights.shape != c.shape:
            raise LengthMismatch("weight vector length differs from band size")
        c = c * weights
    tau_arr = np.asarray(tau, dtype=float)
    phase = np.exp(2j * np.pi * np.outer(tau_arr.ravel(), n))
    vals = (phase @ c) / kern.m
    if tau_arr.ndim == 0:
        return complex(vals[0])
    return vals.reshape(tau_arr.shape)


def _pairwise_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[:, None] - b[None, :]


@dataclass
class CertificateSystem:
    """Interpolation system for one (supports, signs, modulator) triple.

    w is the scaled block matrix; the solved coefficients are stored
    unscaled (beta already divided by sqrt|K''(0)|).
    """

    kernel: FejerKernel
    modulator: model.Modulator
    supports1: np.ndarray
    signs1: np.ndarray
    supports2: np.ndarray
    signs2: np.ndarray
    w: np.ndarray
    rhs: np.ndarray
    alpha1: np.ndarray | None = None
    beta1: np.ndarray | None = None
    alpha2: np.ndarray | None = None
    beta2: np.ndarray | None = None
    condition_estimate: float | None = None

    @property
    def k1(self) -> int:
        return self.supports1.size

    @property
    def k2(self) -> int:
        return self.supports2.size

    @property
    def solved(self) -> bool:
        return self.alpha1 is not None


def _check_supports(supports: np.ndarray, label: str) -> np.ndarray:
    supports = np.atleast_1d(np.asarray(supports, dtype=float))
    if supports.size >= 2:
        s = np.sort(supports)
        if min(np.diff(s).min(), 1.0 - (s[-1] - s[0])) < 1e-12:
            raise DuplicateSupport(f"repeated location in {label}")
    return supports


def _check_signs(signs, k: int, label: str) -> np.ndarray:
    signs = np.atleast_1d(np.asarray(signs, dtype=np.complex128))
    if signs.size != k:
        raise LengthMismatch(f"{label}: {signs.size} signs for {k} supports")
    if signs.size and np.max(np.abs(np.abs(signs) - 1.0)) > 1e-8:
        raise ValueError(f"{label}: sign entries must have unit modulus")
    return signs


def assemble_system(
    kern: FejerKernel,
    supports1,
    signs1,
    supports2,
    signs2,
    modulator: model.Modulator,
) -> CertificateSystem:
    """Build the scaled interpolation matrix and right-hand side.

    Row groups: P on supports1, scaled P' on supports1, Q on supports2,
    scaled Q' on supports2. Column groups: alpha1, scaled beta1, alpha2,
    scaled beta2. Derivative rows and columns carry 1/sqrt|K''(0)| (and
    second derivatives 1/|K''(0)|) so the matrix is a perturbation of
    the identity; sign rows use -1/sqrt|K''(0)|.
    """
    if modulator.m != kern.m:
        raise LengthMismatch("modulator and kernel bandwidth differ")
    t1 = _check_supports(supports1, "channel 1")
    t2 = _check_supports(supports2, "channel 2")
    u1 = _check_signs(signs1, t1.size, "channel 1")
    u2 = _check_signs(signs2, t2.size, "channel 2")
    if t1.size + t2.size == 0:
        raise ValueError("at least one support is required")

    g = modulator.g
    gbar = np.conj(g)
    sc = kern.scale
    sc2 = sc * sc

    d11 = _pairwise_diff(t1, t1)
    d12 = _pairwise_diff(t1, t2)
    d21 = _pairwise_diff(t2, t1)
    d22 = _pairwise_diff(t2, t2)

    w1 = [kernel_eval(kern, d11, i) for i in range(3)]
    w2 = [kernel_eval(kern, d22, i) for i in range(3)]
    wg = [modulated_kernel_eval(kern, g, d12, i) for i in range(3)]
    wgb = [modulated_kernel_eval(kern, gbar, d21, i) for i in range(3)]

    k1, k2 = t1.size, t2.size
    size = 2 * (k1 + k2)
    w = np.zeros((size, size), dtype=np.complex128)
    r0, r1, r2, r3 = 0, k1, 2 * k1, 2 * k1 + k2
    rows = [slice(r0, r1), slice(r1, r2), slice(r2, r3), slice(r3, size)]

    # value rows for P on channel-1 supports
    w[rows[0], rows[0]] = w1[0]
    w[rows[0], rows[1]] = w1[1] / sc
    w[rows[0], rows[2]] = wg[0]
    w[rows[0], rows[3]] = wg[1] / sc
    # scaled derivative rows for P
    w[rows[1], rows[0]] = -w1[1] / sc
    w[rows[1], rows[1]] = -w1[2] / sc2
    w[rows[1], rows[2]] = -wg[1] / sc
    w[rows[1], rows[3]] = -wg[2] / sc2
    # value rows for Q on channel-2 supports
    w[rows[2], rows[0]] = wgb[0]
    w[rows[2], rows[1]] = wgb[1] / sc
    w[rows[2], rows[2]] = w2[0]
    w[rows[2], rows[3]] = w2[1] / sc
    # scaled derivative rows for Q
    w[rows[3], rows[0]] = -wgb[1] / sc
    w[rows[3], rows[1]] = -wgb[2] / sc2
    w[rows[3], rows[2]] = -w2[1] / sc
    w[rows[3], rows[3]] = -w2[2] / sc2

    rhs = np.concatenate(
        [u1, np.zeros(k1, dtype=np.complex128), u2, np.zeros(k2, dtype=np.complex128)]
    )
    return CertificateSystem(
        kernel=kern,
        modulator=modulator,
        supports1=t1,
        signs1=u1,
        supports2=t2,
        signs2=u2,
        w=w,
        rhs=rhs,
    )


def solve_certificate(sys: CertificateSystem) -> CertificateSystem:
    """Solve for the interpolation coefficients in place (and return sys)."""
    cond = linalg.pivot_condition_estimate(sys.w)
    sys.condition_estimate = float(cond)
    if not np.isfinite(cond) or cond >= CONDITION_LIMIT:
        raise SingularSystem(
            f"interpolation matrix condition estimate {cond:.3e} exceeds "
            f"{CONDITION_LIMIT:.1e}; supports are too close",
            condition_estimate=cond,
        )
    z = linalg.solve_linear(sys.w, sys.rhs)
    k1, k2 = sys.k1, sys.k2
    sc = sys.kernel.scale
    sys.alpha1 = z[:k1]
    sys.beta1 = z[k1 : 2 * k1] / sc
    sys.alpha2 = z[2 * k1 : 2 * k1 + k2]
    sys.beta2 = z[2 * k1 + k2 :] / sc
    return sys


def _require_solved(sys: CertificateSystem) -> None:
    if not sys.solved:
        raise ValueError("certificate system has not been solved yet")


def eval_cert_polys(sys: CertificateSystem, tau, order: int = 0):
    """(P^(order), Q^(order)) at tau, assembled from kernel translates."""
    _require_solved(sys)
    kern = sys.kernel
    g = sys.modulator.g
    gbar = np.conj(g)
    tau_arr = np.asarray(tau, dtype=float)
    d1 = tau_arr[..., None] - sys.supports1
    d2 = tau_arr[..., None] - sys.supports2

    def combo(diff1, diff2, weights1, weights2):
        total = 0.0
        if sys.k1:
            total = total + modulated_kernel_eval(kern, weights1, diff1, order) @ sys.alpha1
            total = total + modulated_kernel_eval(kern, weights1, diff1, order + 1) @ sys.beta1
        if sys.k2:
            total = total + modulated_kernel_eval(kern, weights2, diff2, order) @ sys.alpha2
            total = total + modulated_kernel_eval(kern, weights2, diff2, order + 1) @ sys.beta2
        return total

    p = combo(d1, d2, None, g)
    q = combo(d1, d2, gbar, None)
    if tau_arr.ndim == 0:
        return complex(p), complex(q)
    return p, q


def certificate_to_dual_vector(sys: CertificateSystem) -> np.ndarray:
    """Band coefficients p with P(tau) = sum_n p_n exp(j 2 pi n tau).

    Q's coefficients are exactly conj(g) * p, so one vector carries the
    whole certificate; this is what ties the construction back to the
    dual feasibility constraints of the demixing program.
    """
    _require_solved(sys)
    kern = sys.kernel
    n = model.freq_index(kern.m)
    jn = 2j * np.pi * n
    p = np.zeros(n.size, dtype=np.complex128)
    if sys.k1:
        e1 = np.exp(-2j * np.pi * np.outer(n, sys.supports1))
        p += e1 @ sys.alpha1 + jn * (e1 @ sys.beta1)
    if sys.k2:
        e2 = np.exp(-2j * np.pi * np.outer(n, sys.supports2))
        p += sys.modulator.g * (e2 @ sys.alpha2 + jn * (e2 @ sys.beta2))
    return kern.s / kern.m * p


def interpolation_residual(sys: CertificateSystem) -> float:
    """Worst violation of the interpolation conditions, derivative rows
    measured in scaled units."""
    _require_solved(sys)
    sc = sys.kernel.scale
    worst = 0.0
    if sys.k1:
        p0, _ = eval_cert_polys(sys, sys.supports1, 0)
        p1, _ = eval_cert_polys(sys, sys.supports1, 1)
        worst = max(worst, float(np.max(np.abs(p0 - sys.signs1))))
        worst = max(worst, float(np.max(np.abs(p1))) / sc)
    if sys.k2:
        _, q0 = eval_cert_polys(sys, sys.supports2, 0)
        _, q1 = eval_cert_polys(sys, sys.supports2, 1)
        worst = max(worst, float(np.max(np.abs(q0 - sys.signs2))))
        worst = max(worst, float(np.max(np.abs(q1))) / sc)
    return worst


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------


@dataclass
class ValidationConfig:
    grid_size: int = 65_536
    interp_tol: float = 1e-8
    strict_margin: float = 1e-9

    def tau_s(self, m: int) -> float:
        """Near/far split radius (fixed constant over bandwidth)."""
        return TAU_S_FACTOR / m

    def validate(self, m: int) -> None:
        if self.grid_size < 16 * m:
            raise ValueError(f"grid_size {self.grid_size} < 16M = {16 * m}")


@dataclass
class ChannelValidation:
    max_far: float
    max_near: float
    near_curvature: float
    n_near: int


@dataclass
class CertificateReport:
    interp_residual: float
    channel1: ChannelValidation
    channel2: ChannelValidation
    valid: bool

    @property
    def max_p_far(self) -> float:
        return self.channel1.max_far

    @property
    def max_q_far(self) -> float:
        return self.channel2.max_far


def _validate_channel(
    absvals: np.ndarray,
    supports: np.ndarray,
    m: int,
    cfg: ValidationConfig,
) -> ChannelValidation:
    grid = np.arange(absvals.size) / absvals.size
    if supports.size == 0:
        return ChannelValidation(
            max_far=float(absvals.max()), max_near=0.0,
            near_curvature=float("nan"), n_near=0,
        )
    dists = model.wrap_distance(grid[:, None], supports[None, :])
    nearest = dists.min(axis=1)
    tau_s = cfg.tau_s(m)
    guard = 1.0 / absvals.size
    far = nearest > tau_s
    near = (nearest <= tau_s) & (nearest > guard)
    max_far = float(absvals[far].max()) if far.any() else 0.0
    max_near = float(absvals[near].max()) if near.any() else 0.0
    # least squares through the origin: 1 - |P| ~ c * M^2 * dist^2
    if near.any():
        w = (m * nearest[near]) ** 2
        zvals = 1.0 - absvals[near]
        c = float(np.dot(w, zvals) / np.dot(w, w))
    else:
        c = float("nan")
    return ChannelValidation(
        max_far=max_far, max_near=max_near, near_curvature=c,
        n_near=int(near.sum()),
    )


def validate_certificate(
    sys: CertificateSystem, cfg: ValidationConfig | None = None
) -> CertificateReport:
    """Grid validation of a solved certificate.

    Checks, per channel: interpolation residual within tolerance, the
    magnitude strictly below 1 - strict_margin outside the near regions,
    below 1 inside them (off the supports themselves), and a positive
    fitted curvature coefficient in 1 - |P| ~ c M^2 (tau - tau_k)^2.
    """
    _require_solved(sys)
    cfg = cfg or ValidationConfig()
    m = sys.kernel.m
    cfg.validate(m)
    p_vec = certificate_to_dual_vector(sys)
    poly_p = dualpoly.DualPolynomial(p_vec)
    poly_q = dualpoly.DualPolynomial(p_vec * np.conj(sys.modulator.g))
    abs_p = np.abs(dualpoly.grid_eval(poly_p, cfg.grid_size))
    abs_q = np.abs(dualpoly.grid_eval(poly_q, cfg.grid_size))
    ch1 = _validate_channel(abs_p, sys.supports1, m, cfg)
    ch2 = _validate_channel(abs_q, sys.supports2, m, cfg)
    resid = interpolation_residual(sys)
    ok = resid <= cfg.interp_tol
    for ch, has in ((ch1, sys.k1 > 0), (ch2, sys.k2 > 0)):
        ok = ok and ch.max_far < 1.0 - cfg.strict_margin
        if has:
            ok = ok and ch.max_near < 1.0
            ok = ok and (ch.n_near == 0 or ch.near_curvature > 0.0)
    return CertificateReport(
        interp_residual=resid, channel1=ch1, channel2=ch2, valid=bool(ok)
    )


# --------------------------------------------------------------------------
# block norms and cross-block concentration
# --------------------------------------------------------------------------


def _operator_norm(a: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    w, _ = linalg.hermitian_eig(a.conj().T @ a)
    return math.sqrt(max(float(w[-1]), 0.0))


def _inverse_norm(a: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    w, _ = linalg.hermitian_eig(a.conj().T @ a)
    smallest = float(w[0])
    return float("inf") if smallest <= 0.0 else 1.0 / math.sqrt(smallest)


@dataclass
class BlockNormReport:
    norm_w1: float
    norm_w2: float
    norm_i_minus_w1: float
    norm_i_minus_w2: float
    norm_w1_inv: float
    norm_w2_inv: float
    norm_wg: float
    within_bounds: bool = field(init=False)

    def __post_init__(self):
        self.within_bounds = (
            self.norm_i_minus_w1 <= I_MINUS_W_BOUND
            and self.norm_i_minus_w2 <= I_MINUS_W_BOUND
            and self.norm_w1 <= W_BOUND
            and self.norm_w2 <= W_BOUND
            and self.norm_w1_inv <= W_INV_BOUND
            and self.norm_w2_inv <= W_INV_BOUND
        )


def system_blocks(sys: CertificateSystem):
    """(W1, Wg, Wgbar, W2) corners of the scaled interpolation matrix."""
    k1, k2 = sys.k1, sys.k2
    n1 = 2 * k1
    return (
        sys.w[:n1, :n1],
        sys.w[:n1, n1:],
        sys.w[n1:, :n1],
        sys.w[n1:, n1:],
    )


def block_norm_report(sys: CertificateSystem) -> BlockNormReport:
    """Spectral norms of the diagonal blocks against the fixed bounds."""
    w1, wg, _, w2 = system_blocks(sys)
    i1 = np.eye(w1.shape[0])
    i2 = np.eye(w2.shape[0])
    return BlockNormReport(
        norm_w1=_operator_norm(w1),
        norm_w2=_operator_norm(w2),
        norm_i_minus_w1=_operator_norm(i1 - w1),
        norm_i_minus_w2=_operator_norm(i2 - w2),
        norm_w1_inv=_inverse_norm(w1),
        norm_w2_inv=_inverse_norm(w2),
        norm_wg=_operator_norm(wg),
    )


@dataclass
class ConcentrationConfig:
    delta: float
    trials: int

    def validate(self) -> None:
        if not 0.0 < self.delta < DELTA_MAX:
            raise ValueError(f"delta must lie in (0, {DELTA_MAX})")
        if self.trials < 0:
            raise ValueError("trials must be nonnegative")


@dataclass
class ConcentrationReport:
    delta: float
    trials: int
    exceedances: int
    rate: float
    max_norm: float
    warning: bool = False


def required_bandwidth(delta: float, eta: float, k1: int, k2: int) -> int:
    """Smallest M the concentration bound asks for at level delta, eta."""
    kmax = max(k1, k2)
    return math.ceil(46.0 / delta**2 * kmax * math.log(2.0 * (k1 + k2) / eta))


def wg_concentration_mc(
    m: int,
    k1: int,
    k2: int,
    cfg: ConcentrationConfig,
    seed: int,
    delta_min: float | None = None,
) -> ConcentrationReport:
    """Exceedance rate of ||W_g|| >= delta over fresh modulator draws.

    Supports are drawn once (separation >= delta_min, default 1/M) and
    held fixed; each trial redraws the modulator only.
    """
    cfg.validate()
    if cfg.trials == 0:
        return ConcentrationReport(
            delta=cfg.delta, trials=0, exceedances=0, rate=0.0,
            max_norm=0.0, warning=True,
        )
    delta_min = 1.0 / m if delta_min is None else delta_min
    t1 = model.draw_supports(k1, delta_min, derived_rng(seed, 101))
    t2 = model.draw_supports(k2, delta_min, derived_rng(seed, 102))
    kern = fejer_coeffs(m)
    n = model.freq_index(m)
    d12 = _pairwise_diff(t1, t2)
    phase = np.exp(2j * np.pi * d12[..., None] * n)  # (k1, k2, 4M+1)
    sc = kern.scale
    sc2 = sc * sc
    base = [kern.s * (2j * np.pi * n) ** i / m for i in range(3)]

    exceed = 0
    max_norm = 0.0
    for trial in range(cfg.trials):
        rng = derived_rng(seed, 200, trial)
        phases = rng.uniform(0.0, 1.0, size=model.band_size(m))
        g = model.modulator_from_phases(phases, m).g
        blocks = [phase @ (b * g) for b in base]
        wg = np.block(
            [
                [blocks[0], blocks[1] / sc],
                [-blocks[1] / sc, -blocks[2] / sc2],
            ]
        )
        norm = _operator_norm(wg)
        max_norm = max(max_norm, norm)
        if norm >= cfg.delta:
            exceed += 1
    return ConcentrationReport(
        delta=cfg.delta,
        trials=cfg.trials,
        exceedances=exceed,
        rate=exceed / cfg.trials,
        max_norm=max_norm,
    )


def certificate_report_dict(
    report: CertificateReport, norms: BlockNormReport
) -> dict:
    """JSON payload for the certify command."""
    return {
        "interp_residual": report.interp_residual,
        "maxP_far": report.max_p_far,
        "maxQ_far": report.max_q_far,
        "valid": report.valid,
        "block_norms": {
            "norm_w1": norms.norm_w1,
            "norm_w2": norms.norm_w2,
            "norm_i_minus_w1": norms.norm_i_minus_w1,
            "norm_i_minus_w2": norms.norm_i_minus_w2,
            "norm_w1_inv": norms.norm_w1_inv,
            "norm_w2_inv": norms.norm_w2_inv,
            "norm_wg": norms.norm_wg,
            "within_bounds": norms.within_bounds,
        },
    }
