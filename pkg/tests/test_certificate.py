"""Certificate construction, validation, and concentration checks."""

import math

import numpy as np
import pytest

from atomdemix import certificate, dualpoly, model, solver
from atomdemix.exceptions import DegenerateM, DuplicateSupport, SingularSystem


def _fejer_direct(m):
    # independent reference: the double convolution sum written out
    f = {i: 1.0 - abs(i) / m for i in range(-(m - 1), m)}
    s = np.zeros(4 * m + 1)
    for idx, n in enumerate(range(-2 * m, 2 * m + 1)):
        s[idx] = sum(f[k] * f[n - k] for k in f if (n - k) in f) / m
    return s


def _random_cert_system(m, k1, k2, seed, delta=None):
    delta = 1.0 / m if delta is None else delta
    rng = np.random.default_rng(seed)
    sup = model.draw_supports(k1 + k2, delta, rng)
    signs = np.exp(2j * np.pi * rng.uniform(size=k1 + k2))
    mod = model.draw_modulator(m, seed=seed + 1)
    kern = certificate.fejer_coeffs(m)
    return certificate.assemble_system(
        kern, sup[:k1], signs[:k1], sup[k1:], signs[k1:], mod
    )


def test_fejer_minimal_bandwidth_vector():
    assert np.allclose(
        certificate.fejer_coefficient_vector(1), [0.0, 0.0, 1.0, 0.0, 0.0]
    )
    with pytest.raises(DegenerateM):
        certificate.fejer_coefficient_vector(0)
    with pytest.raises(DegenerateM):
        certificate.fejer_coeffs(1)


def test_fejer_matches_direct_double_sum():
    for m in (2, 4, 7):
        s = certificate.fejer_coefficient_vector(m)
        assert np.allclose(s, _fejer_direct(m), atol=1e-12)
        assert np.sum(s) == pytest.approx(m, rel=1e-12)


def test_kernel_unit_peak_and_curvature():
    for m in (2, 4, 16):
        kern = certificate.fejer_coeffs(m)
        assert certificate.kernel_eval(kern, 0.0) == pytest.approx(1.0, rel=1e-9)
        expect = -(4.0 / 3.0) * math.pi**2 * (m * m - 1)
        assert kern.kpp0 == pytest.approx(expect, rel=1e-9)
        assert certificate.kernel_eval(kern, 0.0, order=2).real == pytest.approx(
            expect, rel=1e-9
        )
    # frozen: M=4 curvature is -20 pi^2
    assert certificate.fejer_coeffs(4).kpp0 == pytest.approx(-20 * math.pi**2)


def test_kernel_is_real_and_nonnegative():
    kern = certificate.fejer_coeffs(8)
    taus = np.linspace(0.0, 1.0, 257, endpoint=False)
    vals = certificate.kernel_eval(kern, taus)
    assert np.max(np.abs(vals.imag)) <= 1e-12
    assert vals.real.min() >= -1e-12


def test_kernel_derivatives_vs_finite_differences():
    kern = certificate.fejer_coeffs(6)
    h = 1e-6
    for tau in (0.07, 0.41):
        for order in (0, 1, 2):
            fd = (
                certificate.kernel_eval(kern, tau + h, order)
                - certificate.kernel_eval(kern, tau - h, order)
            ) / (2 * h)
            exact = certificate.kernel_eval(kern, tau, order + 1)
            assert abs(fd - exact) <= 1e-5 * max(1.0, abs(exact))


def test_modulated_kernel_matches_direct_sum():
    m = 5
    kern = certificate.fejer_coeffs(m)
    g = model.draw_modulator(m, seed=9).g
    n = model.freq_index(m)
    for tau in (0.0, 0.33):
        direct = np.sum((kern.s / m) * g * np.exp(2j * np.pi * n * tau))
        val = certificate.modulated_kernel_eval(kern, g, tau)
        assert val == pytest.approx(direct)


def test_modulated_kernel_conjugation_relation():
    # conj(K_g(tau)) = K_gbar(-tau): conjugating every term flips both
    # the modulator and the phase sign
    m = 6
    kern = certificate.fejer_coeffs(m)
    g = model.draw_modulator(m, seed=13).g
    for tau in (0.08, 0.47, 0.93):
        lhs = np.conj(certificate.modulated_kernel_eval(kern, g, tau))
        rhs = certificate.modulated_kernel_eval(kern, np.conj(g), -tau)
        assert lhs == pytest.approx(rhs, abs=1e-13)


def test_empty_second_channel_reduces_to_one_block():
    m = 8
    kern = certificate.fejer_coeffs(m)
    mod = model.draw_modulator(m, seed=2)
    sup = np.array([0.1, 0.4, 0.75])
    signs = np.exp(2j * np.pi * np.array([0.3, 0.6, 0.9]))
    sys = certificate.assemble_system(
        kern, sup, signs, np.empty(0), np.empty(0, dtype=complex), mod
    )
    assert sys.w.shape == (6, 6)
    solo = certificate.assemble_system(
        kern, sup, signs, np.empty(0), np.empty(0, dtype=complex),
        model.draw_modulator(m, seed=99),
    )
    # the single-channel block does not depend on the modulator
    assert np.allclose(sys.w, solo.w, atol=1e-14)


def test_assemble_blocks_spot_values():
    m = 8
    sys = _random_cert_system(m, 2, 2, seed=3)
    kern = certificate.fejer_coeffs(m)
    w10, wg0, w20 = (
        sys.w[:2, :2],
        sys.w[:2, 4:6],
        sys.w[4:6, 4:6],
    )
    for l in range(2):
        for k in range(2):
            gap11 = sys.supports1[l] - sys.supports1[k]
            assert w10[l, k] == pytest.approx(
                certificate.kernel_eval(kern, gap11), abs=1e-14
            )
            gap12 = sys.supports1[l] - sys.supports2[k]
            assert wg0[l, k] == pytest.approx(
                certificate.modulated_kernel_eval(
                    kern, sys.modulator.g, gap12
                ),
                abs=1e-14,
            )
            gap22 = sys.supports2[l] - sys.supports2[k]
            assert w20[l, k] == pytest.approx(
                certificate.kernel_eval(kern, gap22), abs=1e-14
            )


def test_single_bump_is_identity():
    # one source in channel 1 only: the interpolation system is I
    m = 6
    kern = certificate.fejer_coeffs(m)
    mod = model.draw_modulator(m, seed=5)
    sign = np.array([np.exp(0.77j)])
    sys = certificate.assemble_system(
        kern, np.array([0.3]), sign, np.empty(0), np.empty(0, dtype=complex), mod
    )
    assert np.allclose(sys.w, np.eye(2), atol=1e-12)
    sys = certificate.solve_certificate(sys)
    assert sys.alpha1[0] == pytest.approx(sign[0])
    assert abs(sys.beta1[0]) <= 1e-12


def test_certificate_interpolates_signs():
    sys = certificate.solve_certificate(_random_cert_system(16, 3, 2, seed=2))
    assert certificate.interpolation_residual(sys) <= 1e-8
    p_at_sup, _ = certificate.eval_cert_polys(sys, sys.supports1)
    assert np.allclose(p_at_sup, sys.signs1, atol=1e-8)
    _, q_at_sup = certificate.eval_cert_polys(sys, sys.supports2)
    assert np.allclose(q_at_sup, sys.signs2, atol=1e-8)


def test_certificate_derivative_vanishes_at_supports():
    # the derivative rows force |P'| = 0 on channel-1 supports and
    # |Q'| = 0 on channel-2 supports
    sys = certificate.solve_certificate(_random_cert_system(16, 3, 2, seed=2))
    p_hat = certificate.certificate_to_dual_vector(sys)
    poly_p, poly_q = dualpoly.dual_polynomials(p_hat, sys.modulator)
    dp = dualpoly.eval_poly(poly_p, sys.supports1, order=1)
    dq = dualpoly.eval_poly(poly_q, sys.supports2, order=1)
    # scale: derivatives carry a 2*pi*M factor, normalize before comparing
    scale = abs(sys.kernel.kpp0) ** 0.5
    assert np.max(np.abs(dp)) / scale <= 1e-8
    assert np.max(np.abs(dq)) / scale <= 1e-8


def test_near_duplicate_supports_blow_up():
    # two channel-1 supports at distance 1/(10M): the interpolation
    # system is numerically degenerate
    m = 16
    kern = certificate.fejer_coeffs(m)
    mod = model.draw_modulator(m, seed=0)
    sup = np.array([0.3, 0.3 + 1.0 / (10 * m)])
    signs = np.ones(2, dtype=complex)
    sys = certificate.assemble_system(
        kern, sup, signs, np.empty(0), np.empty(0, dtype=complex), mod
    )
    try:
        sys = certificate.solve_certificate(sys)
    except SingularSystem:
        return
    assert sys.condition_estimate > 1e3


def test_overlapping_cross_channel_supports_still_validate():
    # no separation is needed BETWEEN channels: tau_11 == tau_21 is fine
    m = 16
    kern = certificate.fejer_coeffs(m)
    mod = model.draw_modulator(m, seed=6)
    shared = 0.37
    sup1 = np.array([shared, 0.62])
    sup2 = np.array([shared, 0.81])
    rng = np.random.default_rng(3)
    signs = np.exp(2j * np.pi * rng.uniform(size=4))
    sys = certificate.assemble_system(
        kern, sup1, signs[:2], sup2, signs[2:], mod
    )
    sys = certificate.solve_certificate(sys)
    report = certificate.validate_certificate(sys)
    assert report.interp_residual <= 1e-8
    assert report.valid


def test_certificate_vector_is_dual_feasible():
    # a valid certificate's coefficient vector satisfies both dual-norm
    # constraints (channel 2 through the conjugate modulator)
    sys = certificate.solve_certificate(_random_cert_system(16, 3, 3, seed=0))
    p_hat = certificate.certificate_to_dual_vector(sys)
    assert solver.dual_atomic_norm(p_hat) <= 1.0 + 1e-6
    assert solver.dual_atomic_norm(np.conj(sys.modulator.g) * p_hat) <= 1.0 + 1e-6


def test_single_source_pair_block_norms_closed_form():
    # K1=K2=1: each W_i is 2x2 with unit diagonal; spectral norms match
    # the closed-form singular values of a 2x2 matrix
    sys = _random_cert_system(8, 1, 1, seed=11)
    w1 = sys.w[:2, :2]
    assert w1[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert w1[1, 1] == pytest.approx(1.0, abs=1e-12)
    report = certificate.block_norm_report(sys)
    b = np.abs(w1[0, 1])
    # singular values of [[1, b],[b', 1]] with |b'|=|b| are 1 +- |b|
    assert report.norm_w1 == pytest.approx(1.0 + b, rel=1e-9)
    assert report.norm_i_minus_w1 == pytest.approx(b, abs=1e-9)
    assert report.norm_w1_inv == pytest.approx(1.0 / (1.0 - b), rel=1e-9)


def test_coherent_modulator_cross_norm_hits_one():
    # g identically 1 with shared cross-channel support: the cross block
    # contains K(0)=1, so its norm cannot concentrate below delta=0.5
    m = 32
    kern = certificate.fejer_coeffs(m)
    mod = model.modulator_from_phases(np.zeros(model.band_size(m)), m)
    sup = np.array([0.25])
    sign = np.ones(1, dtype=complex)
    sys = certificate.assemble_system(kern, sup, sign, sup, sign, mod)
    report = certificate.block_norm_report(sys)
    assert report.norm_wg >= 0.99


def test_certificate_validates_on_separated_supports():
    sys = certificate.solve_certificate(_random_cert_system(16, 3, 3, seed=0))
    report = certificate.validate_certificate(sys, certificate.ValidationConfig())
    assert report.valid
    assert report.interp_residual <= 1e-8
    assert report.max_p_far < 1.0
    assert report.max_q_far < 1.0
    for channel in (report.channel1, report.channel2):
        assert channel.max_near < 1.0
        assert channel.near_curvature > 0.0


def test_certificate_dual_vector_consistency():
    sys = certificate.solve_certificate(_random_cert_system(8, 2, 2, seed=6))
    p_hat = certificate.certificate_to_dual_vector(sys)
    poly_p, poly_q = dualpoly.dual_polynomials(p_hat, sys.modulator)
    taus = np.array([0.11, 0.52, 0.9])
    p_direct, q_direct = certificate.eval_cert_polys(sys, taus)
    assert np.allclose(dualpoly.eval_poly(poly_p, taus), p_direct, atol=1e-10)
    assert np.allclose(dualpoly.eval_poly(poly_q, taus), q_direct, atol=1e-10)


def test_duplicate_support_raises():
    m = 8
    kern = certificate.fejer_coeffs(m)
    mod = model.draw_modulator(m, seed=0)
    ones = np.ones(2, dtype=complex)
    with pytest.raises(DuplicateSupport):
        certificate.assemble_system(
            kern, np.array([0.2, 0.2]), ones, np.empty(0),
            np.empty(0, dtype=complex), mod,
        )


def test_sign_modulus_checked():
    m = 8
    kern = certificate.fejer_coeffs(m)
    mod = model.draw_modulator(m, seed=0)
    with pytest.raises(ValueError):
        certificate.assemble_system(
            kern, np.array([0.2]), np.array([2.0 + 0j]), np.empty(0),
            np.empty(0, dtype=complex), mod,
        )


def test_block_norms_within_analytical_bounds():
    # spot check of the acceptance sweep at two bandwidths
    for m, seed in ((8, 1), (16, 2), (16, 3)):
        sys = certificate.solve_certificate(_random_cert_system(m, 2, 3, seed=seed))
        report = certificate.block_norm_report(sys)
        assert report.within_bounds
        assert report.norm_i_minus_w1 <= certificate.I_MINUS_W_BOUND
        assert report.norm_w1 <= certificate.W_BOUND
        assert report.norm_w1_inv <= certificate.W_INV_BOUND
        assert report.norm_i_minus_w2 <= certificate.I_MINUS_W_BOUND
        assert report.norm_w2 <= certificate.W_BOUND
        assert report.norm_w2_inv <= certificate.W_INV_BOUND


def test_modulated_kernel_sup_decays_with_bandwidth():
    # sup |K_g| should shrink like sqrt(log M / M): the normalized ratios
    # stay within a small mutual factor while the raw sup decreases
    sups = []
    ratios = []
    for m in (16, 64, 256):
        kern = certificate.fejer_coeffs(m)
        g = model.draw_modulator(m, seed=21).g
        taus = np.linspace(0.0, 1.0, 16 * m, endpoint=False)
        sup = float(np.abs(certificate.modulated_kernel_eval(kern, g, taus)).max())
        sups.append(sup)
        ratios.append(sup / math.sqrt(math.log(m) / m))
    assert sups[0] > sups[1] > sups[2]
    assert max(ratios) / min(ratios) <= 3.0


def test_required_bandwidth_frozen_values():
    assert certificate.required_bandwidth(0.5, 0.1, 2, 2) == 1613
    assert certificate.required_bandwidth(0.6, 0.05, 1, 3) == 1946


def test_concentration_config_validation():
    with pytest.raises(ValueError):
        certificate.ConcentrationConfig(delta=0.7, trials=10).validate()
    with pytest.raises(ValueError):
        certificate.ConcentrationConfig(delta=0.5, trials=-1).validate()


def test_wg_concentration_is_deterministic():
    cfg = certificate.ConcentrationConfig(delta=0.5, trials=8)
    rep1 = certificate.wg_concentration_mc(48, 2, 2, cfg, seed=3)
    rep2 = certificate.wg_concentration_mc(48, 2, 2, cfg, seed=3)
    assert rep1 == rep2
    assert rep1.trials == 8
    assert 0.0 <= rep1.rate <= 1.0
    assert rep1.max_norm > 0.0


def test_wg_concentration_zero_trials_warns():
    cfg = certificate.ConcentrationConfig(delta=0.5, trials=0)
    rep = certificate.wg_concentration_mc(32, 2, 2, cfg, seed=0)
    assert rep.warning
    assert rep.rate == 0.0


def test_report_dict_layout():
    sys = certificate.solve_certificate(_random_cert_system(8, 2, 2, seed=8))
    report = certificate.validate_certificate(sys, certificate.ValidationConfig())
    norms = certificate.block_norm_report(sys)
    payload = certificate.certificate_report_dict(report, norms)
    assert set(payload) == {
        "interp_residual", "maxP_far", "maxQ_far", "valid", "block_norms",
    }
    assert set(payload["block_norms"]) == {
        "norm_w1", "norm_w2", "norm_i_minus_w1", "norm_i_minus_w2",
        "norm_w1_inv", "norm_w2_inv", "norm_wg", "within_bounds",
    }
