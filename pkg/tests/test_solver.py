"""ADMM solver: atomic-norm values, demixing, optimality checks."""

import numpy as np
import pytest

from atomdemix import model, solver


def _noise_free_instance(m, k1, k2, seed, delta=None):
    delta = 0.5 / m if delta is None else delta
    inst = model.draw_instance(m=m, k1=k1, k2=k2, delta_min=delta, seed=seed)
    meas = model.instance_measurement(inst)
    x1 = model.synthesize_spectrum(inst.signals[0], m)
    x2 = model.synthesize_spectrum(inst.signals[1], m)
    return inst, meas, x1, x2


def test_admm_config_validation():
    with pytest.raises(ValueError):
        solver.AdmmConfig(rho=0.0).validate()
    with pytest.raises(ValueError):
        solver.AdmmConfig(max_iters=0).validate()
    with pytest.raises(ValueError):
        solver.AdmmConfig(eps_abs=1e-13).validate()
    solver.AdmmConfig().validate()


def test_regularization_config_validation():
    with pytest.raises(ValueError):
        solver.RegularizationConfig(lambda_w=0.0).validate()
    with pytest.raises(ValueError):
        solver.RegularizationConfig(lambda_w=1.0, c_w=0.5).validate()


def test_lambda_formulas_frozen():
    assert solver.lambda_gaussian(1.0, 4) == pytest.approx(
        12.03392888651702, rel=1e-12
    )
    assert solver.lambda_gaussian(0.05, 16) == pytest.approx(
        1.312009003488475, rel=1e-12
    )
    assert solver.lambda_bounded(0.3, 4, c_w=2.0) == pytest.approx(
        2.473863375370596, rel=1e-12
    )


def test_atomic_norm_of_single_atom():
    # the gauge of one scaled atom is its amplitude modulus
    for a, tau, m in ((1.0, 0.0, 3), (0.8 - 0.6j, 0.37, 4), (2.5j, 0.91, 2)):
        x = a * model.atom(tau, m)
        val = solver.atomic_norm_sdp(x, m)
        assert val == pytest.approx(abs(a), abs=1e-3)


def test_atomic_norm_zero_vector():
    assert solver.atomic_norm_sdp(np.zeros(9, dtype=complex), 2) == pytest.approx(
        0.0, abs=1e-6
    )


def test_atomic_norm_scaling(crand):
    x = crand(13)
    v1 = solver.atomic_norm_sdp(x, 3)
    v2 = solver.atomic_norm_sdp(2.0 * x, 3)
    assert v2 == pytest.approx(2.0 * v1, rel=1e-3)


def test_atomic_norm_full_output(crand):
    x = crand(9)
    value, info = solver.atomic_norm_sdp(x, 2, full_output=True)
    assert value == pytest.approx(solver.atomic_norm_sdp(x, 2), rel=1e-6)
    assert info["converged"]
    assert info["iterations"] >= 1
    assert info["primal_residual"] >= 0.0


def test_dual_atomic_norm_of_atom_coefficients():
    # the polynomial of c(tau) coefficients peaks at 4M+1
    for m in (2, 5):
        p = model.atom(0.3, m)
        val = solver.dual_atomic_norm(p)
        assert val == pytest.approx(4 * m + 1, rel=1e-8)
    assert solver.dual_atomic_norm(np.zeros(9, dtype=complex)) == 0.0


def test_dual_atomic_norm_homogeneous(crand):
    p = crand(13)
    assert solver.dual_atomic_norm(3.0 * p) == pytest.approx(
        3.0 * solver.dual_atomic_norm(p), rel=1e-9
    )


def test_demix_exact_recovers_noise_free():
    _, meas, x1, x2 = _noise_free_instance(8, 2, 2, seed=1)
    sol = solver.demix_exact(meas)
    assert sol.converged
    assert sol.mode == "exact"
    err = np.linalg.norm(sol.x1_hat - x1) / np.linalg.norm(x1)
    err += np.linalg.norm(sol.x2_hat - x2) / np.linalg.norm(x2)
    assert err <= 1e-4
    report = solver.check_optimality(meas, sol)
    assert report.satisfied
    assert report.dual_norm_p <= 1.0 + report.tolerance
    assert report.dual_norm_q <= 1.0 + report.tolerance


def test_demix_exact_zero_measurement():
    mod = model.draw_modulator(4, seed=0)
    meas = model.MeasurementSet(y=np.zeros(17, dtype=complex), modulator=mod)
    sol = solver.demix_exact(meas)
    assert sol.converged
    assert np.linalg.norm(sol.x1_hat) <= 1e-6
    assert np.linalg.norm(sol.x2_hat) <= 1e-6


def test_atomic_norm_of_separated_atom_sum():
    # separation 0.5 >= 1/M, so the gauge splits across the two atoms
    m = 8
    x = model.atom(0.1, m) + model.atom(0.6, m)
    assert solver.atomic_norm_sdp(x, m) == pytest.approx(2.0, abs=1e-3)


def test_demix_with_silent_second_channel():
    # degenerate mix: channel 2 empty, solver must not leak energy into it
    m = 8
    rng = np.random.default_rng(21)
    locs = model.draw_supports(2, delta_min=1.0 / m, rng=rng)
    amps = np.exp(2j * np.pi * rng.uniform(size=2))
    sig1 = model.PointSourceSignal(locs, amps)
    meas = model.synthesize_measurement(
        sig1, model.PointSourceSignal.empty(), model.draw_modulator(m, seed=22)
    )
    sol = solver.demix_exact(meas)
    assert sol.converged
    x1 = model.synthesize_spectrum(sig1, m)
    assert np.linalg.norm(sol.x1_hat - x1) / np.linalg.norm(x1) <= 1e-4
    assert np.linalg.norm(sol.x2_hat) <= 1e-4 * np.linalg.norm(x1)


def test_demix_regularized_dual_feasible_at_moderate_noise():
    # first-order optimality must hold whenever the solver reports success
    inst, clean_meas, _, _ = _noise_free_instance(8, 2, 2, seed=6)
    sigma = model.sigma_for_snr(clean_meas.y, 16.0)
    inst.noise_sigma = sigma
    meas = model.instance_measurement(inst)
    lam = solver.lambda_gaussian(sigma, 8)
    sol = solver.demix_regularized(meas, solver.RegularizationConfig(lambda_w=lam))
    assert sol.converged
    assert sol.mode == "regularized"
    assert sol.lambda_w == pytest.approx(lam)
    report = solver.check_optimality(meas, sol)
    assert report.satisfied, report.slacks


def test_demix_regularized_tiny_lambda_matches_exact():
    # a vanishing penalty must reproduce the equality-constrained solution;
    # this regime stresses the flat channel-swap direction of the objective
    _, meas, x1, x2 = _noise_free_instance(8, 2, 2, seed=5, delta=1.0 / 8)
    lam = 1e-6 * np.sqrt(33)
    sol = solver.demix_regularized(meas, solver.RegularizationConfig(lambda_w=lam))
    err = np.linalg.norm(sol.x1_hat - x1) / np.linalg.norm(x1)
    err += np.linalg.norm(sol.x2_hat - x2) / np.linalg.norm(x2)
    assert err <= 1e-3
    assert sol.converged


def test_check_optimality_flags_perturbed_solution():
    _, meas, _, _ = _noise_free_instance(6, 2, 1, seed=2)
    sol = solver.demix_exact(meas)
    good = solver.check_optimality(meas, sol)
    assert good.satisfied
    sol.x1_hat = sol.x1_hat + 0.3
    bad = solver.check_optimality(meas, sol)
    assert not bad.satisfied


def test_solution_json_round_trip(tmp_path):
    _, meas, _, _ = _noise_free_instance(4, 1, 1, seed=3)
    sol = solver.demix_exact(meas)
    path = tmp_path / "sol.json"
    solver.save_solution(str(path), sol)
    data = solver.load_solution(str(path))
    assert np.array_equal(data["x1"], sol.x1_hat)
    assert np.array_equal(data["x2"], sol.x2_hat)
    assert np.array_equal(data["p"], sol.p_hat)
    assert data["objective"] == sol.objective
    assert data["iterations"] == sol.iterations
    assert data["residuals"]["primal"] == sol.primal_residual


def test_solver_reports_residuals_and_iterations():
    _, meas, _, _ = _noise_free_instance(4, 1, 1, seed=8)
    cfg = solver.AdmmConfig(max_iters=40)
    sol = solver.demix_exact(meas, cfg)
    assert sol.iterations <= 40
    assert np.isfinite(sol.primal_residual)
    assert np.isfinite(sol.dual_residual)
    if not sol.converged:
        assert sol.iterations == 40


def test_objective_history_tracking():
    _, meas, _, _ = _noise_free_instance(4, 1, 1, seed=8)
    cfg = solver.AdmmConfig(track_objective=True, max_iters=300)
    sol = solver.demix_exact(meas, cfg)
    assert len(sol.objective_history) == sol.iterations
    # the atomic-norm surrogate settles near its final value
    tail = np.asarray(sol.objective_history[-20:])
    assert np.max(np.abs(tail - sol.objective)) <= 1e-3 * (1 + abs(sol.objective))
