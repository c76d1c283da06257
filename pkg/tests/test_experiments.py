"""Monte Carlo experiment drivers and their CSV products."""

import os

import pytest

from atomdemix import experiments
from atomdemix.experiments import (
    ExperimentConfig,
    NoiseSpec,
    PhaseCell,
    parse_phase_csv,
    parse_sweep_csv,
    run_phase_transition,
    run_success_sweep,
)


def _pt_config(**kw):
    base = dict(kind="phase-transition", m=4, k1=1, k2=1, trials=2, seed=5)
    base.update(kw)
    return ExperimentConfig(**base)


def test_noise_spec_validation():
    NoiseSpec().validate()
    NoiseSpec(kind="bounded", sigma=0.1).validate()
    with pytest.raises(ValueError):
        NoiseSpec(kind="poisson").validate()
    with pytest.raises(ValueError):
        NoiseSpec(sigma=0.1, snr_db=20.0).validate()
    with pytest.raises(ValueError):
        NoiseSpec(sigma=-1.0).validate()


def test_experiment_config_validation():
    _pt_config().validate()
    with pytest.raises(ValueError):
        ExperimentConfig(kind="juggle").validate()
    with pytest.raises(ValueError):
        _pt_config(m=0).validate()
    with pytest.raises(ValueError):
        _pt_config(k1=-1).validate()
    with pytest.raises(ValueError):
        _pt_config(trials=0).validate()
    with pytest.raises(ValueError):
        _pt_config(delta_min=0.0).validate()
    with pytest.raises(ValueError):
        _pt_config(lambda_w=-0.5).validate()


def test_separation_default_and_override():
    cfg = _pt_config(m=8)
    assert cfg.separation() == pytest.approx(1 / 16)
    assert cfg.separation(4) == pytest.approx(1 / 8)
    assert _pt_config(delta_min=0.2).separation() == 0.2
    assert _pt_config(delta_min=0.2).separation(64) == 0.2


def test_phase_cell_bounds():
    PhaseCell(1, 1, 2, 2, 1.0)
    with pytest.raises(ValueError):
        PhaseCell(1, 1, 3, 2, 1.5)
    with pytest.raises(ValueError):
        PhaseCell(1, 1, -1, 2, -0.5)


def test_phase_transition_grid_is_deterministic():
    cfg = _pt_config(m=4, k1=2, k2=1, trials=2)
    a = run_phase_transition(cfg)
    b = run_phase_transition(cfg)
    assert a == b
    assert [(c.k1, c.k2) for c in a] == [(1, 1), (2, 1)]
    for c in a:
        assert c.trials == 2
        assert c.rate == c.successes / c.trials


def test_empty_cell_counts_as_success():
    cfg = _pt_config(trials=3)
    cells = run_phase_transition(cfg, k1_range=[0], k2_range=[0])
    assert cells == [PhaseCell(0, 0, 3, 3, 1.0)]


def test_single_trial_rate_is_binary():
    cells = run_phase_transition(_pt_config(trials=1))
    assert cells[0].rate in (0.0, 1.0)


def test_phase_transition_requires_matching_kind():
    cfg = ExperimentConfig(kind="synth")
    with pytest.raises(ValueError):
        run_phase_transition(cfg)
    with pytest.raises(ValueError):
        run_success_sweep(cfg, m_values=[4])


def test_sweep_requires_exactly_one_axis():
    cfg = _pt_config()
    with pytest.raises(ValueError):
        run_success_sweep(cfg)
    with pytest.raises(ValueError):
        run_success_sweep(cfg, m_values=[4], k_values=[1])


def test_sweep_over_bandwidths():
    cfg = _pt_config(k1=1, k2=1, trials=2)
    points = run_success_sweep(cfg, m_values=[3, 4])
    assert [x for x, _ in points] == [3.0, 4.0]
    for _, rate in points:
        assert 0.0 <= rate <= 1.0


def test_sweep_over_source_counts():
    cfg = _pt_config(m=4, trials=2)
    points = run_success_sweep(cfg, k_values=[1])
    assert points[0][0] == 1.0
    assert 0.0 <= points[0][1] <= 1.0


def test_phase_csv_round_trip():
    cells = [PhaseCell(1, 2, 19, 20, 0.95), PhaseCell(2, 2, 0, 20, 0.0)]
    assert parse_phase_csv(experiments.format_phase_csv(cells)) == cells
    with pytest.raises(ValueError):
        parse_phase_csv("k1,k2,wins\n1,1,1\n")


def test_sweep_csv_round_trip(tmp_path):
    points = [(4.0, 0.5), (8.0, 1.0)]
    assert parse_sweep_csv(experiments.format_sweep_csv(points)) == points
    with pytest.raises(ValueError):
        parse_sweep_csv("m,rate\n4,1.0\n")
    path = tmp_path / "sweep.csv"
    experiments.save_sweep_csv(path, points)
    assert parse_sweep_csv(path.read_text()) == points


def test_save_phase_csv(tmp_path):
    cells = [PhaseCell(1, 1, 1, 2, 0.5)]
    path = tmp_path / "grid.csv"
    experiments.save_phase_csv(path, cells)
    assert parse_phase_csv(path.read_text()) == cells


def test_worker_count_env_handling(monkeypatch):
    monkeypatch.delenv("ATOMDEMIX_THREADS", raising=False)
    assert experiments.worker_count() == (os.cpu_count() or 1)
    monkeypatch.setenv("ATOMDEMIX_THREADS", "1")
    assert experiments.worker_count() == 1
    monkeypatch.setenv("ATOMDEMIX_THREADS", "0")
    assert experiments.worker_count() == 1
    monkeypatch.setenv("ATOMDEMIX_THREADS", "many")
    with pytest.raises(ValueError):
        experiments.worker_count()
