"""Fisher information, the location bound, and the MSE benchmark."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atomdemix import crb, model, solver
from atomdemix.exceptions import LengthMismatch, SingularFisher


def test_fisher_diagonal_frozen_value():
    # M=1, sigma=0.5: diag = (8 pi^2 / 0.25) * sum n^2 with sum n^2 = 10
    g = model.modulator_from_phases(np.zeros(5), 1)
    fm = crb.fisher(0.1, 0.4, g, 1, 0.5)
    assert fm.j[0, 0] == pytest.approx(3158.273408348595, rel=1e-12)
    assert fm.j[1, 1] == fm.j[0, 0]
    assert fm.j[0, 1] == fm.j[1, 0]


def test_fisher_input_validation():
    g = model.draw_modulator(4, seed=0)
    with pytest.raises(ValueError):
        crb.fisher(0.1, 0.4, g, 4, 0.0)
    with pytest.raises(LengthMismatch):
        crb.fisher(0.1, 0.4, g, 5, 0.5)


def test_coherent_collision_is_singular():
    # unmodulated channel at identical locations: rows coincide
    m = 3
    g = model.modulator_from_phases(np.zeros(model.band_size(m)), m)
    fm = crb.fisher(0.25, 0.25, g, m, 0.1)
    assert fm.j[0, 1] == pytest.approx(fm.j[0, 0], rel=1e-12)
    with pytest.raises(SingularFisher):
        crb.crb(fm)


@settings(max_examples=25, deadline=None)
@given(
    tau1=st.floats(0.0, 0.999),
    tau2=st.floats(0.0, 0.999),
    seed=st.integers(0, 10_000),
)
def test_cross_term_never_exceeds_diagonal(tau1, tau2, seed):
    m = 4
    g = model.draw_modulator(m, seed=seed)
    fm = crb.fisher(tau1, tau2, g, m, 0.3)
    assert abs(fm.j[0, 1]) <= fm.j[0, 0] * (1 + 1e-12)


def test_crb_matches_matrix_inverse():
    g = model.draw_modulator(5, seed=2)
    fm = crb.fisher(0.12, 0.61, g, 5, 0.2)
    lo1, lo2 = crb.crb(fm)
    inv = np.linalg.inv(fm.j)
    assert lo1 == pytest.approx(inv[0, 0], rel=1e-12)
    assert lo2 == pytest.approx(inv[1, 1], rel=1e-12)


def test_crb_closed_form_frozen():
    fm = crb.FisherMatrix(
        j=np.array([[3.0, 1.0], [1.0, 2.0]]), sigma=1.0, m=1,
        g=model.draw_modulator(1, seed=0), tau1=0.0, tau2=0.5,
    )
    assert crb.crb(fm) == pytest.approx((0.4, 0.6))


def test_curve_is_deterministic():
    a = crb.mse_vs_crb(4, [30.0], trials=2, seed=7)
    b = crb.mse_vs_crb(4, [30.0], trials=2, seed=7)
    assert a == b
    assert len(a) == 1
    assert a[0].trials == 2


def test_high_snr_estimates_track_truth():
    pts = crb.mse_vs_crb(6, [60.0], trials=4, seed=0)
    (pt,) = pts
    assert pt.failures == 0
    assert pt.mse1 <= 1e-8
    assert pt.mse2 <= 1e-8
    assert pt.crb1 > 0.0
    assert pt.crb2 > 0.0


def test_failure_budget_yields_nan():
    # a 1-iteration solver converges on nothing: every trial is excluded
    cfg = solver.AdmmConfig(max_iters=1)
    pts = crb.mse_vs_crb(4, [20.0], trials=3, seed=1, admm_config=cfg)
    (pt,) = pts
    assert pt.failures == 3
    assert math.isnan(pt.mse1)
    assert math.isnan(pt.mse2)
    assert not math.isnan(pt.crb1)


def test_curve_csv_round_trip():
    pts = [
        crb.CrbCurvePoint(15.0, 1e-6, 2e-6, 3e-6, 4e-6, 200, 1),
        crb.CrbCurvePoint(25.0, 1e-7, 2e-7, float("nan"), float("nan"), 200, 30),
    ]
    text = crb.format_curve_csv(pts)
    back = crb.parse_curve_csv(text)
    assert back[0] == pts[0]
    assert back[1].snr_db == 25.0
    assert math.isnan(back[1].mse1) and math.isnan(back[1].mse2)
    assert back[1].failures == 30


def test_curve_csv_rejects_foreign_header():
    with pytest.raises(ValueError):
        crb.parse_curve_csv("a,b,c\n1,2,3\n")


def test_save_curve_csv(tmp_path):
    pts = [crb.CrbCurvePoint(10.0, 1.0, 2.0, 3.0, 4.0, 5, 0)]
    path = tmp_path / "curve.csv"
    crb.save_curve_csv(path, pts)
    assert crb.parse_curve_csv(path.read_text()) == pts
