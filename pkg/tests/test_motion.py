import numpy as np
import pytest
from hypothesis import given, strategies as st

from tubelets.motion import (AFFINE, QUADRATIC, MotionParams, RobustConfig, estimate_dominant_motion,
                             tukey_influence_ratio, tukey_rho, velocity)

from conftest import shifted_pair, textured

finite = st.floats(-10, 10, allow_nan=False)


def ols_linearized(f0, f1):
    """Closed-form least squares on the linearised brightness-constancy equations."""
    gy, gx = np.gradient(f0)
    it = f1 - f0
    y, x = np.mgrid[0:f0.shape[0], 0:f0.shape[1]].astype(float)
    a = np.stack([gx, gx * x, gx * y, gy, gy * x, gy * y], -1).reshape(-1, 6)
    return np.linalg.lstsq(a, -it.ravel(), rcond=None)[0]


@pytest.mark.parametrize("a, p, expect", [((0, 0, 0, 0, 0, 0), (3, 4), (0, 0)),
                                          ((2, 0, 0, -1, 0, 0), (10, 5), (2, -1)),
                                          ((0, 0.1, 0, 0, 0, 0.1), (10, 20), (1.0, 2.0))])
def test_velocity_examples(a, p, expect):
    u, v = velocity(MotionParams(AFFINE, a), *p)
    assert (float(u), float(v)) == pytest.approx(expect, abs=1e-12)


def test_velocity_quadratic_terms():
    u, v = velocity(MotionParams(QUADRATIC, (0, 0, 0, 0, 0, 0, 0.01, 0.02)), 10, 5)
    assert (float(u), float(v)) == pytest.approx((0.01 * 100 + 0.02 * 50, 0.01 * 50 + 0.02 * 25))


@given(st.lists(finite, min_size=6, max_size=6), st.lists(finite, min_size=6, max_size=6),
       finite, finite, st.floats(0, 100), st.floats(0, 100))
def test_velocity_linear_in_coefficients(a, b, alpha, beta, x, y):
    combo = MotionParams(AFFINE, tuple(alpha * np.array(a) + beta * np.array(b)))
    ua, va = velocity(MotionParams(AFFINE, a), x, y)
    ub, vb = velocity(MotionParams(AFFINE, b), x, y)
    u, v = velocity(combo, x, y)
    assert float(u) == pytest.approx(alpha * ua + beta * ub, abs=1e-6)
    assert float(v) == pytest.approx(alpha * va + beta * vb, abs=1e-6)


def test_params_validation():
    with pytest.raises(ValueError):
        MotionParams(AFFINE, (0, 0, 0))
    with pytest.raises(ValueError):
        MotionParams(AFFINE, (np.nan, 0, 0, 0, 0, 0))
    with pytest.raises(ValueError):
        RobustConfig(tukey_scale=0)


@pytest.mark.parametrize("r, expect", [(0.0, 1.0), (2.0, 0.5625), (4.0, 0.0), (8.0, 0.0), (-2.0, 0.5625)])
def test_influence_ratio_values(r, expect):
    assert tukey_influence_ratio(r, 4.0) == expect


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.1, 20))
def test_influence_ratio_even_monotone_bounded(r1, r2, c):
    w1, w2 = tukey_influence_ratio(r1, c), tukey_influence_ratio(r2, c)
    assert 0.0 <= w1 <= 1.0
    assert w1 == tukey_influence_ratio(-r1, c)
    if abs(r1) <= abs(r2):
        assert w1 >= w2
    if abs(r1) >= c:
        assert w1 == 0.0


def test_influence_ratio_rejects_bad_scale():
    with pytest.raises(ValueError):
        tukey_influence_ratio(1.0, 0.0)


def test_rho_saturates():
    assert tukey_rho(10.0, 3.0) == pytest.approx(1.5)
    assert tukey_rho(0.0, 3.0) == 0.0


def test_identity_pair_gives_zero_params():
    f = textured(48, 48, 3)
    est = estimate_dominant_motion(f, f)
    assert np.all(np.abs(est.params.as_array()) < 1e-6)
    assert not est.degenerate


def test_two_pixel_shift_recovered():
    f0 = textured(64, 64, 5)
    f1 = np.roll(f0, 2, axis=1)
    a = estimate_dominant_motion(f0, f1).params.as_array()
    assert 1.75 <= a[0] <= 2.25
    assert np.all(np.abs(a[1:]) < 0.05)


def test_constant_frames_are_degenerate():
    f = np.full((20, 20), 90.0)
    est = estimate_dominant_motion(f, f)
    assert est.degenerate
    assert np.all(est.params.as_array() == 0)


def test_mismatched_frames():
    with pytest.raises(ValueError, match="mismatch"):
        estimate_dominant_motion(np.zeros((4, 4)), np.zeros((4, 5)))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_objective_non_increasing(seed):
    f0, f1 = shifted_pair(64, 64, (1.5, -0.5), seed, patch=(20, 20, 14, -3, 2))
    hist = estimate_dominant_motion(f0, f1).objective_history
    assert len(hist) >= 2
    assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))


def test_robust_beats_ols_on_80_20_mixture():
    # 20% of the frame (a 29x29 block of 64x64) follows its own motion
    f0, f1 = shifted_pair(64, 64, (0.6, -0.4), 7, patch=(18, 18, 29, -2, 1))
    truth = np.array([0.6, 0, 0, -0.4, 0, 0])
    robust = estimate_dominant_motion(f0, f1).params.as_array()
    ols = ols_linearized(f0, f1)
    assert np.linalg.norm(robust - truth) < np.linalg.norm(ols - truth)


def test_weights_and_residuals_shapes():
    f0, f1 = shifted_pair(40, 40, (1, 0), 1)
    est = estimate_dominant_motion(f0, f1)
    assert est.weights.shape == (40, 40)
    # warping by +1 px leaves the last column without a source sample
    assert not est.valid[:, -1].any()
    w = est.weights[est.valid]
    assert np.all((w >= 0) & (w <= 1))


def test_quadratic_model_on_translation():
    f0, f1 = shifted_pair(64, 64, (1.0, 0.5), 11)
    a = estimate_dominant_motion(f0, f1, RobustConfig(model=QUADRATIC)).params.as_array()
    assert a.shape == (8,)
    assert a[0] == pytest.approx(1.0, abs=0.25) and a[3] == pytest.approx(0.5, abs=0.25)
    assert np.all(np.abs(a[6:]) < 1e-3)
