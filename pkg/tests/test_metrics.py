"""Depth-quality metrics against closed-form values.

Every fixture here has a hand-computable answer: constant offsets for the
L2 term, ramps for the gradient term, constant patches for SSIM.
"""

from __future__ import annotations

import numpy as np
import pytest

from conftest import make_depth
from fusemap.metrics import (
    LossWeights,
    SsimParams,
    combined_loss,
    depth_l2,
    grad_loss,
    ssim,
    threshold_accuracy,
)


def const_depth(value, shape=(32, 32)):
    return make_depth(np.full(shape, float(value)))


# ── depth_l2 ────────────────────────────────────────────────────────────

def test_l2_identical_is_zero():
    d = const_depth(3.0)
    assert depth_l2(d, d) == 0.0


def test_l2_constant_offset():
    assert depth_l2(const_depth(4.0), const_depth(3.0)) == pytest.approx(1.0, abs=1e-12)


def test_l2_half_offset_closed_form():
    gt = np.full((10, 10), 3.0)
    pred = gt.copy()
    pred[:, 5:] += 2.0
    assert depth_l2(make_depth(pred), make_depth(gt)) == pytest.approx(np.sqrt(2.0), abs=1e-12)


def test_l2_ignores_jointly_invalid():
    gt = np.full((8, 8), 2.0)
    pred = gt + 5.0
    valid = np.zeros((8, 8), dtype=bool)
    valid[0, 0] = True
    pred_map = make_depth(np.where(valid, gt, pred))  # equal where valid
    assert depth_l2(make_depth(pred_map.values, valid), make_depth(gt)) == 0.0


def test_l2_no_joint_valid_is_error():
    a = make_depth(np.ones((4, 4)), np.zeros((4, 4), dtype=bool))
    b = const_depth(1.0, (4, 4))
    with pytest.raises(ValueError):
        depth_l2(a, b)


def test_l2_shape_mismatch():
    with pytest.raises(ValueError):
        depth_l2(const_depth(1.0, (4, 4)), const_depth(1.0, (5, 5)))


# ── grad_loss ───────────────────────────────────────────────────────────

def test_grad_identical_is_zero():
    d = make_depth(np.random.default_rng(0).uniform(1.0, 5.0, (16, 16)))
    assert grad_loss(d, d) == 0.0


def test_grad_constant_offset_cancels():
    gt = make_depth(np.random.default_rng(1).uniform(1.0, 5.0, (16, 16)))
    pred = make_depth(gt.values + 2.0)
    assert grad_loss(pred, gt) == pytest.approx(0.0, abs=1e-12)


def test_grad_unit_ramp_in_x():
    gt = np.full((12, 12), 3.0)
    ramp = np.tile(np.arange(12, dtype=np.float64), (12, 1))
    assert grad_loss(make_depth(gt + ramp), make_depth(gt)) == pytest.approx(1.0, abs=1e-12)


def test_grad_excludes_pixels_with_invalid_neighbors():
    gt = np.full((6, 6), 2.0)
    pred = gt.copy()
    pred[2, 3] = 7.0  # large spike
    valid = np.ones((6, 6), dtype=bool)
    valid[2, 3] = False  # spike pixel invalid in pred
    # gradients touching the spike are excluded, so the loss is zero
    assert grad_loss(make_depth(pred, valid), make_depth(gt)) == 0.0


# ── ssim ────────────────────────────────────────────────────────────────

def test_ssim_self_is_one():
    d = make_depth(np.random.default_rng(2).uniform(1.0, 5.0, (32, 32)))
    assert ssim(d, d) == pytest.approx(1.0, abs=1e-9)


def test_ssim_symmetry():
    rng = np.random.default_rng(3)
    a = make_depth(rng.uniform(1.0, 5.0, (32, 32)))
    b = make_depth(rng.uniform(1.0, 5.0, (32, 32)))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_constant_patches_closed_form():
    # constant images: variances and covariance vanish, so
    # ssim = (2ab + C1) / (a^2 + b^2 + C1) with C1 = (0.01 L)^2
    a, b, L = 0.5, 0.6, 1.0
    params = SsimParams(window=7, sigma=1.5, dynamic_range=L)
    expected = (2.0 * a * b + (0.01 * L) ** 2) / (a * a + b * b + (0.01 * L) ** 2)
    got = ssim(const_depth(a), const_depth(b), params)
    assert got == pytest.approx(expected, abs=1e-9)


def test_ssim_window_must_fit():
    with pytest.raises(ValueError):
        ssim(const_depth(1.0, (8, 8)), const_depth(1.0, (8, 8)), SsimParams(window=11))


def test_ssim_params_validation():
    with pytest.raises(ValueError):
        SsimParams(window=4)
    with pytest.raises(ValueError):
        SsimParams(sigma=0.0)
    with pytest.raises(ValueError):
        SsimParams(dynamic_range=-1.0)


# ── combined_loss ───────────────────────────────────────────────────────

def test_combined_identical_is_zero():
    d = make_depth(np.random.default_rng(4).uniform(1.0, 5.0, (32, 32)))
    assert combined_loss(d, d) == pytest.approx(0.0, abs=1e-9)


def test_combined_depth_projection():
    pred, gt = const_depth(4.0), const_depth(3.0)
    w = LossWeights(w_depth=1.0, w_grad=0.0, w_ssim=0.0)
    assert combined_loss(pred, gt, w) == pytest.approx(depth_l2(pred, gt), abs=1e-12)


def test_combined_ssim_projection():
    pred, gt = const_depth(0.5), const_depth(0.6)
    params = SsimParams(window=7, dynamic_range=1.0)
    w = LossWeights(w_depth=0.0, w_grad=0.0, w_ssim=1.0)
    expected = (1.0 - ssim(pred, gt, params)) / 2.0
    assert combined_loss(pred, gt, w, params) == pytest.approx(expected, abs=1e-12)


def test_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(w_depth=-1.0)
    with pytest.raises(ValueError):
        LossWeights(w_depth=0.0, w_grad=0.0, w_ssim=0.0)


# ── threshold_accuracy ──────────────────────────────────────────────────

def test_threshold_exact_match():
    d = const_depth(2.0)
    assert threshold_accuracy(d, d, 1.25) == 1.0


def test_threshold_all_beyond():
    gt = const_depth(2.0)
    pred = make_depth(gt.values * 1.3)
    assert threshold_accuracy(pred, gt, 1.25) == 0.0


def test_threshold_half_and_half():
    gt = np.full((10, 10), 2.0)
    pred = gt.copy()
    pred[:, 5:] *= 2.0
    assert threshold_accuracy(make_depth(pred), make_depth(gt), 1.25) == 0.5


def test_threshold_must_exceed_one():
    d = const_depth(1.0)
    with pytest.raises(ValueError):
        threshold_accuracy(d, d, 1.0)
