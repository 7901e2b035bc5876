"""Depth-map quality metrics: pixelwise RMSE, gradient-difference loss,
SSIM and their weighted combination, plus ratio-threshold accuracy.

These score a depth provider against ground truth; they are evaluation
metrics here, not training losses. All pairwise metrics are computed over
the pixels valid in both maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .depth import DepthMap


@dataclass(frozen=True)
class LossWeights:
    """Nonnegative weights for (depth, gradient, ssim) terms."""

    w_depth: float = 0.1
    w_grad: float = 1.0
    w_ssim: float = 1.0

    def __post_init__(self) -> None:
        w = (self.w_depth, self.w_grad, self.w_ssim)
        if not all(np.isfinite(w)) or any(x < 0 for x in w):
            raise ValueError("weights must be finite and nonnegative")
        if not any(x > 0 for x in w):
            raise ValueError("at least one weight must be positive")


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    sigma: float = 1.5
    dynamic_range: float = 10.0

    def __post_init__(self) -> None:
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd integer")
        if self.sigma <= 0 or self.dynamic_range <= 0:
            raise ValueError("sigma and dynamic_range must be positive")


def _check_shapes(pred: DepthMap, gt: DepthMap) -> None:
    if pred.values.shape != gt.values.shape:
        raise ValueError(
            f"shape mismatch: pred {pred.values.shape} vs gt {gt.values.shape}"
        )


def depth_l2(pred: DepthMap, gt: DepthMap) -> float:
    """Root-mean-square depth error over jointly valid pixels."""
    _check_shapes(pred, gt)
    both = pred.valid & gt.valid
    if not both.any():
        raise ValueError("no jointly valid pixels")
    diff = pred.values[both] - gt.values[both]
    return float(np.sqrt(np.mean(diff * diff)))


def grad_loss(pred: DepthMap, gt: DepthMap) -> float:
    """Mean Euclidean norm of the forward-difference gradient error.

    A pixel contributes when it and both its forward neighbors (right and
    down) are valid in both maps; the value is the norm of the (gx, gy)
    difference between predicted and ground-truth gradients.
    """
    _check_shapes(pred, gt)
    both = pred.valid & gt.valid
    ok = both[:-1, :-1] & both[:-1, 1:] & both[1:, :-1]
    if not ok.any():
        raise ValueError("no jointly valid gradient pixels")

    def fwd(v):
        gx = v[:-1, 1:] - v[:-1, :-1]
        gy = v[1:, :-1] - v[:-1, :-1]
        return gx, gy

    gxp, gyp = fwd(pred.values)
    gxg, gyg = fwd(gt.values)
    err = np.hypot(gxp - gxg, gyp - gyg)
    return float(np.mean(err[ok]))


def _gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    half = (window - 1) / 2.0
    x = np.arange(window) - half
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _windowed_mean(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    out = correlate1d(img, kernel, axis=0, mode="reflect")
    return correlate1d(out, kernel, axis=1, mode="reflect")


def ssim(pred: DepthMap, gt: DepthMap, params: SsimParams | None = None) -> float:
    """Mean structural similarity with Gaussian-weighted windows.

    Uses the standard constants C1 = (0.01 L)^2 and C2 = (0.03 L)^2 with
    L = dynamic_range. Values are compared as-is (holes contribute their
    stored value, 0 by convention); the result lies in [-1, 1].
    """
    params = params or SsimParams()
    _check_shapes(pred, gt)
    if params.window > min(pred.values.shape):
        raise ValueError("window larger than image")

    x = pred.values
    y = gt.values
    k = _gaussian_kernel(params.window, params.sigma)
    mu_x = _windowed_mean(x, k)
    mu_y = _windowed_mean(y, k)
    var_x = _windowed_mean(x * x, k) - mu_x * mu_x
    var_y = _windowed_mean(y * y, k) - mu_y * mu_y
    cov = _windowed_mean(x * y, k) - mu_x * mu_y

    c1 = (0.01 * params.dynamic_range) ** 2
    c2 = (0.03 * params.dynamic_range) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def combined_loss(
    pred: DepthMap,
    gt: DepthMap,
    weights: LossWeights | None = None,
    ssim_params: SsimParams | None = None,
) -> float:
    """w_depth * depth_l2 + w_grad * grad_loss + w_ssim * (1 - ssim) / 2."""
    weights = weights or LossWeights()
    return (
        weights.w_depth * depth_l2(pred, gt)
        + weights.w_grad * grad_loss(pred, gt)
        + weights.w_ssim * (1.0 - ssim(pred, gt, ssim_params)) / 2.0
    )


def threshold_accuracy(pred: DepthMap, gt: DepthMap, threshold: float = 1.25) -> float:
    """Fraction of jointly valid pixels with max(pred/gt, gt/pred) < threshold."""
    if threshold <= 1:
        raise ValueError("threshold must exceed 1")
    _check_shapes(pred, gt)
    both = pred.valid & gt.valid
    if not both.any():
        raise ValueError("no jointly valid pixels")
    p = pred.values[both]
    g = gt.values[both]
    ratio = np.maximum(p / g, g / p)
    return float(np.mean(ratio < threshold))
