"""Reference image quality metrics: PSNR, SSIM, and a weighted Laplacian-pyramid distance."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .frame import Frame

# Pinned SSIM variant: 11-tap Gaussian window, sigma 1.5, K1/K2 from the
# original definition. "SSIM" is a family; tests depend on this one member.
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

# Laplacian pyramid: 5 levels of differences, level i weighted 2**(i-1).
LAP_LEVELS = 5
LAP_LEVEL_WEIGHTS = tuple(2 ** i for i in range(LAP_LEVELS))  # (1, 2, 4, 8, 16)
_LAP_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    lap_distance: float
    excluded_border: int


def _luma_pair(a: Frame, b: Frame, border: int = 0) -> tuple[np.ndarray, np.ndarray]:
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(f"size mismatch {a.width}x{a.height} vs {b.width}x{b.height}")
    ya = a.luma.astype(np.float64)
    yb = b.luma.astype(np.float64)
    if border:
        if 2 * border >= min(a.width, a.height):
            raise ValueError(f"border {border} leaves no pixels")
        ya = ya[border:-border, border:-border]
        yb = yb[border:-border, border:-border]
    return ya, yb


def psnr(a: Frame, b: Frame, border: int = 0) -> float:
    """Peak signal-to-noise ratio on luma in dB; +inf for identical inputs."""
    ya, yb = _luma_pair(a, b, border)
    mse = np.mean((ya - yb) ** 2)
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(255.0 / math.sqrt(mse))


def _gaussian_window(n: int, sigma: float) -> np.ndarray:
    half = (n - 1) / 2
    x = np.arange(n) - half
    w = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return w / w.sum()


def _window_mean(x: np.ndarray, win: np.ndarray) -> np.ndarray:
    m = (n := len(win)) // 2
    out = correlate1d(correlate1d(x, win, axis=0, mode="reflect"), win, axis=1, mode="reflect")
    return out[m:x.shape[0] - m, m:x.shape[1] - m]  # interior == 'valid' windows


def ssim(a: Frame, b: Frame, border: int = 0) -> float:
    """Mean local SSIM on luma over all fully-valid windows."""
    ya, yb = _luma_pair(a, b, border)
    if min(ya.shape) < SSIM_WINDOW:
        raise ValueError(f"frame smaller than the {SSIM_WINDOW}-tap SSIM window")
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * 255.0) ** 2
    c2 = (SSIM_K2 * 255.0) ** 2
    mu_a = _window_mean(ya, win)
    mu_b = _window_mean(yb, win)
    var_a = _window_mean(ya * ya, win) - mu_a ** 2
    var_b = _window_mean(yb * yb, win) - mu_b ** 2
    cov = _window_mean(ya * yb, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _blur(x: np.ndarray) -> np.ndarray:
    return correlate1d(correlate1d(x, _LAP_KERNEL, axis=0, mode="reflect"),
                       _LAP_KERNEL, axis=1, mode="reflect")


def _down(x: np.ndarray) -> np.ndarray:
    return _blur(x)[::2, ::2]


def _up(x: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    z = np.zeros(shape)
    z[::2, ::2] = x
    return correlate1d(correlate1d(z, 2 * _LAP_KERNEL, axis=0, mode="reflect"),
                       2 * _LAP_KERNEL, axis=1, mode="reflect")


def laplacian_pyramid(y: np.ndarray, levels: int = LAP_LEVELS) -> list[np.ndarray]:
    """Difference levels L1..Ln, finest first (the lowpass residual is dropped)."""
    out = []
    g = y.astype(np.float64)
    for _ in range(levels):
        down = _down(g)
        out.append(g - _up(down, g.shape))
        g = down
    return out


def lap_distance(a: Frame, b: Frame, per_level: bool = False):
    """Sum over 5 pyramid levels of 2**(i-1) * mean|L_i(a) - L_i(b)|.

    The per-level L1 norm is normalized by pixel count so values compare
    across resolutions.
    """
    ya, yb = _luma_pair(a, b)
    if a.width % 8 or a.height % 8:
        raise ValueError("lap_distance needs dimensions divisible by 8")
    la = laplacian_pyramid(ya)
    lb = laplacian_pyramid(yb)
    levels = [float(np.mean(np.abs(pa - pb))) for pa, pb in zip(la, lb)]
    total = float(sum(w * v for w, v in zip(LAP_LEVEL_WEIGHTS, levels)))
    if per_level:
        return total, levels
    return total


def report(a: Frame, b: Frame, border: int = 0) -> MetricReport:
    return MetricReport(psnr(a, b, border), ssim(a, b, border), lap_distance(a, b), border)
