"""Finite-difference kernels shared by the vesselness filter and the feature detector."""

from __future__ import annotations

import numpy as np
from scipy import ndimage as ndi


def gaussian(arr: np.ndarray, sigma: float) -> np.ndarray:
    return ndi.gaussian_filter(np.asarray(arr, dtype=np.float64), sigma, mode="nearest")


def gradient(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference (d/dx, d/dy)."""
    gy, gx = np.gradient(arr)
    return gx, gy


def hessian(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Second-order central differences (Lxx, Lxy, Lyy) with replicated borders."""
    p = np.pad(arr, 1, mode="edge")
    c = p[1:-1, 1:-1]
    lxx = p[1:-1, 2:] - 2.0 * c + p[1:-1, :-2]
    lyy = p[2:, 1:-1] - 2.0 * c + p[:-2, 1:-1]
    lxy = (p[2:, 2:] - p[2:, :-2] - p[:-2, 2:] + p[:-2, :-2]) / 4.0
    return lxx, lxy, lyy


def symmetric_eigenvalues(a: np.ndarray, b: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of [[a, b], [b, d]] ordered so that |l1| <= |l2|."""
    half_trace = (a + d) / 2.0
    root = np.sqrt(((a - d) / 2.0) ** 2 + b**2)
    mu1 = half_trace + root
    mu2 = half_trace - root
    swap = np.abs(mu1) > np.abs(mu2)
    l1 = np.where(swap, mu2, mu1)
    l2 = np.where(swap, mu1, mu2)
    return l1, l2
