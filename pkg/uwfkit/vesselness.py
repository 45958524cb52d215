"""
Classical vessel-map extraction.

Multi-scale Frangi vesselness on Hessian eigenvalues, followed by an
Otsu-seeded hysteresis threshold that yields the binary vessel map used by
the dice gate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import ndimage as ndi

from uwfkit.errors import DegenerateHistogram, EmptyScaleList
from uwfkit.filters import gaussian, hessian, symmetric_eigenvalues
from uwfkit.raster import BinaryMask, Raster

logger = logging.getLogger(__name__)

# bright = bright vessels on dark background (FA), dark = dark on bright (RI)
Polarity = Literal["bright", "dark"]

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class VesselParams:
    scales: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)
    beta: float = 0.5
    c: float | None = None  # None: half the max Hessian norm of the image
    polarity: Polarity = "bright"

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        if not self.scales:
            raise EmptyScaleList("at least one Gaussian scale is required")
        if any(s <= 0 for s in self.scales):
            raise ValueError(f"scales must be strictly positive, got {self.scales}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.c is not None and self.c <= 0:
            raise ValueError(f"c must be > 0, got {self.c}")
        if self.polarity not in ("bright", "dark"):
            raise ValueError(f"unknown polarity {self.polarity!r}")


def frangi_vesselness(img: Raster, p: VesselParams) -> Raster:
    """Max-over-scales Frangi response, rescaled to [0, 1]."""
    if not p.scales:
        raise EmptyScaleList("at least one Gaussian scale is required")
    if img.channels != 1:
        raise ValueError("frangi_vesselness expects a single-channel raster")

    eigen: list[tuple[np.ndarray, np.ndarray]] = []
    for sigma in p.scales:
        lxx, lxy, lyy = hessian(gaussian(img.data, sigma))
        norm = sigma**2
        eigen.append(symmetric_eigenvalues(lxx * norm, lxy * norm, lyy * norm))

    c = p.c
    if c is None:
        c = 0.5 * max(float(np.sqrt(l1**2 + l2**2).max()) for l1, l2 in eigen)
    response = np.zeros(img.shape)
    if c <= 0:
        return Raster(response)

    for l1, l2 in eigen:
        wrong_sign = l2 > 0 if p.polarity == "bright" else l2 < 0
        rb2 = np.divide(l1**2, l2**2, out=np.zeros_like(l1), where=l2 != 0)
        s2 = l1**2 + l2**2
        v = np.exp(-rb2 / (2.0 * p.beta**2)) * (1.0 - np.exp(-s2 / (2.0 * c**2)))
        v[wrong_sign | (l2 == 0)] = 0.0
        np.maximum(response, v, out=response)

    peak = response.max()
    if peak > 0:
        response /= peak
    return Raster(response)


def otsu_threshold(values: np.ndarray, nbins: int = 256) -> float:
    """
    Otsu threshold over a fixed [0, 1] histogram.

    When the between-class variance is maximal over a run of splits (e.g. two
    separated modes), the threshold is the midpoint of that run.
    """
    counts, edges = np.histogram(np.clip(values, 0.0, 1.0), bins=nbins, range=(0.0, 1.0))
    p = counts / counts.sum()
    centers = (edges[:-1] + edges[1:]) / 2.0

    omega = np.cumsum(p)[:-1]
    mu = np.cumsum(p * centers)[:-1]
    mu_t = float(np.sum(p * centers))
    denom = omega * (1.0 - omega)
    between = np.divide(
        (mu_t * omega - mu) ** 2, denom, out=np.zeros_like(omega), where=denom > 0,
    )
    best = between.max()
    splits = np.flatnonzero(np.isclose(between, best, rtol=1e-9, atol=0.0))
    return float((edges[splits[0] + 1] + edges[splits[-1] + 1]) / 2.0)


def binarize_mask(v: Raster, valid: BinaryMask, high: float | None = None) -> BinaryMask:
    """
    Hysteresis threshold inside `valid`.

    high = Otsu over valid pixels (or the injected value), low = high / 2;
    weak pixels survive only when 8-connected to a strong one.
    """
    if valid.count() == 0:
        raise DegenerateHistogram("validity mask is empty")
    if v.shape != valid.shape:
        raise ValueError(f"response {v.shape} and mask {valid.shape} differ in size")

    data = v.data
    if high is None:
        values = data[valid.bits]
        if values.max() == values.min():
            return BinaryMask(np.zeros(valid.shape, dtype=bool))
        high = otsu_threshold(values)
    low = 0.5 * high

    strong = (data >= high) & valid.bits
    weak = (data >= low) & valid.bits
    labels, n = ndi.label(weak, structure=EIGHT_CONNECTED)
    seeds = np.unique(labels[strong])
    seeds = seeds[seeds > 0]
    logger.debug("binarize: high=%.4f, %d components, %d seeded", high, n, seeds.size)
    return BinaryMask(np.isin(labels, seeds))
