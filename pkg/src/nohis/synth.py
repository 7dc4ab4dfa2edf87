"""Seeded synthetic data: Gaussian-mixture vectors and a textured-shape image corpus."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage


@dataclass
class GaussianMixture:
    centers: np.ndarray                       # (c, n)
    spread: float
    rotations: Optional[np.ndarray] = None    # (c, n, n) when anisotropic
    scales: Optional[np.ndarray] = None       # (n,) per-axis std before rotation

    @classmethod
    def random(cls, dim: int, components: int, spread: float = 1.0, box: float = 10.0,
               anisotropy: Optional[float] = None, seed: int = 0) -> "GaussianMixture":
        """Centers uniform in [-box, box]^dim.

        ``anisotropy`` in (0, 1] gives every component a randomly rotated
        covariance whose axis standard deviations decay geometrically by
        that factor.
        """
        rng = np.random.default_rng(seed)
        centers = rng.uniform(-box, box, size=(components, dim))
        if anisotropy is None:
            return cls(centers, spread)
        rots = np.stack([np.linalg.qr(rng.normal(size=(dim, dim)))[0]
                         for _ in range(components)])
        scales = spread * anisotropy ** np.arange(dim)
        return cls(centers, spread, rots, scales)

    def sample(self, m: int, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        """Draw ``m`` points; returns (points, component labels)."""
        rng = np.random.default_rng(seed)
        c, n = self.centers.shape
        labels = rng.integers(0, c, size=m)
        z = rng.normal(size=(m, n))
        if self.rotations is None:
            return self.centers[labels] + self.spread * z, labels
        z *= self.scales
        out = np.empty((m, n))
        for j in range(c):
            sel = labels == j
            out[sel] = z[sel] @ self.rotations[j].T + self.centers[j]
        return out, labels


def mixture_dataset(m: int, dim: int = 12, components: int = 50, queries: int = 0,
                    spread: float = 1.0, seed: int = 0, anisotropy: Optional[float] = None):
    """Data and held-out queries from one mixture (separate sampling streams)."""
    gm = GaussianMixture.random(dim, components, spread, anisotropy=anisotropy, seed=seed)
    data, labels = gm.sample(m, seed=seed + 1)
    q, _ = gm.sample(queries, seed=seed + 2) if queries else (np.empty((0, dim)), None)
    return data, q, labels


# ---------------------------------------------------------------------------
# images

def _periodic_texture(xx, yy, period: float, theta: float, kind: int) -> np.ndarray:
    """Binary stripes (kind 0) or checkerboard (kind 1) at angle ``theta``."""
    u = xx * np.cos(theta) + yy * np.sin(theta)
    v = -xx * np.sin(theta) + yy * np.cos(theta)
    a = np.floor(u / period) % 2
    if kind == 0:
        return a
    return (a != np.floor(v / period) % 2).astype(np.float64)


def textured_shapes_image(seed: int, size: int = 256, blur: float = 0.7) -> np.ndarray:
    """Grayscale image in [0, 1]: a flat background with 3-5 random polygons.

    Each polygon is filled with its own stripe or checker texture (random
    period, angle and two grey levels), so corners repeat within a shape.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.full((size, size), rng.uniform(0.1, 0.9))
    for _ in range(rng.integers(3, 6)):
        cx, cy = rng.uniform(0.2 * size, 0.8 * size, size=2)
        k = rng.integers(3, 6)
        ang = np.sort(rng.uniform(0, 2 * np.pi, size=k))
        rad = rng.uniform(0.1 * size, 0.3 * size, size=k)
        mask = _polygon_mask(xx, yy, cx + rad * np.cos(ang), cy + rad * np.sin(ang))
        period = rng.uniform(5, 14)
        theta = rng.uniform(0, np.pi / 2)
        kind = int(rng.integers(0, 2))
        lo, hi = np.sort(rng.uniform(0, 1, size=2))
        tex = _periodic_texture(xx - cx, yy - cy, period, theta, kind)
        img[mask] = lo + (hi - lo) * tex[mask]
    if blur > 0:
        img = ndimage.gaussian_filter(img, blur)
    return np.clip(img, 0.0, 1.0)


def _polygon_mask(xx, yy, px, py) -> np.ndarray:
    # even-odd rule
    inside = np.zeros(xx.shape, dtype=bool)
    n = len(px)
    for i in range(n):
        x0, y0, x1, y1 = px[i], py[i], px[(i + 1) % n], py[(i + 1) % n]
        crosses = (y0 > yy) != (y1 > yy)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x0 + (yy - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (xx < xint)
    return inside


def write_image_corpus(directory, count: int = 50, seed: int = 0, size: int = 256) -> List[str]:
    """Write ``count`` 8-bit PGM images named img_XXXX.pgm; returns their paths."""
    import os
    from .descriptors import GrayImage, save_pgm

    os.makedirs(directory, exist_ok=True)
    paths = []
    for i in range(count):
        arr = textured_shapes_image(seed * 100003 + i, size)
        path = os.path.join(directory, f"img_{i:04d}.pgm")
        save_pgm(path, GrayImage.from_array(arr))
        paths.append(path)
    return paths
