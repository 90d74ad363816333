"""Hausdorff distance between finite point clouds.

Two paths are provided: a brute-force O(|a||b|) scan and a KD-tree
accelerated one.  Both evaluate the final distances with the same
coordinate-by-coordinate formula, so they agree bit for bit.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

# candidates fetched per query before exact re-evaluation (guards near ties)
TREE_CANDIDATES = 4
_BRUTE_CHUNK = 2048


def _check(cloud) -> np.ndarray:
    c = np.asarray(cloud, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    if len(c) == 0:
        raise ValueError("point cloud must be non-empty")
    return c


def _dist2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared distances with broadcasting, summed coordinate by coordinate."""
    out = (a[..., 0] - b[..., 0]) ** 2
    for k in range(1, a.shape[-1]):
        out = out + (a[..., k] - b[..., k]) ** 2
    return out


def nearest_distances(a, b, method: str = "tree") -> np.ndarray:
    """Distance from every point of ``a`` to the cloud ``b``."""
    a, b = _check(a), _check(b)
    if method == "brute":
        out = np.empty(len(a))
        for i in range(0, len(a), _BRUTE_CHUNK):
            blk = a[i:i + _BRUTE_CHUNK]
            out[i:i + len(blk)] = _dist2(blk[:, None, :], b[None, :, :]).min(axis=1)
        return np.sqrt(out)
    if method != "tree":
        raise ValueError(f"unknown method {method!r}")
    k = min(TREE_CANDIDATES, len(b))
    _, idx = cKDTree(b).query(a, k=k)
    idx = idx.reshape(len(a), k)
    return np.sqrt(_dist2(a[:, None, :], b[idx]).min(axis=1))


def directed_hausdorff(a, b, method: str = "tree") -> float:
    """sup over p in a of dist(p, b)."""
    return float(nearest_distances(a, b, method).max())


def hausdorff_distance(a, b, method: str = "tree") -> float:
    return max(directed_hausdorff(a, b, method), directed_hausdorff(b, a, method))


def cloud_spacing(a) -> float:
    """Largest distance from a cloud point to its nearest other point."""
    a = _check(a)
    if len(a) < 2:
        return 0.0
    d, _ = cKDTree(a).query(a, k=2)
    return float(d[:, 1].max())
