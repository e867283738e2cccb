"""Seeded K-means / K-medians with restarts, plus the distortion-ratio cluster
count estimate (the f(K) evaluation of Pham, Dimov and Nguyen).

Hand-rolled rather than pulled from sklearn because determinism, restart
tie-breaking and the exact distortion definition are contract-bearing here,
and the point counts are tiny.
"""

from __future__ import annotations

import numpy as np

_MAX_ITER = 100


def zscore(points: np.ndarray) -> np.ndarray:
    """Column-wise z normalization; constant columns become zeros."""
    pts = np.asarray(points, dtype=float)
    mean = pts.mean(axis=0)
    std = pts.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return (pts - mean) / std


def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel clusters by first appearance in data order."""
    remap: dict[int, int] = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        if lab not in remap:
            remap[lab] = len(remap)
        out[i] = remap[lab]
    return out


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator,
           manhattan: bool) -> tuple[np.ndarray, np.ndarray, float]:
    n = len(points)
    centers = points[rng.choice(n, size=k, replace=False)].copy()
    labels: np.ndarray | None = None
    for _ in range(_MAX_ITER):
        diff = points[:, None, :] - centers[None, :, :]
        dist = np.abs(diff).sum(axis=2) if manhattan else (diff ** 2).sum(axis=2)
        new_labels = dist.argmin(axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = points[labels == j]
            if len(members) == 0:
                continue  # empty cluster keeps its previous center
            centers[j] = np.median(members, axis=0) if manhattan else members.mean(axis=0)
    assert labels is not None
    diff = points[np.arange(n), :] - centers[labels]
    inertia = float(np.abs(diff).sum()) if manhattan else float((diff ** 2).sum())
    return labels, centers, inertia


def _cluster(points: np.ndarray, k: int, rng: np.random.Generator,
             restarts: int, manhattan: bool) -> tuple[np.ndarray, np.ndarray, float]:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = len(pts)
    if k >= n:
        labels = _canonical_labels(np.arange(n))
        return labels, pts.copy(), 0.0
    best: tuple[float, tuple, np.ndarray, np.ndarray] | None = None
    for _ in range(restarts):
        labels, centers, inertia = _lloyd(pts, k, rng, manhattan)
        labels = _canonical_labels(labels)
        key = (inertia, tuple(labels))  # inertia ties break lexicographically
        if best is None or key < best[:2]:
            best = (inertia, tuple(labels), labels, centers)
    assert best is not None
    return best[2], best[3], best[0]


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
           restarts: int = 10) -> tuple[np.ndarray, np.ndarray, float]:
    """Best-of-`restarts` Lloyd's K-means. Returns (labels, centers, inertia)."""
    return _cluster(points, k, rng, restarts, manhattan=False)


def kmedians(points: np.ndarray, k: int, rng: np.random.Generator,
             restarts: int = 10) -> tuple[np.ndarray, np.ndarray, float]:
    """K-medians: Manhattan assignment, per-dimension median centers."""
    return _cluster(points, k, rng, restarts, manhattan=True)


def medoid_index(points: np.ndarray, member_indices: list[int]) -> int:
    """Member closest (L1) to the members' median vector; ties pick the lowest index."""
    pts = np.asarray(points, dtype=float)
    members = pts[member_indices]
    center = np.median(members, axis=0)
    dists = np.abs(members - center).sum(axis=1)
    return member_indices[int(dists.argmin())]


def estimate_k(points: np.ndarray, k_max: int, rng: np.random.Generator,
               manhattan: bool = False, threshold: float = 0.85) -> int:
    """Distortion-ratio estimate of the cluster count.

    f(K) compares the clustering distortion at K against the weighted
    distortion at K-1; the K minimizing f wins, and anything not dipping
    below the threshold means no cluster structure (K=1).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n, dims = pts.shape
    upper = min(k_max, n)
    if upper <= 1:
        return 1
    distortions = [0.0] * (upper + 1)
    for k in range(1, upper + 1):
        _, _, inertia = _cluster(pts, k, rng, restarts=10, manhattan=manhattan)
        distortions[k] = inertia
    alpha = 1.0 - 3.0 / (4.0 * max(dims, 1))
    best_k, best_f = 1, 1.0
    for k in range(2, upper + 1):
        if k > 2:
            alpha = alpha + (1.0 - alpha) / 6.0
        if distortions[k - 1] == 0.0:
            f_k = 1.0
        else:
            f_k = distortions[k] / (alpha * distortions[k - 1])
        if f_k < best_f:
            best_k, best_f = k, f_k
    return best_k if best_f < threshold else 1
