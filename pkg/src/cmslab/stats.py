"""Distribution distances on weighted samples."""
from __future__ import annotations

import numpy as np


def _ecdf(values, weights, at):
    order = np.argsort(values, kind="stable")
    v = values[order]
    c = np.cumsum(weights[order])
    c /= c[-1]
    k = np.searchsorted(v, at, side="right")
    return np.where(k > 0, c[np.maximum(k - 1, 0)], 0.0)


def ks_distance(a, b, wa=None, wb=None) -> float:
    """Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b| for 1-D weighted samples."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    wa = np.ones_like(a) if wa is None else np.asarray(wa, dtype=np.float64)
    wb = np.ones_like(b) if wb is None else np.asarray(wb, dtype=np.float64)
    grid = np.union1d(a, b)
    return float(np.max(np.abs(_ecdf(a, wa, grid) - _ecdf(b, wb, grid))))


def ks_to_cdf(a, cdf, wa=None) -> float:
    """One-sample KS distance between a weighted sample and a continuous CDF."""
    a = np.asarray(a, dtype=np.float64).ravel()
    wa = np.ones_like(a) if wa is None else np.asarray(wa, dtype=np.float64)
    order = np.argsort(a, kind="stable")
    v = a[order]
    c = np.cumsum(wa[order])
    c /= c[-1]
    prev = np.concatenate(([0.0], c[:-1]))
    F = cdf(v)
    return float(max(np.max(np.abs(c - F)), np.max(np.abs(prev - F))))


def sliced_ks(A, B, wa=None, wb=None) -> tuple[float, list[float]]:
    """Max over coordinates of the two-sample KS distance, plus the per-coordinate values."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    A = A.reshape(len(A), -1)
    B = B.reshape(len(B), -1)
    per = [ks_distance(A[:, j], B[:, j], wa, wb) for j in range(A.shape[1])]
    return max(per), per


def weighted_mean_se(values, weights=None) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    if weights is None:
        n = len(values)
        return float(values.mean()), float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    m = float(np.dot(w, values))
    ess = 1.0 / float(np.dot(w, w))
    var = float(np.dot(w, (values - m) ** 2))
    return m, float(np.sqrt(var / ess)) if ess > 1 else 0.0
