"""Embedding quality and detection metrics.

The central diagnostic is the empirical isometry constant: how far pairwise
distance ratios between a reference cloud and its projection spread around
their mean. Mean normalization makes the statistic blind to any global
rescaling a method applies, so unitary maps score exactly zero.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .exceptions import (
    DegenerateCloudError,
    DegeneratePairsError,
    DimensionError,
    InsufficientDataError,
)
from .operator import RfOperator, apply_batch

__all__ = [
    "IsometryReport",
    "DetectionScore",
    "isometry_constant",
    "embedding_constant",
    "inner_product_deviation",
    "procrustes_distance",
    "f1_score",
    "pairwise_distances",
    "MAX_EXHAUSTIVE_SAMPLES",
]

# Exhaustive pair enumeration is quadratic; past this, callers must subsample.
MAX_EXHAUSTIVE_SAMPLES = 20_000


@dataclasses.dataclass(frozen=True)
class IsometryReport:
    delta: float
    delta_lower: float
    delta_upper: float
    q_min: float
    q_max: float
    q_mean: float
    pair_count: int


@dataclasses.dataclass(frozen=True)
class DetectionScore:
    precision: float
    recall: float
    f1: float
    true_positives: int
    false_positives: int
    false_negatives: int


def _column_norm_sq(D: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(D):
        return np.sum(D.real * D.real + D.imag * D.imag, axis=0)
    return np.sum(D * D, axis=0)


def pairwise_distances(X: np.ndarray, pairs: np.ndarray | None = None) -> np.ndarray:
    """Euclidean distances between sample columns.

    Without `pairs`, returns all K*(K-1)/2 distances in (i, j), i < j order.
    With `pairs` (P x 2 int array), returns one distance per row. Differences
    are formed explicitly rather than via a Gram expansion so nearby columns
    keep full relative accuracy.
    """
    X = np.asarray(X)
    K = X.shape[1]
    if pairs is not None:
        out = np.empty(len(pairs))
        for start in range(0, len(pairs), 4096):
            sel = pairs[start : start + 4096]
            diff = X[:, sel[:, 0]] - X[:, sel[:, 1]]
            out[start : start + 4096] = np.sqrt(_column_norm_sq(diff))
        return out
    out = np.empty(K * (K - 1) // 2)
    pos = 0
    for i in range(K - 1):
        diff = X[:, i + 1 :] - X[:, i : i + 1]
        cnt = K - 1 - i
        out[pos : pos + cnt] = np.sqrt(_column_norm_sq(diff))
        pos += cnt
    return out


def _condensed_to_pair(K: int, flat_idx: int) -> tuple[int, int]:
    i = 0
    offset = 0
    while flat_idx >= offset + (K - 1 - i):
        offset += K - 1 - i
        i += 1
    return i, i + 1 + (flat_idx - offset)


def _sample_pairs(K: int, max_pairs: int, seed: int) -> np.ndarray:
    """Uniform sample of distinct (i, j) pairs, i < j, without replacement."""
    total = K * (K - 1) // 2
    take = min(max_pairs, total)
    rng = np.random.default_rng(seed)
    if total <= max(4 * take, 1_000_000):
        flat = rng.permutation(total)[:take]
        flat.sort()
        block_ends = np.cumsum(np.arange(K - 1, 0, -1))
        i = np.searchsorted(block_ends, flat, side="right")
        block_starts = np.concatenate([[0], block_ends[:-1]])
        j = i + 1 + (flat - block_starts[i])
        return np.stack([i, j], axis=1).astype(np.int64)
    # population far larger than the sample: rejection is cheaper than a permutation
    seen = set()
    rows = []
    while len(rows) < take:
        i = int(rng.integers(0, K))
        j = int(rng.integers(0, K))
        if i == j:
            continue
        if i > j:
            i, j = j, i
        if (i, j) in seen:
            continue
        seen.add((i, j))
        rows.append((i, j))
    return np.array(rows, dtype=np.int64)


def isometry_constant(
    original: np.ndarray,
    reduced: np.ndarray,
    max_pairs: int | None = None,
    subsample_seed: int = 0,
) -> IsometryReport:
    """Spread of reduced-to-original distance ratios around their mean.

    For every retained pair, q = d_reduced / d_original. With
    q_mean = mean(q), the report carries
    delta_lower = 1 - q_min / q_mean, delta_upper = q_max / q_mean - 1,
    and delta = max of the two. Zero distance in the original cloud makes a
    ratio undefined and raises; use distinct columns.
    """
    X = np.asarray(original)
    Y = np.asarray(reduced)
    if X.ndim != 2 or Y.ndim != 2:
        raise DimensionError("expected 2-D sample matrices (columns are samples)")
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(
            f"sample counts differ: original has {X.shape[1]}, reduced has {Y.shape[1]}"
        )
    K = X.shape[1]
    if K < 2:
        raise InsufficientDataError("isometry constant needs at least 2 samples")
    if max_pairs is None:
        if K > MAX_EXHAUSTIVE_SAMPLES:
            raise InsufficientDataError(
                f"K={K} exceeds the exhaustive-pair cap ({MAX_EXHAUSTIVE_SAMPLES}); "
                "pass max_pairs to subsample"
            )
        pairs = None
    else:
        if max_pairs < 1:
            raise ValueError("max_pairs must be positive")
        pairs = _sample_pairs(K, max_pairs, subsample_seed)

    d_orig = pairwise_distances(X, pairs)
    d_red = pairwise_distances(Y, pairs)

    zero = np.nonzero(d_orig == 0.0)[0]
    if len(zero):
        if pairs is not None:
            bad = [tuple(pairs[z]) for z in zero]
        else:
            bad = [_condensed_to_pair(K, int(z)) for z in zero]
        raise DegeneratePairsError(bad)

    q = d_red / d_orig
    q_min = float(np.min(q))
    q_max = float(np.max(q))
    q_mean = float(np.mean(q))
    delta_lower = 1.0 - q_min / q_mean
    delta_upper = q_max / q_mean - 1.0
    return IsometryReport(
        delta=max(delta_lower, delta_upper),
        delta_lower=delta_lower,
        delta_upper=delta_upper,
        q_min=q_min,
        q_max=q_max,
        q_mean=q_mean,
        pair_count=len(q),
    )


def _dedupe_columns(X: np.ndarray) -> np.ndarray:
    seen = set()
    keep = []
    for j in range(X.shape[1]):
        key = X[:, j].tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(j)
    return X[:, keep]


def embedding_constant(
    original: np.ndarray, reduced: np.ndarray, correction: float = 1.0
) -> float:
    """Worst-case squared-distance distortion, anchored at ratio 1.

    Returns max |correction * d_reduced^2 / d_original^2 - 1| over all pairs
    of sample columns. This is the constant appearing in the stable-embedding
    inequality (1 - delta) d^2 <= d_reduced^2 <= (1 + delta) d^2, which is the
    quantity the inner-product bound needs. It differs from isometry_constant,
    which normalizes unsquared ratios by their mean for plotting.
    """
    d_orig = pairwise_distances(np.asarray(original))
    d_red = pairwise_distances(np.asarray(reduced))
    zero = np.nonzero(d_orig == 0.0)[0]
    if len(zero):
        K = np.asarray(original).shape[1]
        raise DegeneratePairsError([_condensed_to_pair(K, int(z)) for z in zero])
    ratios_sq = correction * (d_red / d_orig) ** 2
    return float(np.max(np.abs(ratios_sq - 1.0)))


def inner_product_deviation(
    op: RfOperator, pairs: list[tuple[np.ndarray, np.ndarray]]
) -> list[tuple[float, float]]:
    """Observed inner-product error of the projection against its bound.

    For each (x, y), observed = |Re<Px, Py> - Re<x, y>| after correcting the
    projection's global scale, and bound = (delta/2) * (||x||^2 + ||y||^2)
    with delta the embedding constant of the pooled set {+-x_i, +-y_i} and
    its projection. Because the pooled set contains x_i +- y_i differences as
    pairwise distances, the bound follows from the parallelogram identity and
    holds for every pair. Returns [(observed, bound), ...].
    """
    if not pairs:
        raise InsufficientDataError("need at least one (x, y) pair")
    xs = np.stack([np.asarray(x) for x, _ in pairs], axis=1)
    ys = np.stack([np.asarray(y) for _, y in pairs], axis=1)
    if xs.shape[0] != op.n or ys.shape[0] != op.n:
        raise DimensionError("pair vectors must have length n")

    # undo the operator's global scale so m = n gives zero deviation exactly
    correction = (op.n / op.m) / op.scale**2
    pooled = _dedupe_columns(np.concatenate([xs, -xs, ys, -ys], axis=1))
    delta = embedding_constant(pooled, apply_batch(op, pooled), correction)

    zx = apply_batch(op, xs)
    zy = apply_batch(op, ys)
    out = []
    for j in range(len(pairs)):
        observed = abs(
            correction * np.real(np.vdot(zx[:, j], zy[:, j]))
            - np.real(np.vdot(xs[:, j], ys[:, j]))
        )
        bound = 0.5 * delta * (
            float(np.real(np.vdot(xs[:, j], xs[:, j])))
            + float(np.real(np.vdot(ys[:, j], ys[:, j])))
        )
        out.append((float(observed), float(bound)))
    return out


def procrustes_distance(L: np.ndarray, L_red: np.ndarray, center: bool = True) -> float:
    """Normalized residual after the best scaled-orthogonal alignment.

    Solves min over scalar c and orthogonal G (reflections allowed) of
    ||L - c G L_red||_F^2 via the SVD of L L_red^T, after optionally
    centering both clouds, and divides by ||L||_F^2. Result is in [0, 1]:
    0 means a perfect similarity transform exists.
    """
    A = np.asarray(L, dtype=float)
    B = np.asarray(L_red, dtype=float)
    if A.ndim != 2 or B.ndim != 2:
        raise DimensionError("expected 2-D embeddings (rows are dimensions)")
    if A.shape != B.shape:
        raise DimensionError(f"embedding shapes differ: {A.shape} vs {B.shape}")
    d, K = A.shape
    if K < d:
        raise InsufficientDataError(f"need at least as many points as dimensions ({K} < {d})")
    if center:
        A = A - A.mean(axis=1, keepdims=True)
        B = B - B.mean(axis=1, keepdims=True)
    norm_a = np.linalg.norm(A)
    norm_b = np.linalg.norm(B)
    if norm_a == 0.0 or norm_b == 0.0:
        raise DegenerateCloudError("point cloud collapses to a single point")
    trace_sigma = np.linalg.svd(A @ B.T, compute_uv=False).sum()
    value = 1.0 - (trace_sigma / (norm_a * norm_b)) ** 2
    return float(min(max(value, 0.0), 1.0))


def f1_score(detected, truth, tol: int = 1) -> DetectionScore:
    """Greedy one-to-one event matching within +-tol frames.

    Detections are visited in time order; each grabs the nearest unmatched
    truth event within tolerance (ties break toward the earlier truth event).
    """
    det = np.asarray(detected, dtype=np.int64)
    tru = np.asarray(truth, dtype=np.int64)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    if np.any(np.diff(det) < 0) or np.any(np.diff(tru) < 0):
        raise ValueError("event lists must be sorted ascending")

    matched = np.zeros(len(tru), dtype=bool)
    tp = 0
    for d in det:
        lo = np.searchsorted(tru, d - tol, side="left")
        hi = np.searchsorted(tru, d + tol, side="right")
        best = -1
        best_gap = tol + 1
        for t_idx in range(lo, hi):
            if matched[t_idx]:
                continue
            gap = abs(int(tru[t_idx]) - int(d))
            if gap < best_gap:
                best_gap = gap
                best = t_idx
        if best >= 0:
            matched[best] = True
            tp += 1
    fp = len(det) - tp
    fn = len(tru) - tp
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if tp else 0.0
    return DetectionScore(
        precision=precision,
        recall=recall,
        f1=f1,
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
    )
