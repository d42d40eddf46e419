"""Recovering per-template activity and labels from projected measurements.

The cheap estimator uses the projection's near-isometry: the inner product
of a measurement column with the projected template, over the template's
squared norm. The exact maximum-likelihood route stacks real and imaginary
parts (real noise through a complex map has nonzero pseudo-covariance, so
the complex Gaussian shortcut is not available) and whitens with the
pseudo-inverse of A A^T.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .exceptions import (
    DegenerateProfileError,
    DimensionError,
    UnidentifiableProfileError,
)
from .operator import RfOperator, apply_batch, dense_matrix

__all__ = [
    "TemplateSet",
    "StackedRealOperator",
    "estimate_trace_original",
    "estimate_trace_compressed",
    "estimate_trace_whitened",
    "detect_events",
    "classify_compressed",
    "classify_whitened",
]

PINV_TOL = 1e-10
MAD_TO_SIGMA = 1.4826  # consistency factor for Gaussian noise


class TemplateSet:
    """Labeled template vectors (columns), with a per-operator projection cache."""

    def __init__(self, templates: np.ndarray, labels=None):
        T = np.asarray(templates)
        if T.ndim != 2:
            raise DimensionError("templates must be a 2-D matrix (columns are templates)")
        if T.shape[1] == 0:
            raise DimensionError("need at least one template")
        norms = np.sqrt(np.sum(np.abs(T) ** 2, axis=0))
        if np.any(norms == 0.0):
            raise DegenerateProfileError("template columns must have nonzero norm")
        if labels is None:
            labels = list(range(T.shape[1]))
        labels = list(labels)
        if len(labels) != T.shape[1]:
            raise DimensionError("one label per template column required")
        if len(set(labels)) != len(labels):
            raise ValueError("labels must be unique")
        self.templates = T
        self.labels = labels
        self._projection_cache: dict = {}

    @property
    def count(self) -> int:
        return self.templates.shape[1]

    def projected(self, op: RfOperator) -> np.ndarray:
        """Projected templates for `op`, computed once per operator."""
        key = (op.n, op.m, op.seed, op.scale)
        hit = self._projection_cache.get(key)
        if hit is None:
            hit = apply_batch(op, self.templates)
            self._projection_cache[key] = hit
        return hit


@dataclasses.dataclass(frozen=True)
class StackedRealOperator:
    """Real 2m x n stacking [Re Phi; Im Phi] with the whitening pseudo-inverse."""

    a: np.ndarray
    gram_pinv: np.ndarray
    pinv_tol: float

    @classmethod
    def from_operator(cls, op: RfOperator, pinv_tol: float = PINV_TOL) -> "StackedRealOperator":
        phi = dense_matrix(op)
        a = np.vstack([phi.real, phi.imag])
        gram = a @ a.T
        return cls(a=a, gram_pinv=np.linalg.pinv(gram, rcond=pinv_tol), pinv_tol=pinv_tol)

    def stack(self, Z: np.ndarray) -> np.ndarray:
        """Map complex measurement columns to stacked real columns."""
        Z = np.atleast_2d(np.asarray(Z))
        if Z.shape[0] != self.a.shape[0] // 2:
            raise DimensionError("measurement rows do not match the operator")
        return np.vstack([Z.real, Z.imag])


def _norm_sq(v: np.ndarray) -> float:
    return float(np.real(np.vdot(v, v)))


def estimate_trace_original(D: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Per-column activity of template a in the raw data: Re<d_t, a> / ||a||^2."""
    D = np.asarray(D)
    a = np.asarray(a)
    if D.ndim != 2 or a.ndim != 1 or D.shape[0] != a.shape[0]:
        raise DimensionError("D must be n x T and a length n")
    na = _norm_sq(a)
    if na == 0.0:
        raise DegenerateProfileError("profile has zero norm")
    return np.real(D.conj().T @ a) / na


def estimate_trace_compressed(Z: np.ndarray, a_c: np.ndarray) -> np.ndarray:
    """Same inner-product estimator, applied in the projected domain.

    Z holds projected data columns and a_c the projected template. Any global
    scale on the projection cancels between numerator and denominator.
    """
    Z = np.asarray(Z)
    a_c = np.asarray(a_c)
    if Z.ndim != 2 or a_c.ndim != 1 or Z.shape[0] != a_c.shape[0]:
        raise DimensionError("Z must be m x T and a_c length m")
    na = _norm_sq(a_c)
    if na == 0.0:
        raise DegenerateProfileError("projected profile has zero norm")
    return np.real(Z.conj().T @ a_c) / na


def estimate_trace_whitened(
    op: RfOperator,
    Z: np.ndarray,
    a: np.ndarray,
    stacked: StackedRealOperator | None = None,
) -> np.ndarray:
    """Exact whitened maximum-likelihood trace.

    mu_t = y_t^T (A A^T)^+ (A a) / (A a)^T (A A^T)^+ (A a) with A the stacked
    real operator and y_t the stacked measurement. The pseudo-inverse handles
    the rank deficiency that purely real frequency rows (index 0 and n/2) and
    conjugate row pairs introduce.
    """
    a = np.asarray(a)
    if a.ndim != 1 or a.shape[0] != op.n:
        raise DimensionError("profile a must have length n")
    if stacked is None:
        stacked = StackedRealOperator.from_operator(op)
    Y = stacked.stack(Z)
    aa = stacked.a @ a
    w = stacked.gram_pinv @ aa
    denom = float(aa @ w)
    if denom <= stacked.pinv_tol * max(float(aa @ aa), 1.0):
        raise UnidentifiableProfileError(
            "projected profile is in the null space of the whitened gram"
        )
    return (Y.T @ w) / denom


def detect_events(
    trace: np.ndarray, k_sigma: float = 3.0, refractory: int = 3
) -> list[int]:
    """Indices of local maxima above a robust threshold.

    Threshold is median + k_sigma * 1.4826 * MAD. Maxima closer than
    `refractory` frames to the last kept event merge into the earlier peak.
    A constant trace has no strict local maxima above its median, so it
    yields no events without any division by the (zero) MAD.
    """
    x = np.asarray(trace, dtype=float)
    if x.ndim != 1 or x.shape[0] < 2:
        raise DimensionError("trace must be 1-D with at least 2 frames")
    if k_sigma <= 0:
        raise ValueError("k_sigma must be positive")
    if refractory < 1:
        raise ValueError("refractory must be at least 1 frame")
    med = float(np.median(x))
    mad = float(np.median(np.abs(x - med)))
    threshold = med + k_sigma * MAD_TO_SIGMA * mad

    peaks = []
    T = x.shape[0]
    for i in range(T):
        if x[i] <= threshold:
            continue
        left_rising = i == 0 or x[i] > x[i - 1]
        right_falling = i == T - 1 or x[i] >= x[i + 1]
        if left_rising and right_falling:
            peaks.append(i)

    kept: list[int] = []
    for p in peaks:
        if kept and p - kept[-1] < refractory:
            continue  # merged into the earlier peak
        kept.append(p)
    return kept


def _squared_distances_to_templates(Z: np.ndarray, C: np.ndarray) -> np.ndarray:
    """dist[i, t] = ||Z[:, t] - C[:, i]||^2, formed by explicit differences."""
    P = C.shape[1]
    T = Z.shape[1]
    out = np.empty((P, T))
    for i in range(P):
        diff = Z - C[:, i : i + 1]
        out[i] = np.sum(diff.real**2 + diff.imag**2, axis=0)
    return out


def classify_compressed(z: np.ndarray, templates: TemplateSet, op: RfOperator):
    """Label of the projected template nearest to measurement z.

    Ties break to the lowest template index. Accepts a single column or an
    m x T matrix (returns a list of labels for the latter).
    """
    C = templates.projected(op)
    z = np.asarray(z)
    single = z.ndim == 1
    Z = z[:, None] if single else z
    if Z.shape[0] != op.m:
        raise DimensionError(f"measurement has {Z.shape[0]} rows, operator yields {op.m}")
    dist = _squared_distances_to_templates(Z.astype(complex), C)
    winners = np.argmin(dist, axis=0)  # argmin takes the first minimum: lowest index
    labels = [templates.labels[w] for w in winners]
    return labels[0] if single else labels


def classify_whitened(y: np.ndarray, templates: TemplateSet, stacked: StackedRealOperator):
    """Label minimizing the whitened quadratic form (y - A s)^T (A A^T)^+ (y - A s)."""
    y = np.asarray(y)
    single = y.ndim == 1
    Y = y[:, None] if single else y
    if Y.shape[0] != stacked.a.shape[0]:
        raise DimensionError("stacked measurement length must be 2m")
    projected = stacked.a @ templates.templates  # 2m x P, real templates expected
    scores = np.empty((projected.shape[1], Y.shape[1]))
    for i in range(projected.shape[1]):
        resid = Y - projected[:, i : i + 1]
        scores[i] = np.sum(resid * (stacked.gram_pinv @ resid), axis=0)
    winners = np.argmin(scores, axis=0)
    labels = [templates.labels[w] for w in winners]
    return labels[0] if single else labels
