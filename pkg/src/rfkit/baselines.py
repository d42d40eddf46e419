"""Comparison methods: Gaussian low-pass downsampling, PCA, and locally linear embedding."""

import math
from dataclasses import dataclass

import numpy as np
import scipy.ndimage
import scipy.sparse
import scipy.sparse.csgraph

from .exceptions import (
    DimensionError,
    GraphConnectivityError,
    InsufficientDataError,
    InvalidRankError,
    NumericError,
)

DEFAULT_NEIGHBORS = 12
DEFAULT_LLE_REG = 1e-3

_NEIGHBOR_BLOCK = 512


@dataclass(frozen=True)
class LpfSpec:
    """Blur-and-decimate settings for a 1-D or 2-D periodic grid.

    blur_sigma is in pixels; None picks factor / 2.  Decimation keeps every
    factor-th pixel per spatial dimension starting at index 0, so the nominal
    compression ratio is factor ** ndim.
    """

    factor: int
    grid_shape: object
    blur_sigma: float = None

    def __post_init__(self):
        if isinstance(self.factor, bool) or not isinstance(self.factor, (int, np.integer)):
            raise ValueError("factor must be an integer")
        if self.factor < 1:
            raise ValueError(f"factor must be >= 1, got {self.factor}")
        shape = self.grid_shape
        if isinstance(shape, (int, np.integer)) and not isinstance(shape, bool):
            shape = (int(shape),)
        else:
            shape = tuple(int(s) for s in shape)
        if len(shape) not in (1, 2) or any(s < 1 for s in shape):
            raise ValueError(f"grid_shape must be a positive length or (height, width), got {self.grid_shape}")
        object.__setattr__(self, "grid_shape", shape)
        if self.factor > min(shape):
            raise ValueError(f"factor {self.factor} exceeds grid extent {min(shape)}")
        sigma = self.blur_sigma
        if sigma is None:
            sigma = self.factor / 2.0
        sigma = float(sigma)
        if sigma < 0:
            raise ValueError(f"blur_sigma must be nonnegative, got {sigma}")
        object.__setattr__(self, "blur_sigma", sigma)

    @property
    def ndim(self):
        return len(self.grid_shape)

    @property
    def input_dim(self):
        return int(np.prod(self.grid_shape))

    @property
    def output_dim(self):
        return int(np.prod([len(range(0, s, self.factor)) for s in self.grid_shape]))

    @property
    def ratio(self):
        return self.input_dim / self.output_dim


def gaussian_kernel(sigma):
    """Unit-sum Gaussian taps truncated at radius ceil(3 sigma); sigma=0 is the identity."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    radius = math.ceil(3.0 * sigma)
    if radius == 0:
        return np.array([1.0])
    x = np.arange(-radius, radius + 1, dtype=float)
    w = np.exp(-(x**2) / (2.0 * sigma**2))
    return w / w.sum()


def lpf_compress(X, spec):
    """Blur each column on its periodic grid and keep every factor-th pixel.

    X is input_dim x K with columns flattened row-major; the result is
    output_dim x K, flattened the same way.
    """
    X = np.asarray(X)
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-D data matrix, got shape {X.shape}")
    if X.shape[0] != spec.input_dim:
        raise DimensionError(
            f"matrix has {X.shape[0]} rows but grid {spec.grid_shape} holds {spec.input_dim} pixels"
        )
    if np.iscomplexobj(X):
        return lpf_compress(X.real, spec) + 1j * lpf_compress(X.imag, spec)
    kernel = gaussian_kernel(spec.blur_sigma)
    grids = X.astype(float).reshape(spec.grid_shape + (X.shape[1],))
    for axis in range(spec.ndim):
        grids = scipy.ndimage.convolve1d(grids, kernel, axis=axis, mode="wrap")
    sel = (slice(None, None, spec.factor),) * spec.ndim
    return grids[sel].reshape(spec.output_dim, X.shape[1])


@dataclass(frozen=True)
class PcaModel:
    """Mean and top principal directions of a fitted sample, columns orthonormal."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        comp = np.asarray(self.components, dtype=float)
        ev = np.asarray(self.explained_variance, dtype=float)
        if mean.ndim != 1 or comp.ndim != 2 or comp.shape[0] != mean.shape[0]:
            raise DimensionError("components must be n x m with mean of length n")
        if ev.shape != (comp.shape[1],):
            raise DimensionError("explained_variance must have one entry per component")
        gram = comp.T @ comp
        if np.max(np.abs(gram - np.eye(comp.shape[1]))) > 1e-10:
            raise ValueError("components are not orthonormal")
        if np.any(np.diff(ev) > 1e-12) or np.any(ev < -1e-12):
            raise ValueError("explained_variance must be nonnegative and nonincreasing")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comp)
        object.__setattr__(self, "explained_variance", ev)

    @property
    def rank(self):
        return self.components.shape[1]


def pca_fit(X, m):
    """Fit an m-component PCA model to the columns of X (n x K, K samples)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-D data matrix, got shape {X.shape}")
    n, K = X.shape
    if K < 2:
        raise InsufficientDataError(f"PCA needs at least 2 samples, got {K}")
    if not 1 <= m <= min(n, K - 1):
        raise InvalidRankError(f"m must be in [1, {min(n, K - 1)}] for a {n} x {K} matrix, got {m}")
    mean = X.mean(axis=1)
    U, s, _ = np.linalg.svd(X - mean[:, None], full_matrices=False)
    comp = U[:, :m]
    # deterministic orientation: largest-magnitude entry of each component positive
    anchors = np.argmax(np.abs(comp), axis=0)
    comp = comp * np.where(comp[anchors, np.arange(m)] < 0, -1.0, 1.0)
    return PcaModel(mean=mean, components=comp, explained_variance=s[:m] ** 2 / (K - 1))


def pca_apply(model, X):
    """Project columns of X onto the model's components after centering."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != model.mean.shape[0]:
        raise DimensionError(
            f"expected {model.mean.shape[0]} rows, got shape {tuple(np.shape(X))}"
        )
    return model.components.T @ (X - model.mean[:, None])


def _as_real_points(X):
    """Columns as real vectors; complex rows are split into real and imaginary parts."""
    X = np.asarray(X)
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-D data matrix, got shape {X.shape}")
    if np.iscomplexobj(X):
        return np.vstack([X.real, X.imag]).astype(float)
    return X.astype(float)


def _nearest_neighbors(X, k):
    """Indices (K x k) of the k nearest other columns, ties broken by index."""
    K = X.shape[1]
    sq = np.einsum("ij,ij->j", X, X)
    out = np.empty((K, k), dtype=np.intp)
    for start in range(0, K, _NEIGHBOR_BLOCK):
        stop = min(start + _NEIGHBOR_BLOCK, K)
        block = sq[start:stop, None] + sq[None, :] - 2.0 * (X[:, start:stop].T @ X)
        np.maximum(block, 0.0, out=block)
        block[np.arange(stop - start), np.arange(start, stop)] = np.inf
        part = np.argpartition(block, k - 1, axis=1)[:, :k]
        rows = np.arange(stop - start)[:, None]
        order = np.lexsort((part, block[rows, part]), axis=1)
        out[start:stop] = part[rows, order]
    return out


def _reconstruction_weights(X, neighbors, reg):
    """Barycentric weights per point over its neighbors; rows sum to 1."""
    K = X.shape[1]
    k = neighbors.shape[1]
    W = np.zeros((K, k))
    for i in range(K):
        local = X[:, neighbors[i]] - X[:, i : i + 1]
        G = local.T @ local
        G[np.diag_indices_from(G)] += reg * np.trace(G) / k
        try:
            w = np.linalg.solve(G, np.ones(k))
        except np.linalg.LinAlgError:
            raise NumericError("singular local Gram matrix", index=i)
        total = w.sum()
        if not np.isfinite(total) or abs(total) < 1e-300:
            raise NumericError("degenerate local reconstruction weights", index=i)
        W[i] = w / total
    return W


def lle_embed(X, k_neighbors=DEFAULT_NEIGHBORS, d_out=2, reg=DEFAULT_LLE_REG):
    """Locally linear embedding of the columns of X, returned as d_out x K.

    Neighborhoods are Euclidean; local weights come from regularized Gram
    systems (reg * trace / k on the diagonal).  The embedding is the bottom
    nonconstant eigenvectors of (I - W)^T (I - W), rows scaled to unit
    variance with a deterministic sign.
    """
    P = _as_real_points(X)
    K = P.shape[1]
    if not 1 <= k_neighbors < K:
        raise ValueError(f"k_neighbors must be in [1, {K - 1}], got {k_neighbors}")
    if not 1 <= d_out < K:
        raise ValueError(f"d_out must be in [1, {K - 1}], got {d_out}")
    if reg < 0:
        raise ValueError(f"reg must be nonnegative, got {reg}")
    neighbors = _nearest_neighbors(P, k_neighbors)

    rows = np.repeat(np.arange(K), k_neighbors)
    cols = neighbors.ravel()
    adjacency = scipy.sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(K, K))
    n_comp, labels = scipy.sparse.csgraph.connected_components(adjacency, directed=False)
    if n_comp > 1:
        sizes = sorted(np.bincount(labels).tolist(), reverse=True)
        raise GraphConnectivityError(component_sizes=sizes)

    weights = _reconstruction_weights(P, neighbors, reg)
    W = scipy.sparse.csr_matrix((weights.ravel(), (rows, cols)), shape=(K, K))
    E = np.eye(K) - W.toarray()
    M = E.T @ E
    _, vecs = np.linalg.eigh(M)
    Y = vecs[:, 1 : d_out + 1].T

    std = Y.std(axis=1, keepdims=True)
    if np.any(std == 0):
        raise NumericError("embedding collapsed to a constant coordinate")
    Y = Y / std
    anchors = np.argmax(np.abs(Y), axis=1)
    Y *= np.where(Y[np.arange(d_out), anchors] < 0, -1.0, 1.0)[:, None]
    return Y
