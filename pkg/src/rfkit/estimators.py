"""Scikit-learn style estimators wrapping the functional core.

Rows are samples here, matching sklearn conventions; the functional modules
use columns as samples, so these wrappers transpose at the boundary.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .baselines import LpfSpec, lle_embed, lpf_compress, pca_apply, pca_fit
from .estimation import StackedRealOperator, TemplateSet, classify_compressed, classify_whitened
from .operator import apply_batch, build_operator


def _validated(X, allow_complex=False):
    # check_array rejects complex data outright, so that path is hand-rolled
    if allow_complex and np.iscomplexobj(np.asarray(X)):
        X = np.asarray(X)
        if X.ndim != 2 or 0 in X.shape:
            raise ValueError(f"expected a non-empty 2-D array, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("input contains non-finite values")
        return X
    return check_array(X, ensure_2d=True, dtype="numeric")


class RandomizedFiltering(BaseEstimator, TransformerMixin):
    """Seeded sign-randomized Fourier projection as a transformer.

    Exactly one of n_components (output dimension) or ratio (compression
    factor n / m) must be set.  The fitted operator is a pure function of
    (n_features, m, seed), so transforms are reproducible across processes.
    """

    def __init__(self, n_components=None, ratio=None, seed=0):
        self.n_components = n_components
        self.ratio = ratio
        self.seed = seed

    def fit(self, X, y=None):
        X = _validated(X, allow_complex=True)
        n = X.shape[1]
        if (self.n_components is None) == (self.ratio is None):
            raise ValueError("set exactly one of n_components and ratio")
        if self.n_components is not None:
            m = int(self.n_components)
        else:
            if self.ratio < 1:
                raise ValueError(f"ratio must be >= 1, got {self.ratio}")
            m = int(round(n / self.ratio))
        m = max(m, 1)
        self.n_features_in_ = n
        self.operator_ = build_operator(n, m, self.seed)
        return self

    def transform(self, X):
        check_is_fitted(self, "operator_")
        X = _validated(X, allow_complex=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return apply_batch(self.operator_, X.T).T


class GaussianBlurDownsample(BaseEstimator, TransformerMixin):
    """Low-pass baseline: periodic Gaussian blur then decimation on a grid."""

    def __init__(self, factor=2, grid_shape=None, blur_sigma=None):
        self.factor = factor
        self.grid_shape = grid_shape
        self.blur_sigma = blur_sigma

    def fit(self, X, y=None):
        X = _validated(X)
        shape = self.grid_shape if self.grid_shape is not None else X.shape[1]
        self.spec_ = LpfSpec(factor=self.factor, grid_shape=shape, blur_sigma=self.blur_sigma)
        if self.spec_.input_dim != X.shape[1]:
            raise ValueError(
                f"grid {self.spec_.grid_shape} holds {self.spec_.input_dim} pixels, "
                f"X has {X.shape[1]} features"
            )
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = _validated(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return lpf_compress(X.T, self.spec_).T


class PrincipalComponents(BaseEstimator, TransformerMixin):
    """PCA baseline on rows-as-samples data."""

    def __init__(self, n_components=2):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = _validated(X)
        self.model_ = pca_fit(X.T, self.n_components)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = _validated(X)
        return pca_apply(self.model_, X.T).T


class LocalLinearEmbedding(BaseEstimator):
    """LLE baseline; only fit_transform is meaningful (no out-of-sample map)."""

    def __init__(self, n_neighbors=12, n_components=2, reg=1e-3):
        self.n_neighbors = n_neighbors
        self.n_components = n_components
        self.reg = reg

    def fit_transform(self, X, y=None):
        X = _validated(X, allow_complex=True)
        self.n_features_in_ = X.shape[1]
        return lle_embed(
            X.T, k_neighbors=self.n_neighbors, d_out=self.n_components, reg=self.reg
        ).T

    def fit(self, X, y=None):
        self.embedding_ = self.fit_transform(X)
        return self


class TemplateClassifier(BaseEstimator):
    """Nearest-template classification in the compressed domain.

    fit takes template vectors (rows) and their labels; predict takes
    already-compressed rows and returns the label of the nearest projected
    (mode="compressed") or whitened (mode="whitened") template.
    """

    def __init__(self, operator=None, mode="compressed"):
        self.operator = operator
        self.mode = mode

    def fit(self, X, y):
        if self.operator is None:
            raise ValueError("operator must be provided")
        if self.mode not in ("compressed", "whitened"):
            raise ValueError(f"unknown mode {self.mode!r}")
        X = _validated(X)
        y = list(y)
        if len(y) != X.shape[0]:
            raise ValueError(f"{X.shape[0]} templates but {len(y)} labels")
        self.templates_ = TemplateSet(X.T, labels=y)
        self.stacked_ = (
            StackedRealOperator.from_operator(self.operator)
            if self.mode == "whitened"
            else None
        )
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, Z):
        check_is_fitted(self, "templates_")
        Z = _validated(Z, allow_complex=True)
        if Z.shape[1] != self.operator.m:
            raise ValueError(f"Z has {Z.shape[1]} columns, operator emits {self.operator.m}")
        if self.mode == "compressed":
            labels = classify_compressed(Z.T.astype(complex), self.templates_, self.operator)
        else:
            Y = self.stacked_.stack(Z.T.astype(complex))
            labels = classify_whitened(Y, self.templates_, self.stacked_)
        return np.asarray(labels)
