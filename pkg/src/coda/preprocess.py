"""Linear dimensionality reduction ahead of density clustering.

Native preprocessing is PCA; externally reduced embeddings (e.g. UMAP)
enter through embedding-io unchanged, in which case this module is an
identity. Default reduced dimension is 50.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadDim, DegenerateInput

DEFAULT_DIM = 50

_RANK_EPS = 1e-12


@dataclass(frozen=True)
class LinearReducer:
    mean: np.ndarray              # (D,)
    components: np.ndarray        # (d, D), orthonormal rows
    out_dim: int
    explained_variance: np.ndarray  # (d,), non-increasing
    total_variance: float


def fit_pca(X, out_dim: int) -> LinearReducer:
    """Fit the top ``out_dim`` principal directions of centered X.

    Eigenvector signs are fixed by making each component's largest-magnitude
    coordinate positive; exactly tied eigenvalues keep the eigensolver's
    ascending-index order (stable sort), so the fit is deterministic for
    identical input bytes.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise BadDim(f"expected a matrix, got shape {X.shape}")
    n, d_in = X.shape
    if n < 2:
        raise BadDim(f"need at least 2 rows, got {n}")
    if not 1 <= out_dim <= min(n, d_in):
        raise BadDim(f"out_dim {out_dim} not in [1, min(N={n}, D={d_in})]")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    total = float(eigvals.clip(min=0.0).sum())
    if total <= _RANK_EPS:
        raise DegenerateInput("input has zero variance (rank 0)")
    order = np.argsort(-eigvals, kind="stable")[:out_dim]
    comps = eigvecs[:, order].T.copy()
    explained = eigvals[order].clip(min=0.0)
    for row in comps:
        pivot = int(np.argmax(np.abs(row)))
        if row[pivot] < 0:
            row *= -1.0
    return LinearReducer(mean, comps, out_dim, explained, total)


def transform(reducer: LinearReducer, X) -> np.ndarray:
    """Project rows as (x - mean) @ components.T."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != reducer.mean.shape[0]:
        raise BadDim(
            f"input has {X.shape[1]} columns, reducer expects {reducer.mean.shape[0]}"
        )
    return (X - reducer.mean) @ reducer.components.T


def reconstruction_error(reducer: LinearReducer, X) -> float:
    """Residual variance of projecting X onto the fitted subspace.

    Covariance-normalized (sum of squares over n-1), so on the training data
    it equals the sum of the trailing eigenvalues of the sample covariance.
    """
    X = np.asarray(X, dtype=np.float64)
    Z = transform(reducer, X)
    back = Z @ reducer.components + reducer.mean
    return float(np.sum((X - back) ** 2) / (X.shape[0] - 1))
