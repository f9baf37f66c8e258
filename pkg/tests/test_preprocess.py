import numpy as np
import pytest

from coda.errors import BadDim, DegenerateInput
from coda.preprocess import fit_pca, reconstruction_error, transform


def test_line_in_3d_captured_by_one_component():
    t = np.linspace(-3, 3, 20)
    direction = np.array([1.0, 2.0, -1.0]) / np.sqrt(6.0)
    X = np.outer(t, direction)
    r = fit_pca(X, 1)
    cosine = abs(r.components[0] @ direction)
    assert cosine == pytest.approx(1.0, abs=1e-9)
    assert reconstruction_error(r, X) == pytest.approx(0.0, abs=1e-12)


def test_full_dim_keeps_total_variance():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 6))
    r = fit_pca(X, 6)
    assert float(r.explained_variance.sum()) == pytest.approx(r.total_variance, rel=1e-9)


def test_reconstruction_error_equals_trailing_eigenvalue_sum():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(100, 10)) @ np.diag(np.linspace(3.0, 0.3, 10))
    r = fit_pca(X, 3)
    # independent oracle: dense eigendecomposition of the sample covariance
    cov = np.cov(X - X.mean(axis=0), rowvar=False)
    eigvals = np.sort(np.linalg.eigvalsh(cov))[::-1]
    expected = eigvals[3:].sum()
    assert reconstruction_error(r, X) == pytest.approx(expected, rel=1e-9)


def test_transform_of_mean_is_zero():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 4))
    r = fit_pca(X, 2)
    assert np.allclose(transform(r, X.mean(axis=0)), 0.0, atol=1e-12)


def test_full_rank_transform_is_isometry():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(25, 5))
    r = fit_pca(X, 5)
    Z = transform(r, X)
    d_orig = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=2)
    d_proj = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=2)
    assert np.allclose(d_orig, d_proj, atol=1e-6)


def test_components_orthonormal_and_variance_monotone():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(60, 8))
    r = fit_pca(X, 5)
    gram = r.components @ r.components.T
    assert np.allclose(gram, np.eye(5), atol=1e-6)
    assert np.all(np.diff(r.explained_variance) <= 1e-12)


def test_deterministic_given_input_bytes():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(50, 7))
    a = fit_pca(X, 4)
    b = fit_pca(X.copy(), 4)
    assert np.array_equal(a.components, b.components)
    assert np.array_equal(a.mean, b.mean)


def test_bad_dims_and_degenerate_input():
    X = np.zeros((10, 3))
    with pytest.raises(DegenerateInput):
        fit_pca(X + 1.0, 2)  # identical rows: zero variance
    with pytest.raises(BadDim):
        fit_pca(np.random.default_rng(0).normal(size=(5, 3)), 4)
    with pytest.raises(BadDim):
        fit_pca(np.random.default_rng(0).normal(size=(1, 3)), 1)
    r = fit_pca(np.random.default_rng(0).normal(size=(6, 3)), 2)
    with pytest.raises(BadDim):
        transform(r, np.zeros((4, 5)))
