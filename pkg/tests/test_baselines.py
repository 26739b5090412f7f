import numpy as np
import pytest

from conftest import random_spd
from spatial_whitening.baselines import cholesky_whitening, inverse_cholesky, pca_whitening
from spatial_whitening.errors import DegenerateEigenvectorError, DegenerateRowError
from spatial_whitening.whitening import log_det_divergence


class TestPCA:
    def test_diagonal_sigma(self):
        var = np.array([0.7, 2.5, 1.1])
        g = pca_whitening(np.diag(var))
        order = np.argsort(var)[::-1]
        np.testing.assert_allclose(g.variances, var[order])
        np.testing.assert_allclose(g.transform, np.eye(3)[order], atol=1e-15)
        assert g.label == "pca"

    def test_two_by_two_degenerate(self):
        s = np.array([[1.0, 0.5], [0.5, 1.0]])
        with pytest.raises(DegenerateEigenvectorError) as info:
            pca_whitening(s)
        assert info.value.indices == (1,)
        g = pca_whitening(s, drop_degenerate=True)
        assert g.excluded == (1,)
        np.testing.assert_allclose(g.variances, [0.75])
        np.testing.assert_allclose(g.transform, [[0.5, 0.5]])

    @pytest.mark.parametrize("seed", range(10))
    def test_full_whitening(self, seed):
        rng = np.random.default_rng(seed)
        s = random_spd(rng, 8)
        g = pca_whitening(s)
        c = g.transform @ s @ g.transform.T
        off = c - np.diag(np.diag(c))
        assert np.abs(off).max() < 1e-8 * np.abs(np.diag(c)).max()
        assert np.sum(off**2) < 1e-12 * np.trace(c) ** 2
        assert np.abs(g.transform.sum(axis=1) - 1).max() < 1e-10
        np.testing.assert_allclose(g.variances, np.diag(c), rtol=1e-8)
        c = 0.5 * (c + c.T)
        assert abs(log_det_divergence(c, np.diag(np.diag(c)))) < 1e-8


class TestCholesky:
    def test_identity(self):
        g = cholesky_whitening(np.eye(3))
        np.testing.assert_allclose(g.transform, np.eye(3))
        np.testing.assert_allclose(g.variances, 1.0)

    def test_diagonal(self):
        np.testing.assert_allclose(inverse_cholesky(np.diag([4.0, 9.0])), np.diag([0.5, 1 / 3]))
        g = cholesky_whitening(np.diag([4.0, 9.0]))
        np.testing.assert_allclose(g.variances, [4.0, 9.0])
        np.testing.assert_allclose(g.transform, np.eye(2))

    @pytest.mark.parametrize("seed", range(10))
    def test_whitens_and_preserves_mean(self, seed):
        rng = np.random.default_rng(seed)
        s = random_spd(rng, 7)
        l_inv = inverse_cholesky(s)
        assert np.abs(l_inv @ s @ l_inv.T - np.eye(7)).max() < 1e-10
        assert np.all(np.triu(l_inv, 1) == 0)
        g = cholesky_whitening(s)
        assert np.abs(g.transform.sum(axis=1) - 1).max() < 1e-10
        c = g.transform @ s @ g.transform.T
        np.testing.assert_allclose(np.diag(c), g.variances, rtol=1e-9)

    def test_degenerate_row(self):
        # second row of L^-1 is [-1, 1]
        s = np.array([[1.0, 1.0], [1.0, 2.0]])
        with pytest.raises(DegenerateRowError):
            cholesky_whitening(s)
