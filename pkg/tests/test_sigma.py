import numpy as np
import pytest

from roughvolterra.sigma import SIGMA_NAMES, SigmaField, sigma_catalog


class TestCatalog:
    def test_shapes(self):
        for name in SIGMA_NAMES:
            fld = sigma_catalog(name, n=2, d=3)
            y = np.array([0.1, -0.4, 0.7])
            assert fld(y).shape == (2, 3)
            assert fld.dsigma(y).shape == (2, 3, 3)
            assert fld.d2sigma(y).shape == (2, 3, 3, 3)

    def test_zero(self):
        fld = sigma_catalog("zero", n=1, d=1)
        assert fld(np.array([2.0]))[0, 0] == 0.0

    def test_constant_matrix(self):
        fld = sigma_catalog("constant", n=2, d=2, params={"value": 0.5})
        assert np.allclose(fld(np.zeros(2)), 0.5)
        assert np.max(np.abs(fld.dsigma(np.ones(2)))) == 0.0

    def test_linear_scalar(self):
        fld = sigma_catalog("linear", n=1, d=1, params={"scale": 2.0})
        assert fld(np.array([0.3]))[0, 0] == pytest.approx(0.6)

    def test_sin_scalar(self):
        fld = sigma_catalog("sin", n=1, d=1)
        assert fld(np.array([0.5]))[0, 0] == pytest.approx(np.sin(0.5))

    def test_tanh_bounded(self):
        fld = sigma_catalog("tanh", n=1, d=1, params={"amp": 0.8})
        ys = np.linspace(-20, 20, 101)[:, None]
        assert np.max(np.abs(fld.batch(ys))) <= 0.8

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            sigma_catalog("cosh")


class TestDerivativeConsistency:
    @pytest.mark.parametrize("name", ["linear", "sin", "tanh"])
    def test_fd_consistency_scalar(self, name):
        fld = sigma_catalog(name, n=1, d=1)
        assert fld.fd_consistency(n_points=10, seed=1) < 1e-6

    def test_fd_consistency_multidim(self):
        fld = sigma_catalog("sin", n=3, d=2, params={"freq": 2.0, "direction": [1.0, 0.5, -0.3]})
        assert fld.fd_consistency(n_points=8, seed=2) < 1e-6

    def test_third_derivative_tanh(self):
        fld = sigma_catalog("tanh", n=1, d=1)
        h = 1e-5
        for y0 in (-0.7, 0.0, 1.3):
            y = np.array([y0])
            fd = (fld.d2sigma(y + h) - fld.d2sigma(y - h)) / (2 * h)
            assert fd[0, 0, 0, 0] == pytest.approx(fld.d3sigma(y)[0, 0, 0, 0, 0], abs=1e-5)


class TestCustomField:
    def test_square_field(self):
        # sigma(y) = y^2 as a custom scalar field
        fld = SigmaField(
            n=1, d=1,
            batch=lambda ys: (ys**2)[:, None, :],
            dsigma_batch=lambda ys: (2 * ys)[:, None, :, None],
            d2sigma_batch=lambda ys: 2 * np.ones_like(ys)[:, None, :, None, None],
        )
        assert fld(np.array([3.0]))[0, 0] == 9.0
        assert fld.fd_consistency(n_points=5) < 1e-6
