"""Tests for Schwartz test functions: values, derivatives, transforms and norms."""

import math

import numpy as np
import pytest

from api.services import test_functions as tf
from api.services.quadrature import integrate_real_line
from schemas.test_function import GaussianBump, HermiteGaussian, TabulatedSchwartz, null_function


def _gaussian_tabulated(**extra) -> TabulatedSchwartz:
    return TabulatedSchwartz(func=lambda x: np.exp(-np.sum(np.asarray(x) ** 2, axis=-1)), **extra)


# ── evaluate / deriv ──────────────────────────────────────────────────────────

class TestEvaluate:
    def test_bump_peak(self):
        assert tf.evaluate(GaussianBump(dimension=3), np.zeros(3)) == pytest.approx(1.0)

    def test_bump_width(self):
        assert tf.evaluate(GaussianBump(a=2.0), 0.5) == pytest.approx(math.exp(-0.5))

    def test_hermite(self):
        f = HermiteGaussian(dimension=2, k=2)
        assert tf.evaluate(f, np.array([1.0, 1.0])) == pytest.approx(math.exp(-2.0))

    def test_batch_shape(self):
        assert tf.evaluate(GaussianBump(dimension=2), np.zeros((7, 2))).shape == (7,)


class TestDerivatives:
    @pytest.mark.parametrize("f", [GaussianBump(a=0.7), HermiteGaussian(k=3)])
    def test_deriv_matches_finite_difference(self, f):
        x = np.linspace(-2.0, 2.0, 9)
        h = 1e-6
        numeric = (tf.evaluate(f, x + h) - tf.evaluate(f, x - h)) / (2 * h)
        assert np.allclose(tf.deriv(f, x), numeric, atol=1e-7)

    @pytest.mark.parametrize("f", [GaussianBump(dimension=2, a=1.3), HermiteGaussian(dimension=2, k=2)])
    def test_mixed_second_derivative(self, f):
        x = np.array([[0.3, -0.4], [1.1, 0.2]])
        h = 1e-5
        step = np.array([0.0, h])
        numeric = (tf.deriv(f, x + step, 0) - tf.deriv(f, x - step, 0)) / (2 * h)
        assert np.allclose(tf.deriv2(f, x, 0, 1), numeric, atol=1e-7)

    def test_hermite_second_derivative(self):
        f = HermiteGaussian(k=2)
        x = np.linspace(-1.5, 1.5, 7)
        h = 1e-5
        numeric = (tf.deriv(f, x + h) - tf.deriv(f, x - h)) / (2 * h)
        assert np.allclose(tf.deriv2(f, x), numeric, atol=1e-7)

    def test_tabulated_uses_finite_differences(self):
        f = _gaussian_tabulated()
        x = np.array([0.4, -1.2])
        assert np.allclose(tf.deriv(f, x), tf.deriv(GaussianBump(), x), atol=1e-8)

    def test_axis_out_of_range(self):
        with pytest.raises(ValueError, match="axis"):
            tf.deriv(GaussianBump(dimension=2), np.zeros(2), axis=2)


# ── fourier ───────────────────────────────────────────────────────────────────

class TestFourier:
    def test_bump_at_origin_is_integral(self):
        assert tf.fourier(GaussianBump(dimension=2), np.zeros(2)) == pytest.approx(math.pi)

    def test_bump_closed_form(self):
        k = 0.4
        expected = math.sqrt(math.pi) * math.exp(-(math.pi**2) * k**2)
        assert tf.fourier(GaussianBump(), k) == pytest.approx(expected)

    def test_odd_hermite_vanishes_at_origin(self):
        assert abs(tf.fourier(HermiteGaussian(k=1), 0.0)) < 1e-15

    @pytest.mark.parametrize("k", [0, 1, 2, 3])
    def test_hermite_matches_quadrature(self, k):
        f = HermiteGaussian(k=k)
        xi = 0.35
        re = integrate_real_line(lambda x: x**k * math.exp(-x * x) * math.cos(2 * math.pi * xi * x), 1e-12).value
        im = integrate_real_line(lambda x: x**k * math.exp(-x * x) * math.sin(2 * math.pi * xi * x), 1e-12).value
        assert tf.fourier(f, xi) == pytest.approx(complex(re, im), abs=1e-9)

    def test_tabulated_quadrature_fallback(self):
        value = tf.fourier(_gaussian_tabulated(), np.array([0.0, 0.3]))
        assert np.allclose(value, tf.fourier(GaussianBump(), np.array([0.0, 0.3])), atol=1e-7)

    def test_tabulated_higher_dimension_needs_transform(self):
        f = TabulatedSchwartz(dimension=2, func=lambda x: np.exp(-np.sum(x**2, axis=-1)))
        with pytest.raises(ValueError, match="transform"):
            tf.fourier(f, np.zeros(2))

    def test_fourier_power_of_bump(self):
        k = np.array([0.1, 0.6])
        assert np.allclose(tf.fourier_power(GaussianBump(), 3, k), tf.fourier(GaussianBump(a=3.0), k))


class TestPlancherel:
    @pytest.mark.parametrize(
        "f",
        [
            GaussianBump(a=0.5), GaussianBump(), GaussianBump(a=3.0),
            HermiteGaussian(k=0), HermiteGaussian(k=1), HermiteGaussian(k=2), HermiteGaussian(k=3),
        ],
        ids=lambda f: f"{f.f}",
    )
    def test_l2_norm_preserved(self, f):
        space = integrate_real_line(lambda x: float(tf.evaluate(f, x)) ** 2, 1e-12).value
        frequency = integrate_real_line(lambda k: abs(complex(tf.fourier(f, k))) ** 2, 1e-12).value
        assert frequency == pytest.approx(space, rel=1e-8)

    def test_tabulated_l2_norm_preserved(self):
        f = _gaussian_tabulated()
        frequency = integrate_real_line(lambda k: abs(complex(tf.fourier(f, k))) ** 2, 1e-6, even=True).value
        assert frequency == pytest.approx(math.sqrt(math.pi / 2), abs=1e-5)

    @pytest.mark.parametrize(
        "f",
        [
            GaussianBump(), GaussianBump(a=4.0), GaussianBump(dimension=2),
            HermiteGaussian(k=1), HermiteGaussian(k=3), HermiteGaussian(dimension=2, k=2),
        ],
        ids=lambda f: f"{f.f}-d{f.dimension}",
    )
    def test_transform_decays(self, f):
        k = 5.0 * np.ones(f.dimension) / math.sqrt(f.dimension)
        assert 5.0**8 * abs(complex(tf.fourier(f, k))) < 1e-6


# ── integrals and norms ───────────────────────────────────────────────────────

class TestIntegrals:
    def test_bump(self):
        assert tf.integral(GaussianBump(dimension=2)) == pytest.approx(math.pi)

    def test_even_hermite(self):
        assert tf.integral(HermiteGaussian(k=2)) == pytest.approx(math.sqrt(math.pi) / 2)

    def test_odd_hermite(self):
        assert tf.integral(HermiteGaussian(k=3)) == 0.0

    def test_tabulated(self):
        assert tf.integral(_gaussian_tabulated()) == pytest.approx(math.sqrt(math.pi), abs=1e-9)

    def test_lp_norm_of_derivative(self):
        f = GaussianBump()
        # total variation of the bump, and ∫ 4x² e^{-2x²}
        assert tf.lp_norm_of_deriv(f, 1.0) == pytest.approx(2.0, abs=1e-9)
        assert tf.lp_norm_of_deriv(f, 2.0) == pytest.approx(math.sqrt(math.pi / 2), abs=1e-9)
        assert tf.lp_norm_of_deriv(f, 1.5) == pytest.approx(1.5443, abs=1e-4)

    def test_lp_norm_rejects_small_p(self):
        with pytest.raises(ValueError):
            tf.lp_norm_of_deriv(GaussianBump(), 0.5)

    def test_sup_norm(self):
        assert tf.sup_norm(HermiteGaussian(k=2)) == pytest.approx(math.exp(-1.0))
        assert tf.sup_norm(GaussianBump(a=5.0)) == 1.0

    def test_sup_norm_needs_value_for_tabulated(self):
        with pytest.raises(ValueError):
            tf.sup_norm(_gaussian_tabulated())

    def test_null_function(self):
        assert tf.is_null(null_function(2))
        assert not tf.is_null(GaussianBump())


class TestAutocorrelation:
    def test_bump_at_origin(self):
        assert tf.autocorrelation(GaussianBump(), 0.0) == pytest.approx(math.sqrt(math.pi / 2))

    def test_hermite_zero_matches_bump(self):
        y = np.array([0.0, 0.5, 1.7])
        assert np.allclose(tf.autocorrelation(HermiteGaussian(k=0), y), tf.autocorrelation(GaussianBump(), y))

    def test_hermite_matches_quadrature(self):
        f = HermiteGaussian(k=1)
        s = 0.8
        direct = integrate_real_line(lambda z: z * math.exp(-z * z) * (z + s) * math.exp(-(z + s) ** 2), 1e-12).value
        assert float(tf.autocorrelation(f, s)) == pytest.approx(direct, abs=1e-10)


class TestEnvelope:
    @pytest.mark.parametrize("f", [GaussianBump(a=0.5), HermiteGaussian(k=3)])
    def test_dominates_function(self, f):
        env = tf.envelope(f)
        x = np.linspace(-6.0, 6.0, 241)
        _, _, tail = env.axis(0)
        assert np.all(np.abs(tf.evaluate(f, x)) <= tail(np.abs(x)) + 1e-15)

    def test_tail_sup_nonincreasing(self):
        _, _, tail = tf.envelope(HermiteGaussian(k=4)).axis(0)
        values = tail(np.linspace(0, 5, 100))
        assert np.all(np.diff(values) <= 1e-15)

    def test_tabulated_has_no_envelope(self):
        with pytest.raises(ValueError):
            tf.envelope(_gaussian_tabulated())
