"""Tests for theoretical predictions: variances, limit constants, regime table, lattice identities."""

import math

import numpy as np
import pytest
from scipy import special

from api.services import test_functions, theory_engine
from api.services.quadrature import integrate_half_line
from schemas.experiment import Regime
from schemas.perturbation import ExpansionInfo, LFamily
from schemas.prediction import PredictionKind
from schemas.test_function import GaussianBump, HermiteGaussian, TabulatedSchwartz

KAPPA4 = (2 * math.sqrt(3) - 3) / math.pi


def gaussian_variance(r: float, d: int, sigma: float = 1.0) -> float:
    """Var T_r for GaussianBump(1) with N(0, σ²I) perturbations, in closed form."""
    return r**d * (math.pi / 2) ** (d / 2) * (1 - (1 + 2 * sigma**2 / r**2) ** (-d / 2))


# ── mean and exact variance ───────────────────────────────────────────────────

class TestMeanPrediction:
    def test_scales_with_volume(self):
        assert theory_engine.mean_prediction(GaussianBump(dimension=2), 3.0) == pytest.approx(9 * math.pi)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            theory_engine.mean_prediction(GaussianBump(), 3.0, d=2)


class TestVarianceExact:
    @pytest.mark.parametrize("d", [1, 2, 3])
    @pytest.mark.parametrize("r", [2.0, 5.0, 20.0])
    def test_gaussian_closed_form(self, make_spec, d, r):
        value = theory_engine.variance_exact(GaussianBump(dimension=d), make_spec("gaussian", dimension=d), r)
        assert value == pytest.approx(gaussian_variance(r, d), rel=1e-6)

    def test_sigma_scaling(self, make_spec):
        value = theory_engine.variance_exact(GaussianBump(), make_spec("gaussian", sigma=0.5), 4.0)
        assert value == pytest.approx(gaussian_variance(4.0, 1, 0.5), rel=1e-6)

    def test_point_mass_is_zero(self, make_spec):
        assert theory_engine.variance_exact(GaussianBump(dimension=2), make_spec("point_mass", dimension=2), 7.0) == 0.0

    def test_generic_path_agrees(self, make_spec):
        """A tabulated bump with an explicit transform goes through the generic quadrature."""
        bump = GaussianBump()
        tabulated = TabulatedSchwartz(
            func=lambda x: np.exp(-np.sum(x**2, axis=-1)),
            transform=lambda k: test_functions.fourier(bump, k),
        )
        spec = make_spec("laplace", scale=0.5)
        expected = theory_engine.variance_exact(bump, spec, 3.0)
        assert theory_engine.variance_exact(tabulated, spec, 3.0) == pytest.approx(expected, rel=1e-6)

    def test_isotropic_radial_path(self, make_spec):
        """At α = 2 the isotropic law is Gaussian with σ² = 2γ."""
        spec = make_spec("isotropic_stable", dimension=2, alpha=2.0, gamma=0.5)
        value = theory_engine.variance_exact(GaussianBump(dimension=2), spec, 4.0)
        assert value == pytest.approx(gaussian_variance(4.0, 2, 1.0), rel=1e-6)

    def test_increasing_in_r_for_d3(self, make_spec):
        spec = make_spec("uniform_cube", dimension=3)
        f = GaussianBump(dimension=3)
        values = [theory_engine.variance_exact(f, spec, r) for r in (4.0, 8.0, 16.0)]
        assert values[0] < values[1] < values[2]

    def test_dimension_mismatch(self, make_spec):
        with pytest.raises(ValueError):
            theory_engine.variance_exact(GaussianBump(), make_spec("gaussian", dimension=2), 3.0)


# ── asymptotics and limits ────────────────────────────────────────────────────

class TestWeightedFourierMoment:
    def test_fractional_power(self):
        expected = math.pi * special.gamma(1.25) / (2 * math.pi**2) ** 1.25
        assert theory_engine.weighted_fourier_moment(GaussianBump(), 1.5).value == pytest.approx(expected, rel=1e-8)

    def test_radial_matches_one_dimensional_product(self):
        # ∫|F|²|x|² over R² = 2 ∫ F₁² x² · ∫ F₁²
        one = theory_engine.weighted_fourier_moment(GaussianBump(), 2.0).value
        zero = theory_engine.weighted_fourier_moment(GaussianBump(), 0.0).value
        two = theory_engine.weighted_fourier_moment(GaussianBump(dimension=2), 2.0).value
        assert two == pytest.approx(2 * one * zero, rel=1e-8)


class TestVarianceAsymptotic:
    def test_light_tail_d1(self, make_spec):
        spec = make_spec("gaussian")
        r = 50.0
        asym = theory_engine.variance_asymptotic(GaussianBump(), spec, r)
        assert asym == pytest.approx(math.sqrt(math.pi / 2) / r, rel=1e-8)
        assert theory_engine.variance_exact(GaussianBump(), spec, r) / asym == pytest.approx(1.0, abs=2e-3)

    def test_stated_convention_halves(self, make_spec):
        spec = make_spec("cauchy")
        structure = theory_engine.variance_asymptotic(GaussianBump(), spec, 10.0)
        stated = theory_engine.variance_asymptotic(GaussianBump(), spec, 10.0, convention="stated")
        assert structure == pytest.approx(2 * stated)

    def test_cauchy_matches_exact(self, make_spec):
        spec = make_spec("cauchy")
        r = 100.0
        exact = theory_engine.variance_exact(GaussianBump(), spec, r)
        asym = theory_engine.variance_asymptotic(GaussianBump(), spec, r)
        assert exact / asym == pytest.approx(1.0, abs=1e-2)

    def test_stable_matches_exact(self, make_spec):
        spec = make_spec("sym_stable", alpha=1.5)
        r = 100.0
        exact = theory_engine.variance_exact(GaussianBump(), spec, r)
        asym = theory_engine.variance_asymptotic(GaussianBump(), spec, r)
        assert exact / asym == pytest.approx(1.0, abs=2e-2)

    def test_accepts_expansion_info(self):
        info = ExpansionInfo(alpha=1.0, c=1.0, c2=2.0, l_family=LFamily(kind="log_power", p=1.0))
        value = theory_engine.variance_asymptotic(GaussianBump(), info, math.e**2)
        plain = theory_engine.variance_asymptotic(GaussianBump(), info.model_copy(update={"l_family": LFamily()}), math.e**2)
        assert value == pytest.approx(2 * plain)

    def test_unknown_convention(self, make_spec):
        with pytest.raises(ValueError, match="convention"):
            theory_engine.variance_asymptotic(GaussianBump(), make_spec("gaussian"), 5.0, convention="other")


class TestLimitVarianceD2:
    def test_gaussian(self, make_spec):
        value = theory_engine.limit_variance_d2(GaussianBump(dimension=2), make_spec("gaussian", dimension=2))
        assert value == pytest.approx(math.pi, rel=1e-8)

    def test_uniform_cube(self, make_spec):
        value = theory_engine.limit_variance_d2(GaussianBump(dimension=2), make_spec("uniform_cube", dimension=2))
        assert value == pytest.approx(math.pi / 12, rel=1e-8)

    def test_is_limit_of_exact_variance(self, make_spec):
        spec = make_spec("gaussian", dimension=2)
        f = GaussianBump(dimension=2)
        assert theory_engine.variance_exact(f, spec, 200.0) == pytest.approx(
            theory_engine.limit_variance_d2(f, spec), rel=1e-4
        )

    def test_heavy_tail_rejected(self, make_spec):
        with pytest.raises(ValueError, match="E\\|ξ₀\\|² < ∞"):
            theory_engine.limit_variance_d2(GaussianBump(dimension=2), make_spec("cauchy", dimension=2))

    def test_needs_d2(self, make_spec):
        with pytest.raises(ValueError, match="d = 2"):
            theory_engine.limit_variance_d2(GaussianBump(), make_spec("gaussian"))


class TestStableScale:
    def test_alpha_three_halves(self):
        f = GaussianBump()
        value = theory_engine.stable_scale(f, 1.5, 1.0)
        assert value == pytest.approx(test_functions.lp_norm_of_deriv(f, 1.5) ** (2 / 3))
        assert value == pytest.approx(1.336, abs=1e-3)

    def test_zero_coefficient(self):
        assert theory_engine.stable_scale(GaussianBump(), 1.5, 0.0) == 0.0

    @pytest.mark.parametrize("alpha", [1.0, 2.5])
    def test_alpha_range(self, alpha):
        with pytest.raises(ValueError):
            theory_engine.stable_scale(GaussianBump(), alpha, 1.0)

    def test_target_cfs(self):
        t = np.array([0.0, 0.5])
        assert np.allclose(theory_engine.stable_target_cf(1.5, 2.0)(t), [1.0, math.exp(-1.0)])
        assert np.allclose(theory_engine.gaussian_target_cf(1.0)(t), [1.0, math.exp(-(math.pi**2) / 2)])


# ── class II cumulants ────────────────────────────────────────────────────────

class TestClassTwoCumulants:
    def test_second_cumulant(self):
        assert theory_engine.class2_limit_cumulant(GaussianBump(), 1.0, 2) == pytest.approx(1 / math.pi)

    def test_third_cumulant_vanishes(self):
        assert theory_engine.class2_limit_cumulant(GaussianBump(), 1.0, 3) == pytest.approx(0.0, abs=1e-14)

    def test_fourth_cumulant(self):
        value = theory_engine.class2_limit_cumulant(GaussianBump(), 1.0, 4)
        assert value == pytest.approx(KAPPA4, abs=1e-12)
        assert value == pytest.approx(0.1477281, abs=1e-7)

    def test_linear_in_c(self):
        assert theory_engine.class2_limit_cumulant(GaussianBump(), 2.5, 4) == pytest.approx(2.5 * KAPPA4)

    def test_independent_of_bump_width(self):
        assert theory_engine.class2_limit_cumulant(GaussianBump(a=3.0), 1.0, 4) == pytest.approx(KAPPA4)

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_convolution_agrees(self, m):
        closed = theory_engine.class2_limit_cumulant(GaussianBump(), 1.0, m, method="closed_form")
        conv = theory_engine.class2_limit_cumulant(GaussianBump(), 1.0, m, method="convolution")
        assert conv == pytest.approx(closed, abs=1e-5)

    @pytest.mark.parametrize("sizes", [(3, 1), (2, 2), (2, 1, 1)])
    def test_nested_block_integrals_fourth_order(self, monkeypatch, sizes):
        """Each nested block integral of a κ₄ partition matches √(b(m-b))/(πm)."""
        monkeypatch.setattr(theory_engine, "CLASS2_BOX", 3.0)
        f = GaussianBump()
        for i, b in enumerate(sizes):
            nested = theory_engine._block_integral_nested(f, sizes, i)
            assert nested == pytest.approx(math.sqrt(b * (4 - b)) / (4 * math.pi), abs=1e-5)

    @pytest.mark.slow
    def test_quadrature_agrees_for_m3(self):
        closed = theory_engine.class2_limit_cumulant(GaussianBump(), 1.0, 3, method="closed_form")
        nested = theory_engine.class2_limit_cumulant(GaussianBump(), 1.0, 3, method="quadrature")
        assert nested == pytest.approx(closed, abs=1e-4)

    def test_hermite_second_cumulant(self):
        """κ₂ = 2c ∫ |k| |F[f](k)|² dk for real f."""
        f = HermiteGaussian(k=1)
        direct = 4 * integrate_half_line(
            lambda k: k * abs(complex(test_functions.fourier(f, k))) ** 2, 1e-10
        ).value
        assert theory_engine.class2_limit_cumulant(f, 1.0, 2) == pytest.approx(direct, abs=1e-6)

    def test_closed_form_needs_bump(self):
        with pytest.raises(ValueError, match="gaussian_bump"):
            theory_engine.class2_limit_cumulant(HermiteGaussian(k=1), 1.0, 2, method="closed_form")

    @pytest.mark.parametrize("m", [1, 7])
    def test_order_range(self, m):
        with pytest.raises(ValueError):
            theory_engine.class2_limit_cumulant(GaussianBump(), 1.0, m)

    def test_list(self):
        assert theory_engine.class2_cumulants(GaussianBump(), 1.0, 4) == pytest.approx([1 / math.pi, 0.0, KAPPA4], abs=1e-12)


# ── regime table ──────────────────────────────────────────────────────────────

class TestCheckRegime:
    @pytest.mark.parametrize(
        "regime,family,params,d",
        [
            (Regime.CLT_D3, "gaussian", {}, 3),
            (Regime.CLT_D3, "cauchy", {}, 4),
            (Regime.CLT_D2_BOUNDED, "uniform_cube", {}, 2),
            (Regime.CLT_D2_BOUNDED, "point_mass", {"value": [0.0, 0.0]}, 2),
            (Regime.CLT_D2_SUBSEQUENCE, "cauchy", {}, 2),
            (Regime.REGULAR_VARIATION, "sym_stable", {"alpha": 0.5}, 1),
            (Regime.REGULAR_VARIATION, "gaussian", {}, 2),
            (Regime.CLASS_TWO, "cauchy", {}, 1),
            (Regime.CLASS_TWO, "point_mass", {}, 1),
            (Regime.STABLE, "sym_stable", {"alpha": 1.5}, 1),
            (Regime.STABLE, "gaussian", {}, 1),
        ],
    )
    def test_accepts(self, make_spec, regime, family, params, d):
        theory_engine.check_regime(regime, make_spec(family, dimension=d, **params), d)

    @pytest.mark.parametrize(
        "regime,family,params,d,detail",
        [
            (Regime.CLT_D3, "gaussian", {}, 2, "dimension mismatch"),
            (Regime.CLT_D2_BOUNDED, "cauchy", {}, 2, "E|ξ|² = ∞"),
            (Regime.CLT_D2_SUBSEQUENCE, "gaussian", {}, 2, "E|ξ|² < ∞"),
            (Regime.REGULAR_VARIATION, "cauchy", {}, 1, "α=1.0"),
            (Regime.REGULAR_VARIATION, "gaussian", {}, 1, "α=2.0"),
            (Regime.CLASS_TWO, "gaussian", {}, 1, "α=2.0"),
            (Regime.STABLE, "cauchy", {}, 1, "α=1.0"),
            (Regime.STABLE, "gaussian", {}, 2, "dimension mismatch"),
            (Regime.CLT_D3, "point_mass", {"value": [0.0, 0.0, 0.0]}, 3, "a.s. constant"),
        ],
    )
    def test_rejects_naming_hypothesis(self, make_spec, regime, family, params, d, detail):
        with pytest.raises(ValueError) as exc:
            theory_engine.check_regime(regime, make_spec(family, dimension=d, **params), d)
        message = str(exc.value)
        assert f"regime item {regime.item}" in message
        assert detail in message

    def test_declared_log_power_enters_regular_variation(self, make_spec):
        declared = ExpansionInfo(alpha=1.0, c=1.0, c2=2.0, l_family=LFamily(kind="log_power", p=1.0))
        theory_engine.check_regime(Regime.REGULAR_VARIATION, make_spec("cauchy"), 1, declared=declared)
        with pytest.raises(ValueError, match="c=∞"):
            theory_engine.check_regime(Regime.CLASS_TWO, make_spec("cauchy"), 1, declared=declared)


class TestNormalizer:
    def test_clt_needs_variance(self):
        with pytest.raises(ValueError, match="variance"):
            theory_engine.normalizer(Regime.CLT_D3, None, 5.0, 3, GaussianBump(dimension=3))

    def test_clt_scale(self):
        center, scale = theory_engine.normalizer(Regime.CLT_D3, None, 2.0, 3, GaussianBump(dimension=3), 4.0)
        assert center == pytest.approx(8 * math.pi**1.5)
        assert scale == pytest.approx(0.5)

    def test_unit_scale_regimes(self):
        for regime in (Regime.CLT_D2_BOUNDED, Regime.CLASS_TWO):
            assert theory_engine.normalizer(regime, None, 5.0, 1)[1] == 1.0

    def test_regular_variation(self):
        info = ExpansionInfo(alpha=0.5, c=1.0, c2=2.0)
        _, scale = theory_engine.normalizer(Regime.REGULAR_VARIATION, info, 100.0, 1)
        assert scale == pytest.approx(100.0**-0.25)

    def test_stable(self):
        info = ExpansionInfo(alpha=1.5, c=1.0, c2=2.0)
        center, scale = theory_engine.normalizer(Regime.STABLE, info, 8.0, 1, GaussianBump())
        assert center == pytest.approx(8 * math.sqrt(math.pi))
        assert scale == pytest.approx(2.0)

    def test_stable_rejects_alpha_one(self):
        info = ExpansionInfo(alpha=1.0, c=1.0, c2=2.0)
        with pytest.raises(ValueError, match="regime item 6"):
            theory_engine.normalizer(Regime.STABLE, info, 8.0, 1)


# ── lattice identities ────────────────────────────────────────────────────────

class TestLatticeSums:
    @pytest.mark.parametrize("d", [1, 2])
    @pytest.mark.parametrize("r", [1.0, 2.0, 5.0])
    def test_poisson_summation(self, d, r):
        assert theory_engine.poisson_defect(GaussianBump(dimension=d), r) < 1e-8

    def test_dual_side_is_mean_for_large_r(self):
        f = GaussianBump()
        assert theory_engine.fourier_lattice_sum(f, 5.0) == pytest.approx(theory_engine.mean_prediction(f, 5.0), rel=1e-14)

    def test_small_r_sees_dual_terms(self):
        f = GaussianBump()
        assert abs(theory_engine.direct_lattice_sum(f, 0.5) - theory_engine.mean_prediction(f, 0.5)) > 1e-3

    def test_riemann_sum(self):
        f = GaussianBump()
        riemann = theory_engine.riemann_lp_sum(f, 1.5, 100.0)
        assert riemann == pytest.approx(test_functions.lp_norm_of_deriv(f, 1.5), rel=1e-3)


class TestTailProxyEta:
    def test_bump(self):
        # autocorrelation ∝ exp(-|y|²/2) drops to half at |y| = √(2 ln 2)
        assert theory_engine.tail_proxy_eta(GaussianBump()) == pytest.approx(2 * math.sqrt(2 * math.log(2)), rel=1e-6)

    def test_isotropic_in_d2(self):
        assert theory_engine.tail_proxy_eta(GaussianBump(dimension=2)) == pytest.approx(
            theory_engine.tail_proxy_eta(GaussianBump()), rel=1e-6
        )

    def test_reach_exceeded(self):
        with pytest.raises(ValueError, match="beyond"):
            theory_engine.tail_proxy_eta(GaussianBump(a=1e-4), reach=5.0)


# ── per-experiment predictions ────────────────────────────────────────────────

class TestRegimePredictions:
    def test_clt_d2_bounded(self, make_experiment):
        cfg = make_experiment(
            2, {"dimension": 2, "r": 3.0, "perturbation": {"family": "gaussian"}, "function": {"f": "gaussian_bump"}}
        )
        predictions, target = theory_engine.regime_predictions(cfg)
        kinds = [p.kind for p in predictions]
        assert kinds[:2] == [PredictionKind.MEAN, PredictionKind.VARIANCE_EXACT]
        assert PredictionKind.LIMIT_VARIANCE_D2 in kinds
        assert target == {"target": "gaussian", "variance": pytest.approx(math.pi)}

    def test_class_two(self, make_experiment, cauchy_unit):
        cfg = make_experiment(
            5, {"r": 10.0, "perturbation": cauchy_unit, "function": {"f": "gaussian_bump"}}, max_order=4
        )
        predictions, target = theory_engine.regime_predictions(cfg)
        cumulants = [p for p in predictions if p.kind == PredictionKind.CLASS_II_CUMULANT]
        assert [p.order for p in cumulants] == [2, 3, 4]
        assert target["target"] == "class_ii"
        assert target["cumulants"] == pytest.approx([1 / math.pi, 0.0, KAPPA4], abs=1e-12)

    def test_stable_alpha_two_is_gaussian(self, make_experiment):
        cfg = make_experiment(6, {"r": 10.0, "perturbation": {"family": "gaussian"}, "function": {"f": "gaussian_bump"}})
        _, target = theory_engine.regime_predictions(cfg)
        assert target["target"] == "gaussian"
        assert target["variance"] == pytest.approx(math.sqrt(math.pi / 2), rel=1e-8)

    def test_stable(self, make_experiment):
        cfg = make_experiment(
            6, {"r": 10.0, "perturbation": {"family": "sym_stable", "alpha": 1.5}, "function": {"f": "gaussian_bump"}}
        )
        predictions, target = theory_engine.regime_predictions(cfg)
        scale = next(p.value for p in predictions if p.kind == PredictionKind.STABLE_SCALE)
        assert target == {"target": "stable", "alpha": 1.5, "scale": pytest.approx(scale)}
        assert scale == pytest.approx(2 * math.pi * 1.336, rel=1e-3)

    def test_point_mass_d2_has_no_target(self, make_experiment):
        cfg = make_experiment(
            2, {"dimension": 2, "r": 3.0, "perturbation": {"family": "point_mass"}, "function": {"f": "gaussian_bump"}}
        )
        predictions, target = theory_engine.regime_predictions(cfg)
        assert target is None
        assert all(p.kind != PredictionKind.VARIANCE_ASYMPTOTIC for p in predictions)
