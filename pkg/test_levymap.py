"""
test_levymap.py — Unit & Integration Tests
============================================
Run: pytest test_levymap.py -v --tb=short
"""

import json
import math

import numpy as np
import pandas as pd
import pytest


SMALL_GRID = np.linspace(-10.0, 10.0, 41)
TINY_GRID = np.linspace(-5.0, 5.0, 11)
W_POINTS = np.array([0.1, 0.5, 1.0, 2.0, 5.0])


def _gauss():
    from levy_core import exponent_of, make_law
    return exponent_of(make_law("gaussian", mean=0.0, variance=1.0))


def _gamma():
    from levy_core import exponent_of, make_law
    return exponent_of(make_law("gamma", shape=1.0, rate=1.0))


# ══════════════════════════════════════════════════════════════════════════════
#  special_fn.py tests
# ══════════════════════════════════════════════════════════════════════════════

class TestSpecialFunctions:
    def test_ei_is_minus_gamma_zero(self):
        from special_fn import ei, inc_gamma_tail
        for w in np.geomspace(1e-3, 20.0, 15):
            assert abs(ei(-w) + inc_gamma_tail(0.0, w)) <= 1e-12

    def test_ei_series_representation(self):
        from scipy import integrate
        from special_fn import EULER_GAMMA, ei
        for w in np.geomspace(1e-3, 20.0, 9):
            tail, _ = integrate.quad(lambda t: np.expm1(-t) / t, 0.0, w, epsabs=1e-15, epsrel=1e-14, limit=200)
            assert abs(ei(-w) - (EULER_GAMMA + math.log(w) + tail)) <= 1e-12

    def test_inc_gamma_matches_scipy(self):
        from scipy.special import exp1, gamma, gammaincc
        from special_fn import inc_gamma_tail
        for x in (0.05, 0.7, 1.5, 4.0, 12.0):
            assert inc_gamma_tail(0.0, x) == pytest.approx(exp1(x), rel=1e-11)
            for a in (0.5, 1.0, 2.0):
                assert inc_gamma_tail(a, x) == pytest.approx(gammaincc(a, x) * gamma(a), rel=1e-11)

    def test_negative_alpha_recurrence(self):
        from scipy import integrate
        from special_fn import inc_gamma_tail
        ref, _ = integrate.quad(lambda t: t ** -1.5 * math.exp(-t), 0.8, np.inf, epsabs=1e-14)
        assert inc_gamma_tail(-0.5, 0.8) == pytest.approx(ref, rel=1e-9)

    def test_nonpositive_argument_raises(self):
        from errors import InvalidParameterError
        from special_fn import ei, inc_gamma_tail
        with pytest.raises(ValueError):
            inc_gamma_tail(1.0, 0.0)
        with pytest.raises(InvalidParameterError):
            ei(0.5)

    def test_gamma_tail_integral_alpha_one(self):
        from scipy.special import exp1
        from special_fn import example4_time_change
        # Γ(1; s) = e^{-s}, so the integral is Γ(0; t)
        for t in (0.2, 1.0, 3.0):
            assert example4_time_change(1.0, t) == pytest.approx(exp1(t), rel=1e-9)


# ══════════════════════════════════════════════════════════════════════════════
#  quadrature.py tests
# ══════════════════════════════════════════════════════════════════════════════

class TestQuadrature:
    def test_elementwise_half_line(self):
        from quadrature import integrate_vec
        lam = np.array([0.5, 1.0, 4.0])
        out = integrate_vec(lambda t, l: l * np.exp(-l * t) * (1.0 + 1j), 0.0, np.inf, (lam,))
        np.testing.assert_allclose(out, np.full(3, 1.0 + 1j), atol=1e-10)

    def test_empty_elements_are_zero(self):
        from quadrature import integrate_vec
        out = integrate_vec(lambda t: np.ones_like(t), np.array([0.0, 2.0]), np.array([1.0, 1.0]))
        np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-12)

    def test_oscillating_tail_reaches_tolerance(self):
        from quadrature import integrate_vec
        y = np.array([0.5, 10.0, 25.0])
        out = integrate_vec(lambda t, yy: np.exp((-1.0 + 1j * yy) * t), 0.0, np.inf, (y,))
        np.testing.assert_allclose(out, 1.0 / (1.0 - 1j * y), atol=1e-10)

    def test_unreachable_accuracy_raises(self):
        from errors import QuadratureError
        from quadrature import integrate_vec
        with pytest.raises(QuadratureError):
            integrate_vec(lambda t: np.sin(1.0 / t) + 0j, 0.0, 1.0)

    def test_lenient_mode_returns_estimate(self):
        from quadrature import integrate_vec
        out = integrate_vec(lambda t: np.sin(1.0 / t) + 0j, 0.0, 1.0, strict=False)
        assert np.isfinite(out).all()

    def test_divergence_classified(self):
        from errors import DivergentMassError
        from quadrature import quad_scalar
        with pytest.raises(DivergentMassError):
            quad_scalar(lambda t: 1.0 / t, 0.0, 1.0)
        with pytest.raises(DivergentMassError):
            quad_scalar(lambda t: t ** -3.0, 0.0, 1.0)
        with pytest.raises(DivergentMassError):
            quad_scalar(lambda t: 1.0 / (1.0 + t), 0.0, np.inf)

    def test_convergent_scalar_integrals(self):
        from quadrature import quad_scalar
        assert quad_scalar(lambda t: 1.0 / (1.0 + t * t), 0.0, np.inf) == pytest.approx(math.pi / 2, abs=1e-10)
        assert quad_scalar(lambda t: t ** -0.5, 0.0, 1.0) == pytest.approx(2.0, abs=1e-10)


# ══════════════════════════════════════════════════════════════════════════════
#  artifacts.py tests
# ══════════════════════════════════════════════════════════════════════════════

class TestArtifacts:
    def test_csv_is_written_atomically(self, tmp_path):
        from artifacts import exponent_frame, write_csv
        y = np.array([-1.0, 0.0, 1.0])
        path = write_csv(exponent_frame(y, -0.5 * y ** 2 + 0j), tmp_path / "nested" / "phi.csv")
        assert path.exists()
        assert [p.name for p in path.parent.iterdir()] == ["phi.csv"]
        lines = path.read_text().splitlines()
        assert lines[0] == "y,re,im"
        assert lines[1] == "-1,-0.5,0"

    def test_json_header(self, tmp_path):
        from artifacts import write_json
        path = write_json({"value": np.float64(0.25), "grid": np.arange(3)}, tmp_path / "r.json")
        body = json.loads(path.read_text())
        assert body["schema_version"] == 1
        assert "generated_at" in body
        assert body["value"] == 0.25
        assert body["grid"] == [0, 1, 2]


# ══════════════════════════════════════════════════════════════════════════════
#  levy_core.py tests
# ══════════════════════════════════════════════════════════════════════════════

class TestLevyCore:
    def test_gaussian_exponent_exact(self):
        y = SMALL_GRID
        np.testing.assert_allclose(_gauss()(y), -0.5 * y ** 2, atol=1e-15)

    def test_gaussian_with_mean(self):
        from levy_core import exponent_of, make_law
        e = exponent_of(make_law("gaussian", mean=2.0, variance=3.0))
        np.testing.assert_allclose(e(TINY_GRID), 2j * TINY_GRID - 1.5 * TINY_GRID ** 2, atol=1e-14)

    def test_hermitian_symmetry(self):
        e = _gamma()
        y = np.linspace(0.1, 8.0, 17)
        assert np.array_equal(e(-y), np.conj(e(y)))

    def test_exponent_at_zero(self):
        for e in (_gauss(), _gamma()):
            assert e(np.array([0.0]))[0] == 0

    def test_compound_poisson_unit_atom(self):
        from levy_core import exponent_of, make_law
        e = exponent_of(make_law("compound_poisson", atoms=[[1.0, 1.0]]))
        y = TINY_GRID
        np.testing.assert_allclose(e(y), np.exp(1j * y) - 1.0 - 1j * y, atol=1e-14)

    def test_atom_outside_unit_ball_not_compensated(self):
        from levy_core import exponent_of, make_law
        e = exponent_of(make_law("compound_poisson", atoms=[[2.0, 0.5]]))
        y = TINY_GRID
        np.testing.assert_allclose(e(y), 0.5 * (np.exp(2j * y) - 1.0), atol=1e-14)

    def test_gamma_closed_form_vs_quadrature(self):
        from levy_core import exponent_of, make_law
        law = make_law("gamma", shape=1.5, rate=2.0)
        y = np.linspace(-6.0, 6.0, 13)
        np.testing.assert_allclose(exponent_of(law, "quadrature")(y), exponent_of(law)(y), atol=1e-7)

    def test_cp_exponential_closed_form_vs_quadrature(self):
        from levy_core import exponent_of, make_law
        law = make_law("cp_exponential", rate=1.0, theta=2.0)
        y = np.linspace(-6.0, 6.0, 13)
        np.testing.assert_allclose(exponent_of(law, "quadrature")(y), exponent_of(law)(y), atol=1e-7)

    def test_cauchy_exponent(self):
        from levy_core import exponent_of, make_law
        e = exponent_of(make_law("stable", alpha=1.0, scale=0.5))
        np.testing.assert_allclose(e(TINY_GRID), -math.pi * 0.5 * np.abs(TINY_GRID), atol=1e-13)

    def test_stable_index_two_diverges(self):
        from errors import SpectralDivergenceError
        from levy_core import make_law
        with pytest.raises(SpectralDivergenceError):
            make_law("stable", alpha=2.0)

    def test_overflowing_density_is_divergent(self):
        from errors import SpectralDivergenceError
        from levy_core import SpectralMeasure
        with pytest.raises(SpectralDivergenceError):
            SpectralMeasure.from_density(lambda x: x ** -3.0, (0.0, 1.0)).validate()

    def test_infinite_image_mass_is_not_compound_poisson(self):
        from integral_map import transform_triple
        from levy_core import make_law
        from mapping_catalog import lmap
        image = transform_triple(lmap().spec, make_law("compound_poisson", atoms=[[1.0, 1.0]]))
        assert image.spectral.total_mass() == math.inf
        assert not image.spectral.is_compound_poisson()

    def test_finite_density_mass(self):
        from levy_core import SpectralMeasure
        m = SpectralMeasure.from_density(lambda x: np.exp(-x), (0.0, math.inf))
        assert m.total_mass() == pytest.approx(1.0, abs=1e-10)
        assert m.is_compound_poisson()

    def test_unknown_family(self):
        from errors import UnsupportedFamilyError
        from levy_core import make_law
        with pytest.raises(UnsupportedFamilyError):
            make_law("poisson_gamma_mix")

    def test_negative_variance_rejected(self):
        from errors import InvalidParameterError
        from levy_core import make_law
        with pytest.raises(InvalidParameterError):
            make_law("gaussian", variance=-1.0)

    def test_semigroup_operations(self):
        from levy_core import conv_power, convolve, dilate, negate_law
        g, gam = _gauss(), _gamma()
        y = TINY_GRID
        np.testing.assert_allclose(convolve(g, gam)(y), g(y) + gam(y), atol=1e-14)
        np.testing.assert_allclose(conv_power(gam, 2.5)(y), 2.5 * gam(y), atol=1e-14)
        np.testing.assert_allclose(dilate(gam, 3.0)(y), gam(3.0 * y), atol=1e-14)
        np.testing.assert_allclose(negate_law(gam)(y), np.conj(gam(y)), atol=1e-14)

    def test_semigroup_preconditions(self):
        from levy_core import conv_power, dilate
        with pytest.raises(ValueError):
            conv_power(_gauss(), 0.0)
        with pytest.raises(ValueError):
            dilate(_gauss(), 0.0)

    def test_reflected_triple(self):
        from levy_core import exponent_of, make_law
        law = make_law("gamma", shape=1.0, rate=1.0)
        y = TINY_GRID
        np.testing.assert_allclose(exponent_of(law.reflected())(y), exponent_of(law)(-y), atol=1e-14)

    def test_id_log_membership(self):
        from levy_core import check_id_log, make_law
        assert check_id_log(make_law("gamma").spectral)
        assert check_id_log(make_law("stable", alpha=1.0).spectral)
        assert check_id_log(make_law("compound_poisson", atoms=[[5.0, 1.0]]).spectral)
        assert not check_id_log(make_law("log_tail", rate=1.0).spectral)


# ══════════════════════════════════════════════════════════════════════════════
#  measure_alg.py tests
# ══════════════════════════════════════════════════════════════════════════════

class TestMeasureAlgebra:
    def _thorin_pair_inputs(self):
        from measure_alg import INF, HalfLineMeasure, KernelFunction, TimeChange
        kernels = [KernelFunction.of("identity"), KernelFunction.of("exp_decay")]
        measures = [TimeChange.of("one_minus_exp").measure(), HalfLineMeasure.lebesgue(0.0, INF)]
        return kernels, measures

    def test_thorin_pair_closed_form(self):
        from measure_alg import pushforward
        image = pushforward(*self._thorin_pair_inputs())
        assert image.origin[0] == "inc_gamma_tail"
        np.testing.assert_allclose(image.density_at(W_POINTS), np.exp(-W_POINTS) / W_POINTS, rtol=1e-13)

    def test_thorin_pair_numeric_density_and_tail(self):
        from scipy.special import exp1
        from measure_alg import pushforward, tail
        image = pushforward(*self._thorin_pair_inputs(), closed_form=False)
        assert image.infinite_near_lo
        np.testing.assert_allclose(image.density_at(W_POINTS), np.exp(-W_POINTS) / W_POINTS, rtol=1e-6)
        np.testing.assert_allclose(tail(image, W_POINTS), exp1(W_POINTS), atol=1e-8)

    def test_cdf_of_infinite_measure_raises(self):
        from errors import InfiniteMassError
        from measure_alg import TimeChange, cdf
        with pytest.raises(InfiniteMassError):
            cdf(TimeChange.of("inc_gamma_tail", alpha=0.0).measure(), 1.0)

    def test_double_power_density(self):
        from measure_alg import HalfLineMeasure, KernelFunction, pushforward
        w = np.linspace(0.05, 0.95, 10)
        unit = HalfLineMeasure.lebesgue(0.0, 1.0)
        kernels = [KernelFunction.of("power", p=1.0), KernelFunction.of("power", p=0.5)]
        closed = pushforward(kernels, [unit, unit])
        numeric = pushforward(kernels, [unit, unit], closed_form=False)
        np.testing.assert_allclose(closed.density_at(w), 2.0 * (1.0 - w), atol=1e-12)
        np.testing.assert_allclose(numeric.density_at(w), 2.0 * (1.0 - w), atol=1e-8)

    def test_pushforward_rejects_negative_image(self):
        from errors import ImageNotPositiveError
        from measure_alg import HalfLineMeasure, KernelFunction, pushforward
        with pytest.raises(ImageNotPositiveError):
            pushforward([KernelFunction.of("negated")], [HalfLineMeasure.lebesgue(0.0, 1.0)])

    def test_constant_kernel_image_is_atom(self):
        from measure_alg import HalfLineMeasure, KernelFunction, pushforward
        image = pushforward([KernelFunction.of("constant", c=2.0)], [HalfLineMeasure.lebesgue(0.0, 3.0)])
        assert len(image.atoms) == 1
        x, m = image.atoms[0]
        assert x == pytest.approx(2.0)
        assert m == pytest.approx(3.0)

    def test_product_of_atoms(self):
        from measure_alg import HalfLineMeasure, KernelFunction, product_measure, pushforward
        one, two = HalfLineMeasure.from_atoms([(1.0, 1.0)]), HalfLineMeasure.from_atoms([(2.0, 1.0)])
        assert product_measure([one, two]).atoms == [((1.0, 2.0), 1.0)]
        image = pushforward([KernelFunction.of("power", p=2.0), KernelFunction.of("identity")],
                            [HalfLineMeasure.from_atoms([(3.0, 0.5)]), two])
        assert image.density is None
        assert image.atoms == ((18.0, 0.5),)

    def test_product_integrals(self):
        from errors import InvalidParameterError
        from measure_alg import INF, HalfLineMeasure, TimeChange, product_measure
        unit = HalfLineMeasure.lebesgue(0.0, 1.0)
        assert product_measure([unit, unit]).integrate(lambda t, s: 1.0) == pytest.approx(1.0, abs=1e-12)
        prod = product_measure([HalfLineMeasure.lebesgue(0.0, INF), TimeChange.of("one_minus_exp").measure()])
        assert prod.integrate_separable([lambda t: math.exp(-t), lambda s: 1.0]) == pytest.approx(1.0, abs=1e-10)
        assert prod.integrate(lambda t, s: math.exp(-t)) == pytest.approx(1.0, abs=1e-8)
        assert prod.atoms == []
        with pytest.raises(InvalidParameterError):
            prod.integrate_separable([lambda t: 1.0])
        with pytest.raises(InvalidParameterError):
            product_measure([])

    def _exponential_pair(self):
        from measure_alg import KernelFunction, TimeChange
        exp_law = TimeChange.of("one_minus_exp").measure()
        return ([KernelFunction.of("identity"), KernelFunction.of("power", p=0.5)], [exp_law, exp_law])

    def test_pushforward_order_is_immaterial(self):
        from measure_alg import cdf, pushforward
        h, rho = self._exponential_pair()
        forward = pushforward(h, rho, closed_form=False)
        backward = pushforward(h[::-1], rho[::-1], closed_form=False)
        t = np.array([0.05, 0.3, 1.0, 2.5, 6.0])
        assert np.max(np.abs(cdf(forward, t) - cdf(backward, t))) <= 1e-8

    def test_pushforward_preserves_mass(self):
        from measure_alg import HalfLineMeasure, KernelFunction, pushforward
        single = pushforward([KernelFunction.of("power", p=2.0)], [HalfLineMeasure.lebesgue(0.0, 3.0)])
        assert single.total_mass() == pytest.approx(3.0, abs=1e-8)
        h, rho = self._exponential_pair()
        assert pushforward(h, rho, closed_form=False).total_mass() == pytest.approx(1.0, abs=1e-8)

    def test_from_atoms_support(self):
        from measure_alg import HalfLineMeasure, cdf, tail
        m = HalfLineMeasure.from_atoms([(0.5, 1.0), (2.0, 3.0)])
        assert m.support == (0.0, 2.0)
        assert cdf(m, 1.0) == pytest.approx(1.0)
        assert tail(m, 1.0) == pytest.approx(3.0)

    def test_kernel_sign(self):
        from errors import ImageNotPositiveError
        from measure_alg import KernelFunction
        assert KernelFunction.of("negated").sign_on((0.0, 1.0)) == -1
        assert KernelFunction.of("exp_decay").sign_on((0.0, math.inf)) == 1
        with pytest.raises(ImageNotPositiveError):
            KernelFunction.of("identity").sign_on((-1.0, 1.0))

    def test_time_change_directions(self):
        from measure_alg import DOWN, UP, TimeChange
        assert TimeChange.of("one_minus_exp").direction == UP
        assert TimeChange.of("log_power_tail", beta=1.0).direction == DOWN

    def test_tabulated_time_change(self):
        from errors import InvalidParameterError
        from measure_alg import TimeChange
        t = np.linspace(0.0, 1.0, 11)
        tc = TimeChange.tabulated(t, t ** 2)
        assert float(tc.value(np.array(0.5))) == pytest.approx(0.25, abs=1e-3)
        with pytest.raises(InvalidParameterError):
            TimeChange.tabulated(t, np.sin(6.0 * t))

    def test_tabulate_columns(self):
        from measure_alg import TimeChange, tabulate
        finite = tabulate(TimeChange.of("one_minus_exp").measure(), 0.1, 5.0, 20)
        infinite = tabulate(TimeChange.of("inc_gamma_tail", alpha=0.0).measure(), 0.1, 5.0, 20)
        assert list(finite.columns) == ["t", "density", "cdf"]
        assert list(infinite.columns) == ["t", "density", "tail"]
        np.testing.assert_allclose(finite["cdf"], -np.expm1(-finite["t"]), atol=1e-14)

    def test_product_time_change(self):
        from measure_alg import KernelFunction, SampleableLaw, product_time_change
        est = product_time_change(
            [SampleableLaw("exponential"), SampleableLaw("exponential")],
            [KernelFunction.of("exp_decay"), KernelFunction.of("identity")],
            n_samples=1_000_000, seed=11,
        )
        assert est.sup_distance <= 0.005
        assert est.time_change.direction == "non-decreasing"

    def test_unknown_sampleable_law(self):
        from measure_alg import SampleableLaw
        with pytest.raises(ValueError):
            SampleableLaw("weibull").sample(np.random.default_rng(0), 3)


# ══════════════════════════════════════════════════════════════════════════════
#  integral_map.py tests
# ══════════════════════════════════════════════════════════════════════════════

class TestIntegralMap:
    def test_gaussian_under_lmap(self):
        from integral_map import apply
        from mapping_catalog import lmap
        y = SMALL_GRID
        np.testing.assert_allclose(apply(lmap().spec, _gauss())(y), -0.25 * y ** 2, atol=1e-9)

    def test_gaussian_under_kexp(self):
        from integral_map import apply
        from mapping_catalog import kexp
        y = SMALL_GRID
        np.testing.assert_allclose(apply(kexp().spec, _gauss())(y), -(y ** 2), atol=1e-8)

    def test_identity_mapping_is_identity(self):
        from integral_map import apply
        from mapping_catalog import identity_mapping
        e = _gamma()
        np.testing.assert_allclose(apply(identity_mapping().spec, e)(TINY_GRID), e(TINY_GRID), atol=1e-10)

    def test_lmap_outside_domain(self):
        from errors import DomainViolationError
        from integral_map import apply, domain_check
        from levy_core import exponent_of, make_law
        from mapping_catalog import lmap
        e = exponent_of(make_law("log_tail", rate=1.0))
        report = domain_check(lmap().spec, e)
        assert not report.finiteness
        assert report.log_moment_required
        assert report.log_moment_holds is False
        with pytest.raises(DomainViolationError):
            apply(lmap().spec, e)

    def test_lmap_accepts_cauchy(self):
        from integral_map import domain_check
        from levy_core import exponent_of, make_law
        from mapping_catalog import lmap
        report = domain_check(lmap().spec, exponent_of(make_law("stable", alpha=1.0)))
        assert report.finiteness
        assert report.log_moment_holds is True
        assert "in domain" in str(report)

    @pytest.mark.parametrize("x", [3.0, 5.0])
    def test_kexp_needs_no_log_moment(self, x):
        from integral_map import domain_check
        from levy_core import exponent_of, make_law
        from mapping_catalog import kexp
        report = domain_check(kexp().spec, exponent_of(make_law("compound_poisson", atoms=[[x, 1.0]])))
        assert report.finiteness
        assert not report.log_moment_required

    def test_domain_check_lets_quadrature_failures_through(self):
        from errors import QuadratureError
        from integral_map import apply, domain_check
        from levy_core import LevyExponent
        from mapping_catalog import kexp

        def broken(y):
            raise QuadratureError("no convergence")

        e = LevyExponent(fn=broken, provenance=("broken",))
        with pytest.raises(QuadratureError):
            domain_check(kexp().spec, e)
        with pytest.raises(QuadratureError):
            apply(kexp().spec, e)

    def test_repeated_calls_are_memoised(self):
        from integral_map import apply, domain_check
        from mapping_catalog import kexp
        e, spec = _gamma(), kexp().spec
        assert domain_check(spec, e) is domain_check(spec, e)
        assert apply(spec, e) is apply(spec, e, check=False)
        assert apply(spec, e) is not apply(spec, _gamma())

    def test_compose_kexp_lmap(self):
        from integral_map import apply, compose
        from mapping_catalog import kexp, lmap
        from measure_alg import DOWN
        spec = compose([kexp().spec, lmap().spec])
        assert spec.time_change.form == "inc_gamma_tail"
        assert spec.time_change.direction == DOWN
        assert spec.negate_input
        y = SMALL_GRID
        np.testing.assert_allclose(apply(spec, _gauss())(y), -0.5 * y ** 2, atol=1e-8)

    def test_compose_edge_cases(self):
        from errors import DomainViolationError
        from integral_map import compose
        from mapping_catalog import kexp
        spec = kexp().spec
        assert compose([spec]) is spec
        with pytest.raises(DomainViolationError):
            compose([])

    def test_compose_matches_nested_on_finite_intervals(self):
        from integral_map import apply, compose
        from levy_core import exponent_of, make_law
        from mapping_catalog import example2_third, power_unit
        rng = np.random.default_rng(3)
        y = np.linspace(-6.0, 6.0, 13)

        def draw():
            if rng.random() < 0.5:
                return power_unit(float(rng.uniform(0.3, 3.0)))
            return example2_third(float(rng.uniform(0.5, 2.0)))

        for _ in range(10):
            f1, f2 = draw(), draw()
            x, m = rng.uniform(0.2, 2.5), rng.uniform(0.5, 2.0)
            e = exponent_of(make_law("compound_poisson", atoms=[[x, m]]))
            nested = apply(f1, apply(f2, e, check=False), check=False)(y)
            swapped = apply(f2, apply(f1, e, check=False), check=False)(y)
            composed = apply(compose([f1, f2]), e, check=False)(y)
            assert np.max(np.abs(nested - composed)) <= 1e-6, (f1.label, f2.label)
            assert np.max(np.abs(nested - swapped)) <= 1e-6, (f1.label, f2.label)

    @pytest.mark.parametrize("mapping", ["kexp", "lmap"])
    @pytest.mark.parametrize("law", ["gaussian", "gamma"])
    def test_algebraic_properties(self, mapping, law):
        from integral_map import verify_conv_power, verify_dilation, verify_homomorphism
        from mapping_catalog import catalog_exponent, named_mapping
        spec, e = named_mapping(mapping), catalog_exponent(law)
        assert verify_homomorphism(spec, e, catalog_exponent("gamma"), SMALL_GRID) <= 1e-8
        for s in (0.5, 2.0, 3.0):
            assert verify_conv_power(spec, e, s, SMALL_GRID) <= 1e-8, s
        for u in (-1.0, 0.5, 2.0):
            assert verify_dilation(spec, e, u, SMALL_GRID) <= 1e-8, u

    def test_transform_triple_gaussian(self):
        from integral_map import transform_triple
        from levy_core import make_law
        from mapping_catalog import kexp, lmap
        law = make_law("gaussian", mean=0.0, variance=1.0)
        assert transform_triple(kexp().spec, law).gauss_var == pytest.approx(2.0, rel=1e-9)
        assert transform_triple(lmap().spec, law).gauss_var == pytest.approx(0.5, rel=1e-9)

    @pytest.mark.parametrize("mapping", ["kexp", "lmap", "example2_composed"])
    @pytest.mark.parametrize("family, params", [
        ("gaussian", {"mean": 0.5, "variance": 1.0}),
        ("compound_poisson", {"atoms": [[1.0, 1.0]]}),
    ])
    def test_transform_triple_matches_apply(self, mapping, family, params):
        from integral_map import apply, transform_triple
        from levy_core import exponent_of, make_law
        from mapping_catalog import named_mapping
        spec = named_mapping(mapping, 1.0 if mapping.startswith("example") else None)
        law = make_law(family, **params)
        y = np.linspace(-5.0, 5.0, 11)
        image = exponent_of(transform_triple(spec, law))(y)
        np.testing.assert_allclose(image, apply(spec, exponent_of(law))(y), atol=1e-6)

    def test_transform_triple_rejects_gamma(self):
        from errors import UnsupportedTripleError
        from integral_map import transform_triple
        from levy_core import make_law
        from mapping_catalog import kexp
        with pytest.raises(UnsupportedTripleError):
            transform_triple(kexp().spec, make_law("gamma"))

    def test_continuity_probe(self):
        from integral_map import continuity_probe
        from mapping_catalog import lmap
        report = continuity_probe(lmap().spec, levels=(0, 1, 2), grid=np.linspace(-5.0, 5.0, 11))
        d = report.table["distance"].to_numpy()
        assert d[-1] < d[0]


# ══════════════════════════════════════════════════════════════════════════════
#  mapping_catalog.py tests
# ══════════════════════════════════════════════════════════════════════════════

class TestMappingCatalog:
    def test_example1_gaussian(self):
        from mapping_catalog import check_example1
        res = check_example1(_gauss(), SMALL_GRID, law="gaussian")
        assert res.passed
        np.testing.assert_allclose(res.forms["thorin"], -0.5 * SMALL_GRID ** 2, atol=1e-8)

    def test_example1_compound_poisson(self):
        from levy_core import exponent_of, make_law
        from mapping_catalog import check_example1
        e = exponent_of(make_law("compound_poisson", atoms=[[1.0, 1.0]]))
        assert check_example1(e, SMALL_GRID).passed

    @pytest.mark.parametrize("law", ["gaussian", "shift", "compound_poisson"])
    def test_kexp_alt(self, law):
        from config import SUITE_TOLERANCES
        from mapping_catalog import catalog_exponent, check_kexp_alt
        res = check_kexp_alt(catalog_exponent(law), law=law)
        assert res.grid.size == 201
        assert res.tolerance == SUITE_TOLERANCES["kexp_alt"] == 1e-8
        assert res.passed, str(res)

    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
    def test_example2_three_forms(self, beta):
        from mapping_catalog import check_example2
        res = check_example2(beta, _gauss(), SMALL_GRID)
        assert res.passed, str(res)
        assert set(res.forms) == {"nested", "swapped", "composed", "single", "third"}

    def test_example3(self):
        from mapping_catalog import check_example3
        assert check_example3(1.0, _gauss(), SMALL_GRID).passed
        assert check_example3(2.0, _gamma(), SMALL_GRID).passed

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_example4(self, alpha):
        from mapping_catalog import check_example4
        assert check_example4(alpha, _gauss(), SMALL_GRID).passed
        assert check_example4(alpha, _gamma(), SMALL_GRID).passed

    def test_thorin_witness(self):
        from mapping_catalog import thorin_factorization_witness
        res = thorin_factorization_witness(_gamma(), SMALL_GRID)
        assert res.passed
        assert set(res.witnesses) == {"kexp_image", "lmap_image"}

    def test_thorin_witness_reuses_example1_values(self):
        from mapping_catalog import (
            catalog_exponent, check_example1, clear_caches, thorin_factorization_witness,
        )
        clear_caches()
        e = catalog_exponent("cp_exponential")
        first = check_example1(e, SMALL_GRID)
        second = thorin_factorization_witness(e, SMALL_GRID)
        assert second.forms["lmap(kexp)"] is first.forms["lmap∘kexp"]
        assert second.forms["kexp(lmap)"] is first.forms["kexp∘lmap"]
        assert first.passed and second.passed

    def test_failed_check_writes_error_curve(self, tmp_path):
        from mapping_catalog import check_kexp_alt
        res = check_kexp_alt(_gauss(), TINY_GRID, tol=-1.0, out_dir=tmp_path, law="gaussian")
        assert not res.passed
        assert len(res.artifacts) == 1
        frame = pd.read_csv(res.artifacts[0])
        assert list(frame.columns) == ["y", "kexp|kexp_alt"]
        assert len(frame) == TINY_GRID.size

    def test_run_suite(self):
        from mapping_catalog import run_suite
        results = run_suite("kexp_alt", grid=TINY_GRID, threads=2)
        assert len(results) == 3
        assert all(r.passed for r in results)
        assert [r.law for r in results] == ["gaussian", "shift", "compound_poisson"]
        assert all(r.tolerance == 1e-8 for r in results)

    def test_suite_tolerances(self):
        from config import SUITE_TOLERANCES
        from mapping_catalog import SUITES, run_suite
        assert set(SUITE_TOLERANCES) == set(SUITES)
        assert SUITE_TOLERANCES["algebra"] == SUITE_TOLERANCES["example2"] == 1e-8
        assert SUITE_TOLERANCES["example1"] == SUITE_TOLERANCES["thorin"] == 1e-6
        loose = run_suite("kexp_alt", grid=TINY_GRID, tol=1e-3, threads=1)
        assert all(r.tolerance == 1e-3 for r in loose)

    def test_example1_suite_on_default_grid(self):
        from mapping_catalog import run_suite
        results = run_suite("example1", threads=2)
        assert [r.law for r in results] == ["gaussian", "gamma", "compound_poisson"]
        for r in results:
            assert r.grid.size == 201
            assert r.passed, str(r)
        np.testing.assert_allclose(results[0].forms["thorin"], -0.5 * results[0].grid ** 2, atol=1e-8)

    def test_unknown_suite(self):
        from errors import ConfigError
        from mapping_catalog import run_suite
        with pytest.raises(ConfigError):
            run_suite("example9")

    def test_named_mapping_lookup(self):
        from errors import ConfigError
        from mapping_catalog import named_mapping
        assert named_mapping("lmap").kernel.form == "exp_decay"
        assert named_mapping("example2_composed", 2.0).time_change.form == "double_power"
        with pytest.raises(ConfigError):
            named_mapping("power")
        with pytest.raises(ConfigError):
            named_mapping("kexp_squared")


# ══════════════════════════════════════════════════════════════════════════════
#  path_sim.py tests
# ══════════════════════════════════════════════════════════════════════════════

class TestPathSim:
    def test_no_sampler_for_stable(self):
        from errors import UnsupportedFamilyError
        from levy_core import make_law
        from path_sim import increment_sampler
        with pytest.raises(UnsupportedFamilyError):
            increment_sampler(make_law("stable", alpha=1.0))
        with pytest.raises(UnsupportedFamilyError):
            increment_sampler(make_law("log_tail"))

    def test_ibp_equals_right_riemann(self):
        from path_sim import ibp_sum, right_riemann_sum
        rng = np.random.default_rng(5)
        h = np.sort(rng.uniform(0.0, 3.0, 65))
        inc = rng.normal(size=(8, 64))
        np.testing.assert_allclose(ibp_sum(h, inc), right_riemann_sum(h, inc), atol=1e-12)

    def test_lmap_truncation(self):
        from mapping_catalog import lmap
        from path_sim import make_grid
        grid = make_grid(lmap().spec)
        assert grid.truncation == 16.0
        assert grid.n_cells == 4096
        assert make_grid(lmap().spec, level=1).n_cells == 4 * 4096

    def test_thorin_grid_is_geometric(self):
        from mapping_catalog import thorin
        from path_sim import make_grid
        grid = make_grid(thorin().spec)
        assert grid.geometric
        assert 0.0 < grid.lower < 1e-5

    def test_seed_determinism(self):
        from levy_core import make_law
        from mapping_catalog import kexp
        from path_sim import simulate_integral
        law = make_law("gamma", shape=1.0, rate=1.0)
        a = simulate_integral(kexp().spec, law, n_paths=300, seed=9, y=TINY_GRID, threads=1)
        b = simulate_integral(kexp().spec, law, n_paths=300, seed=9, y=TINY_GRID, threads=2)
        assert np.array_equal(a.samples, b.samples)

    def test_zero_law(self):
        from levy_core import make_law
        from mapping_catalog import kexp
        from path_sim import simulate_integral
        sim = simulate_integral(kexp().spec, make_law("shift", c=0.0), n_paths=50, seed=1, y=TINY_GRID)
        assert np.all(sim.samples == 0.0)
        assert np.all(sim.ecf == 1.0)

    def test_ecf_normalised(self):
        from levy_core import make_law
        from mapping_catalog import lmap
        from path_sim import simulate_integral
        y = np.linspace(-4.0, 4.0, 9)
        sim = simulate_integral(lmap().spec, make_law("gaussian"), n_paths=500, seed=2, y=y)
        assert sim.ecf[4] == 1.0
        assert np.all(np.abs(sim.ecf) <= 1.0)

    def test_drift_converges_under_refinement(self):
        from levy_core import make_law
        from mapping_catalog import kexp
        from path_sim import refine_study
        study = refine_study(kexp().spec, make_law("shift", c=1.0), levels=(0, 3), n_paths=4,
                             seed=1, y=TINY_GRID)
        table = study.table
        assert list(table["level"]) == [0, 3]
        assert table["model_mean"].iloc[0] == pytest.approx(1.0, abs=1e-6)
        assert table["mean_error"].iloc[1] <= 1e-3
        assert table["mean_error"].iloc[1] < table["mean_error"].iloc[0]

    def test_single_level_study(self):
        from levy_core import make_law
        from mapping_catalog import lmap
        from path_sim import refine_study
        study = refine_study(lmap().spec, make_law("shift", c=1.0), levels=(0,), n_paths=4, y=TINY_GRID)
        assert len(study.table) == 1
        assert study.monotone

    def test_gaussian_under_kexp(self):
        from integral_map import apply
        from mapping_catalog import kexp
        from path_sim import ecf_compare, simulate_integral
        from levy_core import make_law
        spec = kexp().spec
        sim = simulate_integral(spec, make_law("gaussian"), n_paths=20_000, seed=20140501)
        assert sim.variance == pytest.approx(2.0, rel=0.05)
        report = ecf_compare(sim, apply(spec, _gauss()))
        assert report.passed, str(report)

    def test_compound_poisson_under_lmap(self):
        from integral_map import apply
        from levy_core import exponent_of, make_law
        from mapping_catalog import lmap
        from path_sim import ecf_compare, simulate_integral
        law = make_law("compound_poisson", atoms=[[1.0, 1.0]])
        spec = lmap().spec
        y = np.linspace(-3.0, 3.0, 21)
        sim = simulate_integral(spec, law, n_paths=20_000, seed=4, y=y)
        assert ecf_compare(sim, apply(spec, exponent_of(law))).passed

    def test_time_scale_matches_convolution_power(self):
        from levy_core import make_law
        from mapping_catalog import kexp
        from path_sim import ecf_agreement, simulate_integral
        spec = kexp().spec
        y = np.linspace(-3.0, 3.0, 21)
        a = simulate_integral(spec.with_time_scale(2.0), make_law("gaussian", variance=1.0),
                              n_paths=5_000, seed=1, y=y)
        b = simulate_integral(spec, make_law("gaussian", variance=2.0), n_paths=5_000, seed=2, y=y)
        assert ecf_agreement(a, b) >= 0.95

    def test_confidence_bands(self):
        from path_sim import confidence_band
        ecf = np.array([1.0 + 0j, 0.5 + 0j])
        np.testing.assert_allclose(confidence_band(ecf, 400), [0.2, 0.2])
        clt = confidence_band(ecf, 400, "clt")
        assert clt[0] == 0.0
        assert clt[1] > 0.0
        with pytest.raises(ValueError):
            confidence_band(ecf, 400, "wide")


# ══════════════════════════════════════════════════════════════════════════════
#  run_config.py tests
# ══════════════════════════════════════════════════════════════════════════════

class TestRunConfig:
    def _write(self, tmp_path, payload):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(payload))
        return path

    def test_defaults(self):
        from config import DEFAULT_SEED
        from run_config import load_config
        cfg = load_config()
        assert cfg.seed == DEFAULT_SEED
        assert cfg.law is None
        assert cfg.mappings == []

    def test_invalid_family_field_path(self, tmp_path):
        from errors import ConfigError
        from run_config import load_config
        path = self._write(tmp_path, {"law": {"family": "poisson_gamma_mix"}})
        with pytest.raises(ConfigError) as exc:
            load_config(path)
        assert exc.value.field_path == "law.family"
        assert exc.value.exit_code == 2

    def test_mapping_needs_one_form(self, tmp_path):
        from errors import ConfigError
        from run_config import load_config
        path = self._write(tmp_path, {"mappings": [{"named": "kexp"}, {"param": 1.0}]})
        with pytest.raises(ConfigError) as exc:
            load_config(path)
        assert exc.value.field_path == "mappings.1"

    def test_schema_version(self, tmp_path):
        from errors import ConfigError
        from run_config import load_config
        with pytest.raises(ConfigError) as exc:
            load_config(self._write(tmp_path, {"schema_version": 2}))
        assert exc.value.field_path == "schema_version"

    def test_bad_json(self, tmp_path):
        from errors import ConfigError
        from run_config import load_config
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_overrides(self, tmp_path):
        from run_config import load_config
        path = self._write(tmp_path, {"seed": 1, "n_paths": 10})
        cfg = load_config(path, seed=7, grid="-5:5:11", n_paths=None)
        assert cfg.seed == 7
        assert cfg.n_paths == 10
        assert cfg.grid.count == 11
        np.testing.assert_allclose(cfg.grid.array(), TINY_GRID)

    def test_build_objects(self, tmp_path):
        from run_config import build_law, build_mappings, load_config
        path = self._write(tmp_path, {
            "law": {"family": "gamma", "params": {"shape": 2.0, "rate": 1.0}},
            "mappings": [
                {"named": "lmap"},
                {"kernel": {"form": "power", "params": {"p": 2.0}},
                 "time_change": {"form": "identity", "interval": [0.0, 1.0]}, "name": "square"},
            ],
        })
        cfg = load_config(path)
        assert build_law(cfg).params["shape"] == 2.0
        specs = build_mappings(cfg)
        assert specs[0].kernel.form == "exp_decay"
        assert specs[1].label == "square"

    def test_bad_kernel_parameter(self, tmp_path):
        from errors import ConfigError
        from run_config import build_mappings, load_config
        path = self._write(tmp_path, {"mappings": [
            {"kernel": {"form": "power", "params": {"p": -1.0}},
             "time_change": {"form": "identity"}},
        ]})
        with pytest.raises(ConfigError) as exc:
            build_mappings(load_config(path))
        assert exc.value.field_path == "mappings.0"


# ══════════════════════════════════════════════════════════════════════════════
#  cli_app.py tests
# ══════════════════════════════════════════════════════════════════════════════

class TestCli:
    def _config(self, tmp_path, payload):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(payload))
        return str(path)

    def test_exponent_gaussian_lmap(self, tmp_path):
        from cli_app import main
        cfg = self._config(tmp_path, {"law": {"family": "gaussian"}, "mappings": [{"named": "lmap"}]})
        out = tmp_path / "out"
        assert main(["exponent", "--config", cfg, "--out", str(out), "--grid=-5:5:11"]) == 0
        frame = pd.read_csv(out / "exponent.csv")
        assert list(frame.columns) == ["y", "re", "im"]
        np.testing.assert_allclose(frame["re"], -0.25 * frame["y"] ** 2, atol=1e-9)
        assert json.loads((out / "exponent.json").read_text())["schema_version"] == 1

    def test_exponent_without_mapping(self, tmp_path):
        from cli_app import main
        cfg = self._config(tmp_path, {"law": {"family": "gaussian"}})
        out = tmp_path / "out"
        assert main(["exponent", "--config", cfg, "--out", str(out)]) == 0
        frame = pd.read_csv(out / "exponent.csv")
        np.testing.assert_allclose(frame["re"], -0.5 * frame["y"] ** 2, atol=1e-12)

    def test_invalid_family_exit_code(self, tmp_path):
        from cli_app import main
        cfg = self._config(tmp_path, {"law": {"family": "nonsense"}})
        assert main(["exponent", "--config", cfg, "--out", str(tmp_path)]) == 2

    def test_domain_violation_exit_code(self, tmp_path):
        from cli_app import main
        cfg = self._config(tmp_path, {"law": {"family": "log_tail"}, "mappings": [{"named": "lmap"}]})
        assert main(["exponent", "--config", cfg, "--out", str(tmp_path)]) == 3

    def test_compose_kexp_lmap(self, tmp_path):
        from scipy.special import exp1
        from cli_app import main
        cfg = self._config(tmp_path, {"mappings": [{"named": "kexp"}, {"named": "lmap"}]})
        out = tmp_path / "out"
        assert main(["compose", "--config", cfg, "--out", str(out)]) == 0
        table = pd.read_csv(out / "compose_measure.csv")
        np.testing.assert_allclose(table["tail"], exp1(table["t"]), rtol=1e-10)
        report = json.loads((out / "compose.json").read_text())
        assert report["composed"]["negate_input"] is True

    def test_verify_suite(self, tmp_path):
        from cli_app import main
        out = tmp_path / "out"
        assert main(["verify", "--suite", "kexp_alt", "--grid=-5:5:11", "--out", str(out)]) == 0
        report = json.loads((out / "verify.json").read_text())
        assert report["passed"] is True
        assert len(report["checks"]) == 3

    def test_verify_unknown_suite(self, tmp_path):
        from cli_app import main
        assert main(["verify", "--suite", "nope", "--out", str(tmp_path)]) == 2

    def test_simulate_drift(self, tmp_path):
        from cli_app import main
        cfg = self._config(tmp_path, {"law": {"family": "shift", "params": {"c": 1.0}},
                                      "mappings": [{"named": "kexp"}]})
        out1, out2 = tmp_path / "a", tmp_path / "b"
        args = ["simulate", "--config", cfg, "--paths", "8", "--seed", "3", "--grid=-5:5:11"]
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        report = json.loads((out1 / "simulate.json").read_text())
        assert report["mean"] == pytest.approx(1.0, abs=1e-2)
        assert (out1 / "samples.csv").read_bytes() == (out2 / "samples.csv").read_bytes()

    def test_simulate_stable_unsupported(self, tmp_path):
        from cli_app import main
        cfg = self._config(tmp_path, {"law": {"family": "stable", "params": {"alpha": 1.0}},
                                      "mappings": [{"named": "kexp"}]})
        assert main(["simulate", "--config", cfg, "--paths", "8", "--out", str(tmp_path)]) == 3
