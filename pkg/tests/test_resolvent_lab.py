import math

import pytest
from scipy import integrate

from skewwalk.distributions import PerturbationLaw, norming_a
from skewwalk.errors import ModulusBoundError
from skewwalk.resolvent_lab import (
    ETA_EXACT_RANGE,
    EtaStarMeasure,
    _eta_expectation,
    _eta_green,
    compact_bump,
    constant_one,
    discrete_eta_ratio,
    eta_star_integral,
    fit_hitting_defect_constant,
    gaussian_bump,
    holding_jumping_resolvent,
    holding_jumping_resolvent_at_zero,
    indicator_outside,
    killed_resolvent_V,
    odd_power_cap,
    power_cap,
    resolvent_splitting_check,
    skew_resolvent_at_zero,
    stable_killed_resolvent,
    stable_v1_eta_star,
    tail_functional,
)
from skewwalk.transforms import stable_hit_laplace
from skewwalk.walk_engine import discounted_occupation


class TestTestFunctions:
    """Test the test-function catalogue."""

    def test_compact_bump_support(self):
        """Test the bump is 1 at 0 and vanishes outside (-1, 1)."""
        f = compact_bump()
        assert f(0.0) == pytest.approx(1.0)
        assert f(1.0) == 0.0 and f(-2.0) == 0.0

    def test_compact_fourier_at_zero(self):
        """Test F(0) is the integral of the bump."""
        area = integrate.quad(lambda x: float(compact_bump()(x)), -1, 1)[0]
        assert compact_bump().fourier(0.0) == pytest.approx(area, rel=1e-8)

    def test_gaussian_fourier(self):
        """Test F(theta) = sqrt(pi) exp(-theta^2/4)."""
        assert gaussian_bump().fourier(2.0) == pytest.approx(math.sqrt(math.pi) / math.e)

    def test_modulus_gamma(self):
        """Test the returned gamma is the exponent excess over beta."""
        assert power_cap(0.3, 0.7).check_modulus(0.3) == pytest.approx(0.7)

    def test_modulus_rejects_small_exponent(self):
        """Test an exponent at beta is rejected."""
        with pytest.raises(ModulusBoundError):
            power_cap(0.5, 0.5).check_modulus(1.0)

    def test_modulus_requires_declaration(self):
        """Test a function with no bound near 0 is rejected."""
        with pytest.raises(ModulusBoundError):
            gaussian_bump().check_modulus(0.3)


class TestEtaStar:
    """Test integrals against the eta* measure."""

    def test_indicator(self):
        """Test int 1{|x| > 1} d eta* = 2 at beta = 1/2."""
        measure = EtaStarMeasure(beta=0.5, c_plus=1.0, c_minus=0.0)
        value = eta_star_integral(indicator_outside(1.0), measure).value
        assert value == pytest.approx(2.0, abs=1e-7)

    def test_power_cap(self):
        """Test int min(|x|^(beta+1), 1) d eta* = 1 + 1/beta."""
        measure = EtaStarMeasure(beta=0.5, c_plus=0.5, c_minus=0.5)
        value = eta_star_integral(power_cap(0.5, 1.0), measure).value
        assert value == pytest.approx(3.0, abs=1e-7)

    def test_odd_function_cancels(self):
        """Test an odd function integrates to zero against a symmetric measure."""
        measure = EtaStarMeasure(beta=0.4, c_plus=0.5, c_minus=0.5)
        value = eta_star_integral(odd_power_cap(0.4, 1.0), measure).value
        assert value == pytest.approx(0.0, abs=1e-8)

    def test_from_law(self, heavy_eta):
        """Test the measure inherits beta and c_+-."""
        measure = EtaStarMeasure.from_law(heavy_eta)
        assert (measure.beta, measure.c_plus, measure.c_minus) == (0.9, 0.5, 0.5)

    def test_from_light_law(self, geometric_eta):
        """Test light-tailed laws have no eta*."""
        with pytest.raises(ValueError):
            EtaStarMeasure.from_law(geometric_eta)

    def test_v1_needs_skew_index(self):
        """Test int V 1 d eta* diverges for beta >= alpha - 1."""
        with pytest.raises(ValueError):
            stable_v1_eta_star(1.0, 1.5, EtaStarMeasure(beta=0.6, c_plus=1.0, c_minus=0.0))


class TestKilledResolvent:
    """Test V_lambda f for the Poissonised and the stable process."""

    def test_formula_matches_fourier(self, xi_law):
        """Test the two evaluators of V 1 agree."""
        formula = killed_resolvent_V(1.0, 1.0, 100.0, xi_law, mode="formula_1").value
        fourier = killed_resolvent_V(1.0, 1.0, 100.0, xi_law, mode="fourier").value
        assert formula == pytest.approx(fourier, abs=1e-6)

    def test_zero_inside_first_cell(self, xi_law):
        """Test V f vanishes when floor(x a(v)) = 0."""
        assert killed_resolvent_V(1e-6, 1.0, 100.0, xi_law).value == 0.0

    def test_formula_needs_one(self, xi_law):
        """Test formula_1 refuses other functions."""
        with pytest.raises(ValueError):
            killed_resolvent_V(1.0, 1.0, 100.0, xi_law, f=gaussian_bump())

    def test_monte_carlo_matches_fourier(self, xi_law):
        """Test the killed-path estimator against the lattice Green function."""
        f = gaussian_bump()
        fourier = killed_resolvent_V(1.0, 1.0, 10.0, xi_law, f=f, mode="fourier").value
        mc = killed_resolvent_V(1.0, 1.0, 10.0, xi_law, f=f, mode="mc_f", n_paths=3000, seed=4)
        assert abs(mc.value - fourier) < 4 * mc.err
        assert not mc.flagged

    def test_budget_widens_error(self, xi_law):
        """Test a tight step budget flags the estimate."""
        mc = killed_resolvent_V(
            1.0, 1.0, 10.0, xi_law, f=gaussian_bump(), mode="mc_f", n_paths=1000, seed=1,
            step_budget=1e4,
        )
        assert mc.flagged
        assert mc.n_paths < 1000
        assert mc.note == "step budget exhausted"

    def test_large_v_near_stable(self, xi_law):
        """Test V 1 at v = 1e6 is within 5e-3 of its stable limit."""
        v = 1e6
        a = norming_a(xi_law, v)
        discrete = killed_resolvent_V(1.0, 1.0, v, xi_law).value
        stable = 1 - stable_hit_laplace(math.floor(a) / a, 1.0, 1.5)
        assert abs(discrete - stable) < 5e-3

    def test_stable_constant_function(self):
        """Test V 1 = (1 - h) / lambda for the stable process."""
        value = stable_killed_resolvent(0.7, constant_one(), 2.0, 1.5)
        assert value == pytest.approx((1 - stable_hit_laplace(0.7, 2.0, 1.5)) / 2.0)

    def test_stable_vanishes_at_origin(self):
        """Test V f(0) = 0."""
        assert stable_killed_resolvent(0.0, gaussian_bump(), 1.0, 1.5) == 0.0

    def test_stable_bounded(self):
        """Test 0 <= V f <= V 1 for 0 <= f <= 1."""
        vf = stable_killed_resolvent(1.0, gaussian_bump(), 1.0, 1.5)
        v1 = stable_killed_resolvent(1.0, constant_one(), 1.0, 1.5)
        assert 0 < vf < v1


class TestResolventAtZero:
    """Test lambda R f(0) for the chain and its skew limit."""

    def test_chain_constant_is_one(self, xi_law, skew_eta):
        """Test lambda R 1(0) = 1 exactly."""
        value = holding_jumping_resolvent_at_zero(constant_one(), 1.0, 100.0, xi_law, skew_eta)
        assert value == 1.0

    def test_chain_bounded(self, xi_law, skew_eta):
        """Test lambda R f(0) lies in [0, 1] for 0 <= f <= 1."""
        value = holding_jumping_resolvent_at_zero(gaussian_bump(), 1.0, 100.0, xi_law, skew_eta)
        assert 0 <= value <= 1

    def test_chain_matches_monte_carlo(self, xi_law, skew_eta):
        """Test the formula against lambda times the discounted occupation of the chain."""
        f = gaussian_bump()
        value = holding_jumping_resolvent_at_zero(f, 1.0, 10.0, xi_law, skew_eta)
        samples = discounted_occupation(
            xi_law, 0, 10.0, 1.0, f, norming_a(xi_law, 10.0), 100_000, seed=11, eta_law=skew_eta
        )
        se = samples.std(ddof=1) / math.sqrt(samples.size)
        assert abs(value - samples.mean()) <= 4 * se
        assert value == pytest.approx(0.26, abs=0.01)

    def test_chain_tail_error(self, xi_law, skew_eta):
        """Test the result carries the eta tail mass and a nonnegative error."""
        result = holding_jumping_resolvent(gaussian_bump(), 1.0, 100.0, xi_law, skew_eta)
        assert result.method == "lattice"
        assert 0 <= result.err < 0.01
        assert result.note.startswith(f"eta mass beyond |k|={ETA_EXACT_RANGE}")

    def test_eta_expectation_tail_mass(self, xi_law, skew_eta, geometric_eta):
        """Test the frozen tail carries P{eta > 1e5} and vanishes for a light law."""
        green = _eta_green(1.0, 100.0, xi_law)
        values = green.killed(constant_one().fn)
        heavy = _eta_expectation(values, green.lattice, skew_eta)
        assert heavy.tail_mass == pytest.approx(float(skew_eta.signed_tail(ETA_EXACT_RANGE, 1)))
        assert heavy.tail_error >= 0
        light = _eta_expectation(values, green.lattice, geometric_eta)
        assert light.tail_mass == 0.0 and light.tail_error == 0.0

    def test_eta_ratio_constant(self, xi_law, heavy_eta):
        """Test the eta ratio of f = 1 is 1."""
        assert discrete_eta_ratio(constant_one(), 1.0, 100.0, xi_law, heavy_eta) == 1.0

    def test_eta_ratio_absolute_constant(self, xi_law):
        """Test |eta| and eta agree for an even f."""
        eta = PerturbationLaw(mode="constant", constant_value=-4)
        f = gaussian_bump()
        signed = discrete_eta_ratio(f, 1.0, 100.0, xi_law, eta)
        absolute = discrete_eta_ratio(f, 1.0, 100.0, xi_law, eta, absolute=True)
        assert signed == pytest.approx(absolute, rel=1e-12)

    def test_skew_constant_is_one(self, skew_eta):
        """Test the skew limit of lambda R 1(0) is exactly 1."""
        measure = EtaStarMeasure.from_law(skew_eta)
        result = skew_resolvent_at_zero(constant_one(), 1.0, measure, 1.5)
        assert result.value == 1.0
        assert result.method == "exact"

    def test_skew_fourier_route(self, skew_eta):
        """Test an even f with a transform takes the Fourier route and stays in [0, 1]."""
        measure = EtaStarMeasure.from_law(skew_eta)
        result = skew_resolvent_at_zero(gaussian_bump(), 1.0, measure, 1.5, v_proxy=1e4)
        assert result.method == "fourier"
        assert 0 < result.value < 1
        assert result.denominator == pytest.approx(stable_v1_eta_star(1.0, 1.5, measure))
        assert result.proxy_error is not None

    def test_skew_proxy_route(self, skew_eta):
        """Test forcing the proxy reports its error on int V 1 d eta*."""
        measure = EtaStarMeasure.from_law(skew_eta)
        result = skew_resolvent_at_zero(
            compact_bump(), 1.0, measure, 1.5, v_proxy=1e4, method="proxy"
        )
        assert result.method == "proxy"
        assert 0 <= result.value <= 1
        assert result.proxy_error >= 0

    def test_fourier_needs_even(self, skew_eta):
        """Test an odd f cannot take the Fourier route."""
        measure = EtaStarMeasure.from_law(skew_eta)
        with pytest.raises(ValueError):
            skew_resolvent_at_zero(
                odd_power_cap(0.3, 1.0), 1.0, measure, 1.5, method="fourier"
            )


class TestTailFunctional:
    """Test the normalised tail functional."""

    def test_indicator_limit(self):
        """Test the indicator ratio is 2 at beta = 1/2 and u = 1e6."""
        eta = PerturbationLaw(mode="one_sided", beta=0.5)
        (point,) = tail_functional(indicator_outside(1.0), eta, [1e6])
        assert point.ratio == pytest.approx(2.0, rel=1e-3)
        assert point.raw_ratio == pytest.approx(1.0, rel=1e-3)

    def test_power_cap_limit(self):
        """Test min(|x|^1.5, 1) has limit 1 + 1/beta."""
        eta = PerturbationLaw(mode="one_sided", beta=0.5)
        points = tail_functional(power_cap(0.5, 1.0), eta, [1e4, 1e6])
        assert points[-1].ratio == pytest.approx(3.0, rel=0.02)

    def test_rejects_light_tail(self, geometric_eta):
        """Test the functional needs a heavy tail."""
        with pytest.raises(ValueError):
            tail_functional(indicator_outside(1.0), geometric_eta, [1e3])


class TestSplittingAndDefect:
    """Test the resolvent splitting and the hitting defect fit."""

    def test_splitting_within_error(self, xi_law, skew_eta):
        """Test R f(x) = V f(x) + E_x e^(-lambda sigma) R f(0) within MC error."""
        check = resolvent_splitting_check(
            1.0, gaussian_bump(), 1.0, 10.0, xi_law, skew_eta, n_paths=1000, seed=3
        )
        assert check.z_score < 4

    def test_defect_constant(self, xi_law):
        """Test fitted c2 is positive for each v."""
        fitted = fit_hitting_defect_constant(1.0, xi_law, 0.25, [1e3, 1e5], [0.25, 0.5, 1.0])
        assert set(fitted) == {1e3, 1e5}
        assert all(c > 0 for c in fitted.values())

    def test_defect_rejects_large_delta(self, xi_law):
        """Test delta must stay below alpha - 1."""
        with pytest.raises(ValueError):
            fit_hitting_defect_constant(1.0, xi_law, 0.5, [1e3], [0.5])
