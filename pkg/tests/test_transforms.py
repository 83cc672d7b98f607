import math

import numpy as np
import pytest

from skewwalk.distributions import norming_a
from skewwalk.errors import QuadratureError
from skewwalk.models import QuadratureSpec
from skewwalk.transforms import (
    discrete_hit_laplace_scaled,
    discrete_hit_laplace_scaled_result,
    hit_gf,
    killed_green_lattice,
    poisson_hit_laplace,
    poisson_resolvent_density,
    potential_kernel,
    scaled_char_exponent,
    stable_hit_laplace,
    stable_hit_laplace_result,
    stable_resolvent_density,
    stable_resolvent_density_closed_form,
    u_s,
    u_s_series,
)
from skewwalk.walk_engine import first_hit_times


class TestGeneratingFunctions:
    """Test u_s and the hitting generating function."""

    @pytest.mark.parametrize("s", [0.1, 0.3, 0.5, 0.7, 0.9])
    def test_simple_walk_hit_gf(self, simple_law, s):
        """Test E_1 s^sigma = (1 - sqrt(1 - s^2)) / s."""
        exact = (1 - math.sqrt(1 - s * s)) / s
        assert hit_gf(1, s, simple_law) == pytest.approx(exact, abs=1e-8)

    def test_simple_walk_at_six_tenths(self, simple_law):
        """Test E_1 0.6^sigma = 1/3."""
        assert hit_gf(1, 0.6, simple_law) == pytest.approx(1 / 3, abs=1e-8)

    def test_simple_walk_u_at_zero(self, simple_law):
        """Test u_s(0) = 1 / sqrt(1 - s^2)."""
        assert u_s(0, 0.6, simple_law).value == pytest.approx(1.25, abs=1e-9)

    @pytest.mark.parametrize("x", [0, 1, 4, 17])
    @pytest.mark.parametrize("s", [0.3, 0.8])
    def test_integral_matches_series(self, xi_law, x, s):
        """Test the inversion integral against convolution powers."""
        integral = u_s(x, s, xi_law).value
        series = u_s_series(x, s, xi_law, terms=400).value
        assert integral == pytest.approx(series, abs=1e-7)

    def test_symmetric_in_x(self, xi_law):
        """Test u_s(-x) = u_s(x)."""
        assert u_s(-3, 0.5, xi_law).value == u_s(3, 0.5, xi_law).value

    def test_s_zero_is_exact(self, xi_law):
        """Test u_0 is the indicator of the origin."""
        assert u_s(0, 0.0, xi_law).value == 1.0
        assert u_s(2, 0.0, xi_law).value == 0.0

    def test_rejects_s_of_one(self, xi_law):
        """Test s must lie below one."""
        with pytest.raises(ValueError):
            u_s(0, 1.0, xi_law)

    def test_hit_gf_at_origin(self, xi_law):
        """Test E_0 s^sigma = 1."""
        assert hit_gf(0, 0.5, xi_law) == 1.0

    @pytest.mark.parametrize("x", [1, 3, -8])
    def test_hit_gf_nondecreasing_in_s(self, xi_law, x):
        """Test E_x s^sigma grows with s and stays in (0, 1)."""
        values = [hit_gf(x, s, xi_law) for s in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert all(0 < v < 1 for v in values)
        assert np.all(np.diff(values) >= -1e-12)

    @pytest.mark.parametrize("s", [0.5, 0.9])
    def test_u_s_peaks_at_origin(self, xi_law, s):
        """Test u_s(0) >= u_s(x)."""
        at_zero = u_s(0, s, xi_law).value
        assert all(at_zero >= u_s(x, s, xi_law).value for x in (1, 2, 5, 20))


class TestPoissonTransforms:
    """Test transforms of the Poissonised walk."""

    @pytest.mark.parametrize("x,lam,rho", [(1, 1.0, 1.0), (2, 0.5, 1.0)])
    def test_matches_simulated_hits(self, xi_law, x, lam, rho):
        """Test E_x exp(-lam sigma~) = E_x s^sigma against simulated first hits."""
        s = rho / (lam + rho)
        hits = first_hit_times(xi_law, x, 20_000, seed=17, cap=400)
        samples = np.where(hits.censored, 0.0, s ** hits.times.astype(float))
        se = samples.std(ddof=1) / math.sqrt(samples.size)
        assert abs(samples.mean() - poisson_hit_laplace(x, lam, rho, xi_law)) < 4 * se + 1e-12

    @pytest.mark.parametrize("x", [1, 4])
    def test_laplace_nonincreasing_in_lambda(self, xi_law, x):
        """Test E_x e^(-lambda sigma~) falls as lambda grows."""
        values = [poisson_hit_laplace(x, lam, 1.0, xi_law) for lam in (0.25, 0.5, 1.0, 2.0, 4.0)]
        assert np.all(np.diff(values) <= 1e-12)

    def test_resolvent_density_scaling(self, xi_law):
        """Test u^_lambda(x) = u_s(x) / (lambda + rho)."""
        value = poisson_resolvent_density(2, 1.0, 3.0, xi_law).value
        assert value == pytest.approx(u_s(2, 0.75, xi_law).value / 4.0, rel=1e-12)

    @pytest.mark.parametrize("x", [0.05, 0.5, 1.0, 3.0])
    @pytest.mark.parametrize("v", [1e2, 1e4])
    def test_scaled_matches_poisson(self, xi_law, x, v):
        """Test the scaled representation equals E_m s^sigma with s = v/(v+lambda)."""
        lam = 1.0
        m = math.floor(x * norming_a(xi_law, v))
        scaled = discrete_hit_laplace_scaled(x, lam, v, xi_law)
        assert scaled == pytest.approx(poisson_hit_laplace(m, lam, v, xi_law), abs=1e-7)

    def test_scaled_at_lattice_origin(self, xi_law):
        """Test starting inside the first cell gives 1."""
        assert discrete_hit_laplace_scaled(1e-6, 1.0, 100.0, xi_law) == 1.0

    def test_scaled_exponent(self, xi_law):
        """Test v (1 - psi(theta / a(v))) is close to theta^alpha at large v."""
        assert scaled_char_exponent(2.0, 1e6, xi_law) == pytest.approx(2.0**1.5, rel=0.02)


class TestStableTransforms:
    """Test the symmetric stable resolvent density."""

    def test_closed_form_at_origin(self):
        """Test v_1(0) = 1 / (1.5 sin(2 pi / 3))."""
        value = stable_resolvent_density(0.0, 1.0, 1.5).value
        assert value == pytest.approx(0.769800, abs=1e-6)
        assert value == pytest.approx(stable_resolvent_density_closed_form(1.0, 1.5), abs=1e-6)

    @pytest.mark.parametrize("lam", [0.5, 2.0])
    def test_lambda_scaling(self, lam):
        """Test v_lambda(0) = lambda^(1/alpha - 1) v_1(0)."""
        value = stable_resolvent_density(0.0, lam, 1.5).value
        expected = lam ** (1 / 1.5 - 1) * stable_resolvent_density_closed_form(1.0, 1.5)
        assert value == pytest.approx(expected, abs=1e-6)

    def test_hit_laplace_decreases(self):
        """Test E_x e^(-lambda sigma) falls in (0, 1) and decreases in |x|."""
        values = [stable_hit_laplace(x, 1.0, 1.5) for x in (0.1, 1.0, 5.0)]
        assert all(0 < v < 1 for v in values)
        assert values == sorted(values, reverse=True)
        assert stable_hit_laplace(-1.0, 1.0, 1.5) == pytest.approx(values[1], abs=1e-12)

    def test_discrete_approaches_stable(self, xi_law):
        """Test the scaled discrete transform is close to the stable one at v = 1e6."""
        v = 1e6
        a = norming_a(xi_law, v)
        discrete = discrete_hit_laplace_scaled(1.0, 1.0, v, xi_law)
        stable = stable_hit_laplace(math.floor(a) / a, 1.0, 1.5)
        assert abs(discrete - stable) < 0.01

    def test_hit_laplace_result_error(self):
        """Test the stable ratio carries a small nonnegative error and is exact at 0."""
        result = stable_hit_laplace_result(1.0, 1.0, 1.5)
        assert result.method == "stable"
        assert 0 <= result.err_estimate < 1e-4
        assert result.value == stable_hit_laplace(1.0, 1.0, 1.5)
        origin = stable_hit_laplace_result(0.0, 1.0, 1.5)
        assert (origin.value, origin.err_estimate, origin.method) == (1.0, 0.0, "exact")

    def test_discrete_result_error(self, xi_law):
        """Test the scaled discrete ratio reports its quadrature error."""
        result = discrete_hit_laplace_scaled_result(1.0, 1.0, 1e4, xi_law)
        assert result.method == "discrete_scaled"
        assert 0 <= result.err_estimate < 1e-4
        assert result.n_evals > 0
        assert result.value == discrete_hit_laplace_scaled(1.0, 1.0, 1e4, xi_law)

    def test_rejects_alpha_two(self):
        """Test alpha must lie in (1, 2)."""
        with pytest.raises(ValueError):
            stable_resolvent_density(0.0, 1.0, 2.0)


class TestPotentialKernel:
    """Test the potential kernel g(x)."""

    @pytest.mark.parametrize("x", [1, 3, -7])
    def test_simple_walk(self, simple_law, x):
        """Test g(x) = |x| for the simple walk."""
        assert potential_kernel(x, simple_law).value == pytest.approx(abs(x), rel=1e-7)

    def test_increasing(self, xi_law):
        """Test g grows with |x| for the stable law."""
        values = [potential_kernel(x, xi_law).value for x in (1, 4, 16)]
        assert values == sorted(values)

    def test_strict_tolerance_raises(self, xi_law):
        """Test an unreachable tolerance surfaces as QuadratureError."""
        spec = QuadratureSpec(abs_tol=1e-300, rel_tol=1e-300, max_subdivisions=50)
        with pytest.raises(QuadratureError):
            potential_kernel(5, xi_law, spec)


class TestLatticeGreen:
    """Test the whole-lattice Green function."""

    def test_hit_matches_quadrature(self, xi_law):
        """Test FFT hitting transforms against the inversion integral."""
        green = killed_green_lattice(1.0, 100.0, xi_law)
        for m in (1, 5, 20):
            assert green.hit(m) == pytest.approx(hit_gf(m, green.s, xi_law), abs=1e-7)

    def test_killed_vanishes_at_origin(self, xi_law):
        """Test V f(0) = 0."""
        green = killed_green_lattice(1.0, 100.0, xi_law)
        values = green.killed(lambda y: np.exp(-np.square(y)))
        assert abs(green.at(values, 0)) < 1e-12

    def test_killed_constant(self, xi_law):
        """Test V^1 = (1 - h) / lambda on the lattice."""
        green = killed_green_lattice(1.0, 100.0, xi_law)
        values = green.killed(lambda y: np.ones_like(y))
        m = np.array([1, 7, 30])
        assert np.allclose(green.at(values, m), (1 - green.hit(m)) / 1.0, atol=1e-9)
