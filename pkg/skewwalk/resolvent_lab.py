"""Killed resolvents, the resolvent at 0 of the perturbed chain and of its skew limit.

For the continuous process the killed resolvent is V f(y) = R f(y) - h(y) R f(0) with
R f(y) = (1/pi) int_0^inf cos(theta y) F(theta) / (lambda + theta^alpha) d theta for
an even f with Fourier transform F, and h(y) = v_lambda(y) / v_lambda(0). Integrating
against eta* uses int_0^inf (1 - cos(theta y)) y^-(1+beta) dy = D_beta theta^beta with
D_beta = -Gamma(-beta) cos(pi beta / 2).
"""

import logging
import math
from functools import lru_cache, partial
from typing import Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, special

from .distributions import LatticeStableLaw, PerturbationLaw, norming_a
from .errors import ModulusBoundError
from .models import QuadratureSpec, TransformResult
from .transforms import (
    DEFAULT_QUADRATURE,
    LatticeGreen,
    _quad,
    _sum_results,
    discrete_hit_laplace_scaled,
    killed_green_lattice,
    lattice_size,
    stable_hit_laplace,
)
from .utils import make_rng
from .walk_engine import discounted_occupation, first_hit_times

logger = logging.getLogger(__name__)

ETA_HEAD = 10**5
ETA_EXACT_RANGE = 10**5
# smallest power-of-two period whose window covers |k| <= ETA_EXACT_RANGE
ETA_WINDOW = 2**18


def _one(x):
    return np.ones_like(np.asarray(x, dtype=float))


def _gaussian(x):
    return np.exp(-np.square(np.asarray(x, dtype=float)))


def _gaussian_fourier(theta):
    return math.sqrt(math.pi) * math.exp(-theta * theta / 4)


def _compact(x):
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1
    safe = np.where(inside, 1 - x * x, 1.0)
    return np.where(inside, np.exp(1 - 1 / safe), 0.0)


@lru_cache(maxsize=8192)
def _compact_fourier(theta: float) -> float:
    def bump(x: float) -> float:
        return math.exp(1 - 1 / (1 - x * x)) if abs(x) < 1 else 0.0

    if theta == 0:
        value = integrate.quad(bump, 0, 1, epsabs=1e-13, epsrel=1e-12)[0]
    else:
        value = integrate.quad(bump, 0, 1, weight="cos", wvar=theta, epsabs=1e-13)[0]
    return 2 * value


def _indicator_outside(x, radius: float):
    return (np.abs(np.asarray(x, dtype=float)) > radius).astype(float)


def _power_cap(x, power: float):
    return np.minimum(np.abs(np.asarray(x, dtype=float)) ** power, 1.0)


def _odd_power_cap(x, power: float):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.minimum(np.abs(x) ** power, 1.0)


class TestFunction(BaseModel):
    """A bounded test function with a declared bound |g(x)| <= c |x|^(beta+gamma) near 0."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
    __test__ = False

    name: str
    fn: Callable = Field(description="Vectorised evaluator over reals.")
    sup_norm: float = Field(ge=0)
    modulus_c: float | None = Field(default=None, description="c in the bound near 0.")
    modulus_power: float | None = Field(
        default=None, description="The exponent beta + gamma in the bound near 0."
    )
    parity: Literal["even", "odd", "none"] = "none"
    fourier: Callable | None = Field(
        default=None, description="F(theta) = int f(x) cos(theta x) dx for even f."
    )
    breakpoints: tuple[float, ...] = ()

    def __call__(self, x):
        return self.fn(x)

    def check_modulus(self, beta: float, lo: float = 1e-8, hi: float = 1e-1) -> float:
        """Verify the declared bound on a log grid; returns gamma."""
        if self.modulus_c is None or self.modulus_power is None:
            raise ModulusBoundError(f"{self.name} declares no bound near 0.")
        gamma = self.modulus_power - beta
        if gamma <= 0:
            raise ModulusBoundError(
                f"{self.name}: exponent {self.modulus_power} does not exceed beta={beta}."
            )
        grid = np.geomspace(lo, hi, 200)
        grid = np.concatenate([-grid, grid])
        bound = self.modulus_c * np.abs(grid) ** self.modulus_power
        if np.any(np.abs(self.fn(grid)) > bound * (1 + 1e-9) + 1e-300):
            raise ModulusBoundError(f"{self.name} violates its declared bound near 0.")
        return gamma


def constant_one() -> TestFunction:
    return TestFunction(name="one", fn=_one, sup_norm=1.0, parity="even")


def gaussian_bump() -> TestFunction:
    return TestFunction(
        name="gaussian", fn=_gaussian, sup_norm=1.0, parity="even", fourier=_gaussian_fourier
    )


def compact_bump() -> TestFunction:
    """exp(1 - 1/(1 - x^2)) on (-1, 1), normalised to 1 at the origin."""
    return TestFunction(
        name="compact",
        fn=_compact,
        sup_norm=1.0,
        parity="even",
        fourier=_compact_fourier,
        breakpoints=(-1.0, 1.0),
    )


def indicator_outside(radius: float = 1.0) -> TestFunction:
    return TestFunction(
        name=f"indicator_outside_{radius:g}",
        fn=partial(_indicator_outside, radius=radius),
        sup_norm=1.0,
        modulus_c=0.0,
        modulus_power=2.0,
        parity="even",
        breakpoints=(-radius, radius),
    )


def power_cap(beta: float, gamma: float) -> TestFunction:
    """min(|x|^(beta+gamma), 1)."""
    power = beta + gamma
    return TestFunction(
        name=f"power_cap_{power:g}",
        fn=partial(_power_cap, power=power),
        sup_norm=1.0,
        modulus_c=1.0,
        modulus_power=power,
        parity="even",
        breakpoints=(-1.0, 1.0),
    )


def odd_power_cap(beta: float, gamma: float) -> TestFunction:
    power = beta + gamma
    return TestFunction(
        name=f"odd_power_cap_{power:g}",
        fn=partial(_odd_power_cap, power=power),
        sup_norm=1.0,
        modulus_c=1.0,
        modulus_power=power,
        parity="odd",
        breakpoints=(-1.0, 1.0),
    )


TEST_FUNCTIONS: dict[str, Callable[[], TestFunction]] = {
    "one": constant_one,
    "gaussian": gaussian_bump,
    "compact": compact_bump,
}


class EtaStarMeasure(BaseModel):
    """(c_- 1{x<0} + c_+ 1{x>0}) |x|^-(1+beta) dx."""

    model_config = ConfigDict(frozen=True)

    beta: float = Field(gt=0, lt=1)
    c_plus: float = Field(ge=0)
    c_minus: float = Field(ge=0)

    @model_validator(mode="after")
    def validate_weights(self) -> "EtaStarMeasure":
        if self.c_plus + self.c_minus <= 0:
            raise ValueError("c_plus + c_minus must be positive.")
        return self

    @classmethod
    def from_law(cls, law: PerturbationLaw) -> "EtaStarMeasure":
        if not law.heavy_tailed:
            raise ValueError("eta* is defined for heavy-tailed perturbations only.")
        return cls(beta=law.beta, c_plus=law.c_plus, c_minus=law.c_minus)

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        weight = np.where(x > 0, self.c_plus, np.where(x < 0, self.c_minus, 0.0))
        safe = np.where(x == 0, 1.0, np.abs(x))
        return np.where(x == 0, 0.0, weight * safe ** -(1 + self.beta))


class ResolventValue(BaseModel):
    """A resolvent evaluation with its error bar."""

    value: float
    err: float = Field(default=0.0, ge=0)
    method: str
    flagged: bool = False
    n_paths: int = 0
    note: str | None = None


class EtaExpectation(BaseModel):
    """E V(eta) with the eta mass beyond the exact range and its freezing error."""

    value: float
    tail_mass: float = Field(ge=0)
    tail_error: float = Field(ge=0)


class TailFunctionalPoint(BaseModel):
    u: float
    ratio: float = Field(description="E g(eta/u) / (beta P{|eta| > u}).")
    raw_ratio: float = Field(description="E g(eta/u) / P{|eta| > u}.")
    err: float = 0.0


class SkewResolventResult(BaseModel):
    """lambda R_lambda f(0) for the skew stable process."""

    value: float
    numerator: float
    denominator: float
    proxy_value: float | None = None
    proxy_error: float | None = None
    method: str


class SplittingCheck(BaseModel):
    """Monte Carlo terms of R f(x) = V f(x) + E_x e^(-lambda sigma) R f(0)."""

    x: float
    resolvent: float
    killed: float
    hit_laplace: float
    resolvent_at_zero: float
    standard_error: float

    @property
    def residual(self) -> float:
        return self.resolvent - (self.killed + self.hit_laplace * self.resolvent_at_zero)

    @property
    def z_score(self) -> float:
        return abs(self.residual) / self.standard_error if self.standard_error > 0 else math.inf


def _half_line_integral(
    g: Callable, sign: int, beta: float, gamma: float, breakpoints, spec: QuadratureSpec
) -> TransformResult:
    """int_0^inf g(sign x) x^-(1+beta) dx, with the singular weight removed by substitution."""
    k = 1 / gamma

    def near(u: float) -> float:
        # x = u^k on [0, 1]
        if u == 0:
            return 0.0
        x = u**k
        return float(g(sign * x)) * k * u ** (k - 1) * x ** -(1 + beta)

    def far(w: float) -> float:
        # x = w^(-1/beta) on [1, inf)
        if w == 0:
            return 0.0
        return float(g(sign * w ** (-1 / beta))) / beta

    inner = sorted(abs(b) ** (1 / k) for b in breakpoints if 0 < abs(b) < 1)
    outer = sorted(abs(b) ** -beta for b in breakpoints if abs(b) > 1)
    parts = []
    for lo, hi in zip([0.0, *inner], [*inner, 1.0]):
        parts.append(_quad(near, lo, hi, spec))
    for lo, hi in zip([0.0, *outer], [*outer, 1.0]):
        parts.append(_quad(far, lo, hi, spec))
    return _sum_results(parts)


def eta_star_integral(
    g: TestFunction, measure: EtaStarMeasure, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> TransformResult:
    """int g d eta*; rejects functions without a valid bound near 0."""
    gamma = g.check_modulus(measure.beta)
    parts = []
    for sign, weight in ((1, measure.c_plus), (-1, measure.c_minus)):
        if weight == 0:
            continue
        side = _half_line_integral(g.fn, sign, measure.beta, gamma, g.breakpoints, spec)
        parts.append(
            TransformResult(
                value=weight * side.value,
                err_estimate=weight * side.err_estimate,
                n_evals=side.n_evals,
            )
        )
    return _sum_results(parts)


def _fractional_constant(beta: float) -> float:
    """D_beta = int_0^inf (1 - cos u) u^-(1+beta) du."""
    return -special.gamma(-beta) * math.cos(math.pi * beta / 2)


def stable_v1_eta_star(lam: float, alpha: float, measure: EtaStarMeasure) -> float:
    """Closed form of int V_lambda 1 d eta* for the symmetric alpha-stable process."""
    beta = measure.beta
    if not beta < alpha - 1:
        raise ValueError("int V 1 d eta* is finite only for beta < alpha - 1.")
    q = (
        _fractional_constant(beta)
        * lam ** (beta / alpha)
        * math.sin(math.pi / alpha)
        / math.sin(math.pi * (beta + 1) / alpha)
    )
    return (measure.c_plus + measure.c_minus) * q / lam


def _fourier_moment(
    f: TestFunction, lam: float, alpha: float, power: float, spec: QuadratureSpec
) -> TransformResult:
    """int_0^inf theta^power F(theta) / (lambda + theta^alpha) d theta."""

    def integrand(theta: float) -> float:
        return theta**power * f.fourier(theta) / (lam + theta**alpha)

    knee = lam ** (1 / alpha)
    points = sorted({0.0, knee, 1.0, 10.0, 100.0})
    parts = [_quad(integrand, lo, hi, spec) for lo, hi in zip(points, points[1:])]
    parts.append(_quad(integrand, points[-1], math.inf, spec))
    return _sum_results(parts)


def stable_killed_resolvent(
    y: float, f: TestFunction, lam: float, alpha: float, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """V_lambda f(y) = R f(y) - h(y) R f(0) for the symmetric alpha-stable process."""
    if f.name == "one":
        return (1 - stable_hit_laplace(y, lam, alpha, spec)) / lam
    if f.parity != "even" or f.fourier is None:
        raise ValueError("The Fourier route needs an even f with a known transform.")
    rf0 = _fourier_moment(f, lam, alpha, 0.0, spec).value / math.pi
    if y == 0:
        return 0.0

    def integrand(theta: float) -> float:
        return f.fourier(theta) / (lam + theta**alpha)

    knee = lam ** (1 / alpha)
    points = sorted({0.0, knee, 1.0, 10.0, 100.0})
    parts = [
        _quad(integrand, lo, hi, spec, weight="cos", wvar=abs(y))
        for lo, hi in zip(points, points[1:])
    ]
    parts.append(_quad(integrand, points[-1], math.inf, spec, weight="cos", wvar=abs(y)))
    rfy = _sum_results(parts).value / math.pi
    return rfy - stable_hit_laplace(y, lam, alpha, spec) * rf0


def _mc_budget(n_paths: int, v: float, lam: float, step_budget: float) -> tuple[int, bool]:
    expected = n_paths * (1 + v * 27.7 / lam)
    if expected <= step_budget:
        return n_paths, False
    return max(100, int(step_budget / (1 + v * 27.7 / lam))), True


def killed_resolvent_V(
    x: float,
    lam: float,
    v: float,
    xi_law: LatticeStableLaw,
    f: TestFunction | None = None,
    mode: Literal["formula_1", "fourier", "mc_f"] = "formula_1",
    n_paths: int = 10_000,
    seed: int = 0,
    step_budget: float = 1e8,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    workers: int = 1,
) -> ResolventValue:
    """V^_lambda f(x) for the rate-v Poissonised walk killed at 0, started at floor(x a(v))/a(v).

    formula_1 is exact for f = 1: (1 - E e^(-(lambda/v) sigma)) / lambda. fourier
    uses the lattice Green function; mc_f simulates killed paths and reports the
    standard error, widening it when the step budget forces fewer paths.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive.")
    f = f or constant_one()
    scale = norming_a(xi_law, v)
    m = math.floor(x * scale)
    if m == 0:
        return ResolventValue(value=0.0, method=mode)
    if mode == "formula_1":
        if f.name != "one":
            raise ValueError("formula_1 evaluates V 1 only; use fourier or mc_f for f.")
        value = (1 - discrete_hit_laplace_scaled(x, lam, v, xi_law, spec)) / lam
        return ResolventValue(value=value, method=mode)
    if mode == "fourier":
        green = killed_green_lattice(float(lam), float(v), xi_law)
        values = green.killed(f.fn)
        return ResolventValue(value=float(green.at(values, m)), method=mode)
    paths, flagged = _mc_budget(n_paths, v, lam, step_budget)
    if flagged:
        logger.warning("Step budget caps killed-resolvent paths at %d (asked %d).", paths, n_paths)
    samples = discounted_occupation(xi_law, m, v, lam, f.fn, scale, paths, seed, workers=workers)
    err = float(samples.std(ddof=1) / math.sqrt(paths))
    return ResolventValue(
        value=float(samples.mean()),
        err=err * (math.sqrt(n_paths / paths) if flagged else 1.0),
        method=mode,
        flagged=flagged,
        n_paths=paths,
        note="step budget exhausted" if flagged else None,
    )


def _eta_green(lam: float, v: float, xi_law: LatticeStableLaw) -> LatticeGreen:
    """Lattice Green function whose window holds every |k| <= ETA_EXACT_RANGE."""
    size = lattice_size(norming_a(xi_law, v), minimum=ETA_WINDOW)
    return killed_green_lattice(float(lam), float(v), xi_law, size)


def _eta_expectation(values: np.ndarray, lattice: np.ndarray, eta_law: PerturbationLaw) -> EtaExpectation:
    """E V(eta): exact sum over |k| <= ETA_EXACT_RANGE, V frozen at the range edge beyond.

    The freezing error on each side is estimated as the mass beyond the edge times the
    spread of V over the outer half of the range.
    """
    inside = np.abs(lattice) <= ETA_EXACT_RANGE
    total = math.fsum(eta_law.pmf(lattice[inside]) * values[inside])
    tail_mass = 0.0
    tail_error = 0.0
    for sign in (1, -1):
        mass = float(eta_law.signed_tail(ETA_EXACT_RANGE, sign))
        if mass == 0.0:
            continue
        side = sign * lattice
        outer = (side > ETA_EXACT_RANGE // 2) & (side <= ETA_EXACT_RANGE)
        edge = float(values[side == ETA_EXACT_RANGE][0])
        total += mass * edge
        tail_mass += mass
        tail_error += mass * float(np.ptp(values[outer]))
    return EtaExpectation(value=total, tail_mass=tail_mass, tail_error=tail_error)


def holding_jumping_resolvent(
    f: TestFunction,
    lam: float,
    v: float,
    xi_law: LatticeStableLaw,
    eta_law: PerturbationLaw,
) -> ResolventValue:
    """lambda R_lambda f(0) = (f(0)/v + E V^f(eta/a)) / (1/v + E V^1(eta/a)).

    err is the propagated freezing error of the eta tails beyond ETA_EXACT_RANGE.
    """
    if lam <= 0 or v < 1:
        raise ValueError("Need lambda > 0 and v >= 1.")
    if f.name == "one":
        return ResolventValue(value=1.0, method="exact")
    green = _eta_green(lam, v, xi_law)
    lattice = green.lattice
    expect_f = _eta_expectation(green.killed(f.fn), lattice, eta_law)
    expect_1 = _eta_expectation(green.killed(_one), lattice, eta_law)
    numerator = float(f.fn(0.0)) / v + expect_f.value
    denominator = 1 / v + expect_1.value
    if denominator < 1e-300:
        raise ValueError("Degenerate denominator in the holding-and-jumping formula.")
    value = numerator / denominator
    err = (expect_f.tail_error + abs(value) * expect_1.tail_error) / denominator
    return ResolventValue(
        value=value,
        err=err,
        method="lattice",
        note=f"eta mass beyond |k|={ETA_EXACT_RANGE}: {expect_1.tail_mass:.3g}",
    )


def holding_jumping_resolvent_at_zero(
    f: TestFunction,
    lam: float,
    v: float,
    xi_law: LatticeStableLaw,
    eta_law: PerturbationLaw,
) -> float:
    """lambda R_lambda f(0) of the holding-and-jumping chain; f = 1 gives exactly 1."""
    return holding_jumping_resolvent(f, lam, v, xi_law, eta_law).value


def discrete_eta_ratio(
    f: TestFunction,
    lam: float,
    v: float,
    xi_law: LatticeStableLaw,
    eta_law: PerturbationLaw,
    absolute: bool = False,
) -> float:
    """E V^f(eta/a) / E V^1(eta/a); with absolute=True eta is replaced by |eta|."""
    if absolute:
        if eta_law.mode == "constant":
            update = {"constant_value": abs(eta_law.constant_value)}
        else:
            update = {"c_plus": 1.0}
        eta_law = eta_law.model_copy(update=update)
    green = _eta_green(lam, v, xi_law)
    killed_f = green.killed(f.fn)
    killed_1 = killed_f if f.name == "one" else green.killed(_one)
    return (
        _eta_expectation(killed_f, green.lattice, eta_law).value
        / _eta_expectation(killed_1, green.lattice, eta_law).value
    )


def _proxy_eta_star(values: np.ndarray, lattice: np.ndarray, scale: float, measure: EtaStarMeasure) -> float:
    """int V d eta* with V constant on the cells [(m - 1/2)/a, (m + 1/2)/a]."""
    beta = measure.beta
    m = np.abs(lattice).astype(float)
    inner = np.where(m > 0, m - 0.5, np.inf)
    outer = m + 0.5
    mass = (inner**-beta - outer**-beta) * scale**beta / beta
    weight = np.where(lattice > 0, measure.c_plus, np.where(lattice < 0, measure.c_minus, 0.0))
    body = math.fsum(np.where(m > 0, weight * mass, 0.0) * values)
    top, bottom = np.argmax(lattice), np.argmin(lattice)
    tail_up = measure.c_plus * ((lattice[top] + 0.5) / scale) ** -beta / beta
    tail_down = measure.c_minus * ((-lattice[bottom] + 0.5) / scale) ** -beta / beta
    return body + tail_up * values[top] + tail_down * values[bottom]


def skew_resolvent_at_zero(
    f: TestFunction,
    lam: float,
    measure: EtaStarMeasure,
    alpha: float,
    v_proxy: float = 1e6,
    method: Literal["auto", "fourier", "proxy"] = "auto",
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> SkewResolventResult:
    """lambda R_lambda f(0) = int V f d eta* / int V 1 d eta* for the skew stable process.

    The proxy evaluates V on the lattice of the Poissonised walk at v_proxy; its
    error is reported against the closed form of int V 1 d eta*, or against the
    Fourier value when f is even with a known transform.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive.")
    denominator = stable_v1_eta_star(lam, alpha, measure)
    if f.name == "one":
        return SkewResolventResult(
            value=1.0, numerator=denominator, denominator=denominator, method="exact"
        )
    fourier_ok = f.parity == "even" and f.fourier is not None
    use_fourier = method == "fourier" or (method == "auto" and fourier_ok)
    if use_fourier and not fourier_ok:
        raise ValueError("The Fourier route needs an even f with a known transform.")

    xi_law = LatticeStableLaw(alpha=alpha)
    green = killed_green_lattice(float(lam), float(v_proxy), xi_law)
    scale = green.scale
    proxy_f = _proxy_eta_star(green.killed(f.fn), green.lattice, scale, measure)
    proxy_1 = _proxy_eta_star(green.killed(_one), green.lattice, scale, measure)
    proxy_value = proxy_f / proxy_1

    if not use_fourier:
        return SkewResolventResult(
            value=proxy_value,
            numerator=proxy_f,
            denominator=proxy_1,
            proxy_value=proxy_value,
            proxy_error=abs(proxy_1 - denominator) / denominator,
            method="proxy",
        )
    beta = measure.beta
    rf0 = _fourier_moment(f, lam, alpha, 0.0, spec).value / math.pi
    moment = _fourier_moment(f, lam, alpha, beta, spec).value
    weight = measure.c_plus + measure.c_minus
    numerator = weight * (rf0 * lam * denominator / weight - _fractional_constant(beta) / math.pi * moment)
    value = numerator / denominator
    return SkewResolventResult(
        value=value,
        numerator=numerator,
        denominator=denominator,
        proxy_value=proxy_value,
        proxy_error=abs(proxy_value - value),
        method="fourier",
    )


def tail_functional(
    g_family: TestFunction | Callable[[float], TestFunction],
    eta_law: PerturbationLaw,
    u_grid: list[float],
    head: int = ETA_HEAD,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> list[TailFunctionalPoint]:
    """E g_u(eta/u) / P{|eta| > u} along u_grid.

    The expectation sums the pmf exactly over |k| <= head and integrates the power
    tail beyond it. The normalised ratio divides by beta as well, so it tends to
    int g d eta* with eta* built from (beta, c_+, c_-).
    """
    if not eta_law.heavy_tailed:
        raise ValueError("The tail functional needs a heavy-tailed perturbation.")
    beta = eta_law.beta
    ks = np.arange(1, head + 1, dtype=float)
    pmf = eta_law.abs_constant * ks ** -(1 + beta)
    points = []
    for u in u_grid:
        g = g_family if isinstance(g_family, TestFunction) else g_family(u)
        g.check_modulus(beta)
        expectation = 0.0
        err = 0.0
        for sign, weight in ((1, eta_law.c_plus), (-1, eta_law.c_minus)):
            if weight == 0:
                continue
            body = math.fsum(pmf * g.fn(sign * ks / u))

            def tail_density(y: float, sign=sign) -> float:
                return float(g.fn(sign * y)) * y ** -(1 + beta)

            start = (head + 0.5) / u
            cuts = sorted({start, *[abs(b) for b in g.breakpoints if abs(b) > start]})
            pieces = [_quad(tail_density, lo, hi, spec) for lo, hi in zip(cuts, cuts[1:])]
            pieces.append(_quad(tail_density, cuts[-1], math.inf, spec))
            tail = _sum_results(pieces)
            expectation += weight * (body + eta_law.abs_constant * u**-beta * tail.value)
            err += weight * eta_law.abs_constant * u**-beta * tail.err_estimate
        total_tail = float(eta_law.tail(u))
        points.append(
            TailFunctionalPoint(
                u=u,
                ratio=expectation / (beta * total_tail),
                raw_ratio=expectation / total_tail,
                err=err / total_tail,
            )
        )
    return points


def resolvent_splitting_check(
    x: float,
    f: TestFunction,
    lam: float,
    v: float,
    xi_law: LatticeStableLaw,
    eta_law: PerturbationLaw,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> SplittingCheck:
    """Independent MC estimates of the three terms of the resolvent splitting at 0."""
    scale = norming_a(xi_law, v)
    m = math.floor(x * scale)
    full = discounted_occupation(
        xi_law, m, v, lam, f.fn, scale, n_paths, seed, eta_law=eta_law, stream=11, workers=workers
    )
    killed = discounted_occupation(
        xi_law, m, v, lam, f.fn, scale, n_paths, seed, stream=12, workers=workers
    )
    at_zero = discounted_occupation(
        xi_law, 0, v, lam, f.fn, scale, n_paths, seed, eta_law=eta_law, stream=13, workers=workers
    )
    hits = first_hit_times(xi_law, m, n_paths, seed, cap=10**7, stream=14, workers=workers)
    rng = make_rng(seed, 15)
    clock = np.where(
        hits.censored, np.inf, rng.gamma(np.maximum(hits.times, 1), 1.0 / v)
    )
    clock = np.where(hits.times == 0, 0.0, clock)
    laplace = np.exp(-lam * clock)
    h, r0 = float(laplace.mean()), float(at_zero.mean())
    variance = (
        full.var(ddof=1) / n_paths
        + killed.var(ddof=1) / n_paths
        + (r0**2) * laplace.var(ddof=1) / n_paths
        + (h**2) * at_zero.var(ddof=1) / n_paths
    )
    return SplittingCheck(
        x=x,
        resolvent=float(full.mean()),
        killed=float(killed.mean()),
        hit_laplace=h,
        resolvent_at_zero=r0,
        standard_error=math.sqrt(variance),
    )


def fit_hitting_defect_constant(
    lam: float,
    xi_law: LatticeStableLaw,
    delta: float,
    v_grid: list[float],
    x_grid: list[float],
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> dict[float, float]:
    """Per v, max over x in (0, 1] of (1 - E e^(-(lambda/v) sigma)) / |x|^(alpha - 1 - delta)."""
    power = xi_law.alpha - 1 - delta
    if power <= 0:
        raise ValueError("delta must be below alpha - 1.")
    fitted = {}
    for v in v_grid:
        ratios = []
        for x in x_grid:
            if x == 0 or abs(x) > 1:
                continue
            defect = 1 - discrete_hit_laplace_scaled(x, lam, v, xi_law, spec)
            ratios.append(defect / abs(x) ** power)
        fitted[v] = max(ratios)
    return fitted
