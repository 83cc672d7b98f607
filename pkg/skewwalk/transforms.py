"""Generating functions and Laplace transforms of hitting times.

Discrete objects (u_s, E_x s^sigma, Poissonised hitting transforms) are computed from
the inversion integral of 1 / (1 - s psi); the continuous ones from the symmetric
stable resolvent density v_lambda. Every integrand is real and even, so integrals
run over [0, pi] (or [0, inf)) with a cosine weight handled by QUADPACK.
"""

import logging
import math
from functools import lru_cache

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import integrate

from .distributions import FiniteLatticeLaw, LatticeStableLaw, norming_a
from .errors import QuadratureError
from .models import QuadratureSpec, TransformResult

logger = logging.getLogger(__name__)

DEFAULT_QUADRATURE = QuadratureSpec()
SERIES_GRID = 2**16

StepLaw = LatticeStableLaw | FiniteLatticeLaw


def _quad(func, a: float, b: float, spec: QuadratureSpec, **kwargs) -> TransformResult:
    """One QUADPACK call; a tolerance miss becomes QuadratureError."""
    if b <= a:
        return TransformResult(value=0.0, err_estimate=0.0, n_evals=0)
    options = {"epsabs": spec.abs_tol, "limit": spec.max_subdivisions, "full_output": 1}
    if not (kwargs.get("weight") and math.isinf(b)):
        options["epsrel"] = spec.rel_tol
    else:
        options["limlst"] = max(50, spec.max_subdivisions // 10)
    out = integrate.quad(func, a, b, **options, **kwargs)
    value, err, info = out[0], out[1], out[2]
    result = TransformResult(
        value=float(value),
        err_estimate=float(abs(err)),
        n_evals=int(info.get("neval", 0)) if isinstance(info, dict) else 0,
    )
    if len(out) > 3:
        allowed = 10 * max(spec.abs_tol, spec.rel_tol * abs(value))
        if not math.isfinite(err) or abs(err) > allowed:
            raise QuadratureError(
                f"Quadrature on [{a}, {b}] missed tolerance: {out[3]}", result=result
            )
        logger.debug("Accepted quadrature with warning on [%s, %s]: %s", a, b, out[3])
    return result


def _sum_results(parts: list[TransformResult], method: str = "quadrature") -> TransformResult:
    return TransformResult(
        value=math.fsum(p.value for p in parts),
        err_estimate=math.fsum(p.err_estimate for p in parts),
        n_evals=sum(p.n_evals for p in parts),
        method=method,
    )


def _panels(first: float, upper: float, extra: tuple[float, ...] = ()) -> list[float]:
    """Breakpoints 0 < first < 10 first < ... < upper, merged with extra points."""
    points = {0.0, upper}
    point = first
    while point < upper:
        points.add(point)
        point *= 10
    points.update(p for p in extra if 0 < p < upper)
    return sorted(points)


def _cos_panels(func, points: list[float], omega: float, spec: QuadratureSpec) -> TransformResult:
    parts = []
    for lo, hi in zip(points, points[1:]):
        if omega == 0:
            parts.append(_quad(func, lo, hi, spec))
        else:
            parts.append(_quad(func, lo, hi, spec, weight="cos", wvar=omega))
    return _sum_results(parts)


def _check_symmetric(law: StepLaw) -> None:
    if not law.is_symmetric:
        raise ValueError("Transforms are implemented for symmetric step laws only.")


def _resolvent_scale(law: StepLaw, one_minus_s: float, s: float) -> float:
    """theta where s (1 - psi(theta)) reaches 1 - s."""
    return min(math.pi, (one_minus_s / (s * law.leading_coefficient)) ** (1 / law.stable_index))


@lru_cache(maxsize=4096)
def _u_s_cached(x: int, s: float, law: StepLaw, spec: QuadratureSpec) -> TransformResult:
    one_minus_s = 1.0 - s

    def integrand(theta: float) -> float:
        return 1.0 / (one_minus_s + s * float(law.one_minus_charfn(theta)))

    points = _panels(_resolvent_scale(law, one_minus_s, s) / 10, math.pi)
    result = _cos_panels(integrand, points, float(abs(x)), spec)
    return TransformResult(
        value=result.value / math.pi,
        err_estimate=result.err_estimate / math.pi,
        n_evals=result.n_evals,
        method="quadrature",
    )


def u_s(
    x: int, s: float, law: StepLaw, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> TransformResult:
    """u_s(x) = sum_k s^k P{S_k = x} = (1/2pi) int_{-pi}^{pi} e^{ix theta} / (1 - s psi) d theta.

    The law is symmetric, so u_s(-x) = u_s(x).
    """
    if not 0 <= s < 1:
        raise ValueError("s must lie in [0, 1).")
    _check_symmetric(law)
    if s == 0:
        return TransformResult(value=float(x == 0), err_estimate=0.0, method="exact")
    return _u_s_cached(int(x), float(s), law, spec)


@lru_cache(maxsize=32)
def _series_transform(s: float, law: StepLaw, terms: int, grid: int) -> np.ndarray:
    theta = 2 * np.pi * np.arange(grid) / grid
    phi = 1.0 - np.asarray(law.one_minus_charfn(theta))
    ratio = s * phi
    partial = (1.0 - ratio ** (terms + 1)) / (1.0 - ratio)
    return np.fft.ifft(partial).real


def u_s_series(
    x: int, s: float, law: StepLaw, terms: int = 2000, grid: int = SERIES_GRID
) -> TransformResult:
    """sum_{k<=terms} s^k P{S_k = x} from convolution powers on a periodic lattice.

    The powers are taken in Fourier space at the exact characteristic function on the
    grid; the error estimate is the truncation bound s^(terms+1) / (1 - s).
    """
    if not 0 <= s < 1:
        raise ValueError("s must lie in [0, 1).")
    _check_symmetric(law)
    if s == 0:
        return TransformResult(value=float(x == 0), err_estimate=0.0, method="exact")
    values = _series_transform(float(s), law, terms, grid)
    return TransformResult(
        value=float(values[int(x) % grid]),
        err_estimate=s ** (terms + 1) / (1 - s),
        n_evals=terms,
        method="series",
    )


def hit_gf(x: int, s: float, law: StepLaw, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """E_x s^sigma = u_s(-x) / u_s(0)."""
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1).")
    if x == 0:
        return 1.0
    return u_s(-x, s, law, spec).value / u_s(0, s, law, spec).value


def poisson_hit_laplace(
    x: int, lam: float, rho: float, law: StepLaw, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """E_x exp(-lam sigma~) for the walk run on a rate-rho Poisson clock."""
    if lam <= 0 or rho <= 0:
        raise ValueError("lambda and rho must be positive.")
    if x == 0:
        return 1.0
    return hit_gf(x, rho / (lam + rho), law, spec)


def poisson_resolvent_density(
    x: int, lam: float, rho: float, law: StepLaw, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> TransformResult:
    """u^_lambda(x) = u_s(x) / (lambda + rho) with s = rho / (lambda + rho)."""
    if lam <= 0 or rho <= 0:
        raise ValueError("lambda and rho must be positive.")
    inner = u_s(x, rho / (lam + rho), law, spec)
    return TransformResult(
        value=inner.value / (lam + rho),
        err_estimate=inner.err_estimate / (lam + rho),
        n_evals=inner.n_evals,
        method=inner.method,
    )


def stable_resolvent_density_closed_form(lam: float, alpha: float) -> float:
    """v_lambda(0) = lambda^(1/alpha - 1) / (alpha sin(pi / alpha))."""
    return lam ** (1 / alpha - 1) / (alpha * math.sin(math.pi / alpha))


@lru_cache(maxsize=4096)
def _stable_resolvent_cached(
    x: float, lam: float, alpha: float, spec: QuadratureSpec
) -> TransformResult:
    def integrand(theta: float) -> float:
        return 1.0 / (lam + theta**alpha)

    knee = lam ** (1 / alpha)
    split = spec.tail_split * max(1.0, knee)
    body = _cos_panels(integrand, _panels(knee, split, (1.0,)), x, spec)
    if x == 0:
        # int_A^inf theta^-alpha exactly, the remainder decays like theta^-2alpha
        head = split ** (1 - alpha) / (alpha - 1)
        rest = _quad(
            lambda t: -lam / (t**alpha * (lam + t**alpha)), split, math.inf, spec
        )
        tail = TransformResult(
            value=head + rest.value, err_estimate=rest.err_estimate, n_evals=rest.n_evals
        )
    else:
        tail = _quad(integrand, split, math.inf, spec, weight="cos", wvar=x)
    total = _sum_results([body, tail])
    return TransformResult(
        value=total.value / math.pi,
        err_estimate=total.err_estimate / math.pi,
        n_evals=total.n_evals,
        method="quadrature",
    )


def stable_resolvent_density(
    x: float, lam: float, alpha: float, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> TransformResult:
    """v_lambda(x) = (1/pi) int_0^inf cos(x theta) / (lambda + theta^alpha) d theta.

    The body [0, A] is split at lambda^(1/alpha) and 1; the tail beyond A is
    integrated cycle by cycle with extrapolation (QAWF).
    """
    if lam <= 0:
        raise ValueError("lambda must be positive.")
    if not 1 < alpha < 2:
        raise ValueError("alpha must lie in (1, 2).")
    return _stable_resolvent_cached(abs(float(x)), float(lam), float(alpha), spec)


def _ratio(numerator: TransformResult, denominator: TransformResult, method: str) -> TransformResult:
    """numerator / denominator with first-order error propagation."""
    value = numerator.value / denominator.value
    err = (numerator.err_estimate + abs(value) * denominator.err_estimate) / abs(denominator.value)
    return TransformResult(
        value=value,
        err_estimate=err,
        n_evals=numerator.n_evals + denominator.n_evals,
        method=method,
    )


def stable_hit_laplace_result(
    x: float, lam: float, alpha: float, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> TransformResult:
    """stable_hit_laplace with the quadrature error of the ratio."""
    if x == 0:
        return TransformResult(value=1.0, err_estimate=0.0, method="exact")
    return _ratio(
        stable_resolvent_density(x, lam, alpha, spec),
        stable_resolvent_density(0.0, lam, alpha, spec),
        "stable",
    )


def stable_hit_laplace(
    x: float, lam: float, alpha: float, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """E_x exp(-lambda sigma) for the symmetric alpha-stable process: v(-x) / v(0)."""
    return stable_hit_laplace_result(x, lam, alpha, spec).value


def scaled_char_exponent(theta, v: float, law: LatticeStableLaw) -> np.ndarray | float:
    """v (1 - psi(theta / a(v)))."""
    value = v * np.asarray(law.one_minus_charfn(np.asarray(theta, dtype=float) / norming_a(law, v)))
    return float(value) if np.ndim(value) == 0 else value


@lru_cache(maxsize=4096)
def _scaled_integral(
    m: int, lam: float, v: float, law: LatticeStableLaw, spec: QuadratureSpec
) -> TransformResult:
    """int_0^{pi a} cos(theta m / a) / (lambda + v (1 - psi(theta / a))) d theta."""
    a = norming_a(law, v)

    def integrand(theta: float) -> float:
        return 1.0 / (lam + v * float(law.one_minus_charfn(theta / a)))

    points = _panels(min(1.0, lam ** (1 / law.alpha)) / 10, math.pi * a, (lam ** (1 / law.alpha),))
    return _cos_panels(integrand, points, abs(m) / a, spec)


def discrete_hit_laplace_scaled_result(
    x: float,
    lam: float,
    v: float,
    xi_law: LatticeStableLaw,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> TransformResult:
    """discrete_hit_laplace_scaled with the quadrature error of the ratio."""
    if lam <= 0:
        raise ValueError("lambda must be positive.")
    if v < 1:
        raise ValueError("v must be at least 1.")
    m = math.floor(x * norming_a(xi_law, v))
    if m == 0:
        return TransformResult(value=1.0, err_estimate=0.0, method="exact")
    return _ratio(
        _scaled_integral(m, float(lam), float(v), xi_law, spec),
        _scaled_integral(0, float(lam), float(v), xi_law, spec),
        "discrete_scaled",
    )


def discrete_hit_laplace_scaled(
    x: float,
    lam: float,
    v: float,
    xi_law: LatticeStableLaw,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """E_{floor(x a(v))} exp(-(lambda/v) sigma(S o N)) as a ratio of scaled integrals."""
    return discrete_hit_laplace_scaled_result(x, lam, v, xi_law, spec).value


@lru_cache(maxsize=1024)
def _potential_kernel_cached(x: int, law: StepLaw, spec: QuadratureSpec) -> TransformResult:
    def integrand(theta: float) -> float:
        return (1.0 - math.cos(x * theta)) / float(law.one_minus_charfn(theta))

    lo = min(1e-3, math.pi / (10 * max(abs(x), 1)))
    parts = [_quad(integrand, 0.0, lo, spec), _quad(integrand, lo, math.pi, spec)]
    total = _sum_results(parts)
    return TransformResult(
        value=total.value / math.pi,
        err_estimate=total.err_estimate / math.pi,
        n_evals=total.n_evals,
        method="quadrature",
    )


def potential_kernel(
    x: int, law: StepLaw, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> TransformResult:
    """g(x) = (1/pi) int_0^pi (1 - cos(x theta)) / (1 - psi(theta)) d theta.

    Equals |x| for the simple walk.
    """
    _check_symmetric(law)
    if x == 0:
        return TransformResult(value=0.0, err_estimate=0.0, method="exact")
    return _potential_kernel_cached(abs(int(x)), law, spec)


class LatticeGreen(BaseModel):
    """Discounted Green function of the rate-v Poissonised walk on a periodic lattice.

    u[m mod M] holds u_s(m) with s = v / (v + lambda); the lattice point m sits at
    m / scale.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lam: float
    v: float
    scale: float
    size: int
    u: np.ndarray

    @property
    def s(self) -> float:
        return self.v / (self.v + self.lam)

    @property
    def lattice(self) -> np.ndarray:
        """Integer positions in FFT order."""
        return np.fft.fftfreq(self.size, d=1.0 / self.size).astype(np.int64)

    def hit(self, m) -> np.ndarray:
        """E_m s^sigma on the lattice."""
        return self.u[np.asarray(m) % self.size] / self.u[0]

    def killed(self, f) -> np.ndarray:
        """V^_lambda f at every lattice point, in FFT order.

        V(m) = [(u * f)(m) - h(m) (u * f)(0)] / (v + lambda), with h = u / u(0).
        """
        samples = np.asarray(f(self.lattice / self.scale), dtype=float)
        conv = np.fft.ifft(np.fft.fft(self.u) * np.fft.fft(samples)).real
        # u is even, so the circular correlation equals the convolution
        return (conv - self.u / self.u[0] * conv[0]) / (self.v + self.lam)

    def at(self, values: np.ndarray, m) -> np.ndarray:
        return values[np.asarray(m) % self.size]


def lattice_size(scale: float, minimum: int = 2**16) -> int:
    """Power-of-two period holding 64 a(v) points, between minimum and 2^22."""
    exponent = max(math.ceil(math.log2(minimum)), math.ceil(math.log2(64 * scale)))
    return min(2**exponent, max(minimum, 2**22))


@lru_cache(maxsize=16)
def killed_green_lattice(
    lam: float, v: float, law: LatticeStableLaw, size: int | None = None
) -> LatticeGreen:
    """Whole-lattice u_s for the Poissonised walk by FFT at the exact psi on the grid."""
    if lam <= 0 or v < 1:
        raise ValueError("Need lambda > 0 and v >= 1.")
    scale = norming_a(law, v)
    if size is None:
        size = lattice_size(scale)
    s = v / (v + lam)
    theta = 2 * np.pi * np.arange(size) / size
    symbol = 1.0 / ((1.0 - s) + s * np.asarray(law.one_minus_charfn(theta)))
    u = np.fft.ifft(symbol).real
    logger.debug("Built lattice Green function: lam=%s v=%s size=%d", lam, v, size)
    return LatticeGreen(lam=lam, v=v, scale=scale, size=size, u=u)
