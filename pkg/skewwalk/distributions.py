"""Lattice step laws, perturbation laws and their norming functions.

The step law is the symmetric zeta-type law P{xi = +-k} = C k^-(1+alpha), k >= 1,
with the remaining mass at 0. Its characteristic function is evaluated through the
periodic zeta expansion

    sum_k cos(k theta) / k^s = Gamma(1-s) cos(pi (s-1)/2) |theta|^(s-1)
                               + sum_j (-1)^j zeta(s-2j) theta^(2j) / (2j)!,

valid for |theta| < 2 pi, which gives 1 - psi(theta) without cancellation and with
truncation error far below 1e-12.
"""

import logging
import math
from functools import lru_cache
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import optimize, special

from .errors import NormingError
from .models import EtaLawConfig, XiLawConfig
from .utils import make_rng

logger = logging.getLogger(__name__)

HEAD_SIZE = 2**14
MAX_DRAW = 2**53
_SERIES_TERMS = 40


def stable_norming_constant(alpha: float) -> float:
    """K_alpha = -Gamma(2-alpha) cos(pi alpha / 2) / (alpha - 1)."""
    if not 1 < alpha < 2:
        raise ValueError("alpha must lie in (1, 2).")
    return -special.gamma(2 - alpha) * math.cos(math.pi * alpha / 2) / (alpha - 1)


@lru_cache(maxsize=64)
def _periodic_zeta_coefficients(s: float) -> np.ndarray:
    j = np.arange(1, _SERIES_TERMS + 1)
    return (-1.0) ** j * special.zeta(s - 2 * j) / special.factorial(2 * j)


def _reduce_angle(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return np.abs(np.remainder(theta + np.pi, 2 * np.pi) - np.pi)


@lru_cache(maxsize=64)
def _abs_tail_table(s: float, c_abs: float, head: int) -> np.ndarray:
    # P{|X| > k} for k = 0..head
    return c_abs * special.zeta(s, np.arange(1, head + 2, dtype=float))


def _invert_zeta_tail(r: np.ndarray, s: float, c_abs: float, head: int) -> np.ndarray:
    """Smallest integer k > head with c_abs * zeta(s, k+1) < r, vectorised."""
    index = s - 1
    guess = np.maximum((c_abs / (index * r)) ** (1 / index), head + 1.0)
    lo = np.full_like(r, math.log(head))
    hi = np.log(np.minimum(4 * guess + 8, float(MAX_DRAW)))
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        above = c_abs * special.zeta(s, np.exp(mid) + 1) >= r
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    k = np.floor(np.exp(hi)).astype(np.int64)
    k = np.clip(k, head + 1, MAX_DRAW)
    for _ in range(4):
        down = (k > head + 1) & (c_abs * special.zeta(s, k.astype(float)) < r)
        k = np.where(down, k - 1, k)
        up = (k < MAX_DRAW) & (c_abs * special.zeta(s, k + 1.0) >= r)
        k = np.where(up, k + 1, k)
    truncated = int(np.count_nonzero(k >= MAX_DRAW))
    if truncated:
        logger.warning("Truncated %d draws at 2^53.", truncated)
    return k


def _draw_abs_zeta(
    rng: np.random.Generator, n: int, s: float, c_abs: float
) -> np.ndarray:
    tails = _abs_tail_table(s, c_abs, HEAD_SIZE)
    r = 1.0 - rng.random(n)
    k = np.searchsorted(-tails, -r, side="right").astype(np.int64)
    in_tail = k > HEAD_SIZE
    if np.any(in_tail):
        k[in_tail] = _invert_zeta_tail(r[in_tail], s, c_abs, HEAD_SIZE)
    return k


class LatticeStableLaw(BaseModel):
    """Symmetric integer law with P{xi=+-k} = C k^-(1+alpha) and the rest at 0."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(gt=1, lt=2, description="Tail index.")
    tail_constant: float = Field(default=0.25, gt=0, description="Constant C.")

    @model_validator(mode="after")
    def validate_mass(self) -> "LatticeStableLaw":
        if 2 * self.tail_constant * special.zeta(1 + self.alpha) > 1 + 1e-12:
            raise ValueError(
                "tail_constant too large: 2 C zeta(1+alpha) must not exceed 1."
            )
        return self

    @property
    def stable_index(self) -> float:
        return self.alpha

    @property
    def mass_at_zero(self) -> float:
        return max(0.0, 1.0 - 2 * self.tail_constant * special.zeta(1 + self.alpha))

    @property
    def leading_coefficient(self) -> float:
        """kappa in 1 - psi(theta) ~ kappa |theta|^alpha as theta -> 0."""
        return 2 * self.tail_constant / self.alpha * stable_norming_constant(self.alpha)

    @property
    def is_symmetric(self) -> bool:
        return True

    def pmf(self, k) -> np.ndarray:
        k = np.abs(np.asarray(k, dtype=float))
        safe = np.where(k == 0, 1.0, k)
        return np.where(
            k == 0, self.mass_at_zero, self.tail_constant * safe ** -(1 + self.alpha)
        )

    def tail(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        q = np.floor(np.maximum(x, 0.0)) + 1
        return 2 * self.tail_constant * special.zeta(1 + self.alpha, q)

    def tail_interp(self, x) -> np.ndarray:
        """Continuous decreasing extension of tail to real x > -1."""
        return 2 * self.tail_constant * special.zeta(
            1 + self.alpha, np.asarray(x, dtype=float) + 1
        )

    def one_minus_charfn(self, theta) -> np.ndarray:
        th = _reduce_angle(theta)
        s = 1 + self.alpha
        lead = special.gamma(-self.alpha) * math.cos(math.pi * self.alpha / 2)
        coefs = _periodic_zeta_coefficients(s)
        th2 = th * th
        series = np.zeros_like(th)
        for c in coefs[::-1]:
            series = (series + c) * th2
        return -2 * self.tail_constant * (lead * th**self.alpha + series)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        magnitude = _draw_abs_zeta(rng, n, 1 + self.alpha, 2 * self.tail_constant)
        sign = np.where(rng.random(n) < 0.5, -1, 1)
        return magnitude * sign


class FiniteLatticeLaw(BaseModel):
    """Integer law with finite support, e.g. the simple +-1 walk."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    values: tuple[int, ...]
    probs: tuple[float, ...]

    @model_validator(mode="after")
    def validate_probs(self) -> "FiniteLatticeLaw":
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("values and probs must be nonempty and of equal length.")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to one.")
        return self

    @property
    def stable_index(self) -> float:
        return 2.0

    @property
    def mass_at_zero(self) -> float:
        return sum(p for v, p in zip(self.values, self.probs) if v == 0)

    @property
    def leading_coefficient(self) -> float:
        return 0.5 * sum(p * v * v for v, p in zip(self.values, self.probs))

    @property
    def is_symmetric(self) -> bool:
        table = dict(zip(self.values, self.probs))
        return all(abs(p - table.get(-v, 0.0)) < 1e-15 for v, p in table.items())

    def pmf(self, k) -> np.ndarray:
        table = dict(zip(self.values, self.probs))
        k = np.asarray(k)
        return np.vectorize(lambda j: table.get(int(j), 0.0), otypes=[float])(k)

    def tail(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        vals = np.abs(np.array(self.values, dtype=float))
        probs = np.array(self.probs)
        return (probs[None, :] * (vals[None, :] > x.reshape(-1, 1))).sum(axis=1).reshape(
            x.shape
        )

    def one_minus_charfn(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        total = np.zeros_like(theta)
        for v, p in zip(self.values, self.probs):
            total = total + 2 * p * np.sin(v * theta / 2) ** 2
        return total

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        cdf = np.cumsum(self.probs)
        idx = np.searchsorted(cdf, rng.random(n), side="right")
        idx = np.minimum(idx, len(self.values) - 1)
        return np.asarray(self.values, dtype=np.int64)[idx]


def simple_walk() -> FiniteLatticeLaw:
    """The two-point law P{xi=+-1} = 1/2."""
    return FiniteLatticeLaw(values=(-1, 1), probs=(0.5, 0.5))


class PerturbationLaw(BaseModel):
    """Integer law of the jump from zero."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: Literal["one_sided", "two_sided", "constant", "geometric"]
    beta: float | None = Field(default=None, gt=0, lt=1)
    c_plus: float = Field(default=1.0, ge=0, le=1)
    tail_constant: float | None = Field(default=None, gt=0)
    constant_value: int = 1
    geometric_p: float = Field(default=0.5, gt=0, le=1)

    @field_validator("constant_value")
    def validate_constant_value(cls, value: int) -> int:
        if value == 0:
            raise ValueError("A constant perturbation must be nonzero (P{eta=0} < 1).")
        return value

    @model_validator(mode="after")
    def validate_law(self) -> "PerturbationLaw":
        if self.mode == "one_sided" and self.c_plus != 1.0:
            raise ValueError("one_sided perturbations put all mass on the positive side.")
        if self.heavy_tailed:
            if self.beta is None:
                raise ValueError(f"beta must be set in {self.mode} mode.")
            if self.abs_constant * special.zeta(1 + self.beta) > 1 + 1e-12:
                raise ValueError("tail_constant too large for a probability law.")
        return self

    @property
    def heavy_tailed(self) -> bool:
        return self.mode in ("one_sided", "two_sided")

    @property
    def finite_mean(self) -> bool:
        return not self.heavy_tailed

    @property
    def c_minus(self) -> float:
        return 1.0 - self.c_plus

    @property
    def abs_constant(self) -> float:
        """C in P{|eta| = k} = C k^-(1+beta)."""
        if self.tail_constant is not None:
            return self.tail_constant
        return 1.0 / special.zeta(1 + self.beta)

    @property
    def mass_at_zero(self) -> float:
        if self.heavy_tailed:
            return max(0.0, 1.0 - self.abs_constant * special.zeta(1 + self.beta))
        return 0.0

    def pmf(self, k) -> np.ndarray:
        k = np.asarray(k)
        kf = np.abs(k.astype(float))
        side = np.where(k > 0, self.c_plus, np.where(k < 0, self.c_minus, 0.0))
        if self.mode == "constant":
            return (k == self.constant_value).astype(float)
        if self.mode == "geometric":
            p = self.geometric_p
            safe = np.maximum(kf, 1.0)
            return np.where(kf >= 1, side * p * (1 - p) ** (safe - 1), 0.0)
        safe = np.where(kf == 0, 1.0, kf)
        return np.where(
            kf == 0, self.mass_at_zero, side * self.abs_constant * safe ** -(1 + self.beta)
        )

    def tail(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        q = np.floor(np.maximum(x, 0.0))
        if self.mode == "constant":
            return (abs(self.constant_value) > x).astype(float)
        if self.mode == "geometric":
            return np.where(x < 0, 1.0, (1 - self.geometric_p) ** q)
        return np.where(
            x < 0,
            1.0 - self.mass_at_zero,
            self.abs_constant * special.zeta(1 + self.beta, q + 1),
        )

    def tail_interp(self, x) -> np.ndarray:
        if not self.heavy_tailed:
            raise ValueError("tail_interp is defined for heavy-tailed perturbations only.")
        return self.abs_constant * special.zeta(
            1 + self.beta, np.asarray(x, dtype=float) + 1
        )

    def signed_tail(self, x, sign: int) -> np.ndarray:
        """P{sign * eta > x}."""
        x = np.asarray(x, dtype=float)
        if self.mode == "constant":
            return (sign * self.constant_value > x).astype(float)
        weight = self.c_plus if sign > 0 else self.c_minus
        return weight * self.tail(x)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.mode == "constant":
            return np.full(n, self.constant_value, dtype=np.int64)
        if self.mode == "geometric":
            p = self.geometric_p
            r = 1.0 - rng.random(n)
            if p == 1.0:
                magnitude = np.ones(n, dtype=np.int64)
            else:
                magnitude = (np.floor(np.log(r) / math.log1p(-p)) + 1).astype(np.int64)
        else:
            magnitude = _draw_abs_zeta(rng, n, 1 + self.beta, self.abs_constant)
        sign = np.where(rng.random(n) < self.c_plus, 1, -1)
        return magnitude * sign


IntegerLaw = LatticeStableLaw | FiniteLatticeLaw | PerturbationLaw


def charfn(law: LatticeStableLaw | FiniteLatticeLaw, theta) -> np.ndarray | float:
    """psi(theta) = E exp(i theta xi), real for the symmetric laws handled here."""
    if not law.is_symmetric:
        raise ValueError("Only symmetric step laws have a real characteristic function.")
    value = 1.0 - law.one_minus_charfn(theta)
    return float(value) if np.ndim(value) == 0 else value


def one_minus_charfn(law: LatticeStableLaw | FiniteLatticeLaw, theta):
    value = law.one_minus_charfn(theta)
    return float(value) if np.ndim(value) == 0 else value


def tail(law: IntegerLaw, x) -> np.ndarray | float:
    """P{|X| > x}."""
    value = law.tail(x)
    return float(value) if np.ndim(value) == 0 else value


def asymmetry(law: PerturbationLaw, x) -> tuple[float, float]:
    """(P{eta > x}, P{-eta > x}) divided by P{|eta| > x}."""
    total = float(law.tail(x))
    if total == 0:
        raise ValueError(f"P{{|eta| > {x}}} vanishes; asymmetry undefined.")
    return float(law.signed_tail(x, 1)) / total, float(law.signed_tail(x, -1)) / total


def sample(law: IntegerLaw, seed: int, n: int, stream: int = 0) -> np.ndarray:
    """n i.i.d. draws from the law, reproducible from (seed, stream)."""
    if n < 1:
        raise ValueError("n must be at least 1.")
    return law.draw(make_rng(seed, stream), n)


class NormingFunction(BaseModel):
    """a(v) or c(v): solution of v * P{|X| > a(v)} = target on the real-extended tail."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["a_of_v", "c_of_v"]
    law: LatticeStableLaw | PerturbationLaw

    @model_validator(mode="after")
    def validate_kind(self) -> "NormingFunction":
        if self.kind == "a_of_v" and not isinstance(self.law, LatticeStableLaw):
            raise ValueError("a(v) is defined for the lattice stable step law.")
        if self.kind == "c_of_v":
            if not isinstance(self.law, PerturbationLaw) or not self.law.heavy_tailed:
                raise ValueError("c(v) is only used for heavy-tailed perturbations.")
        return self

    @property
    def index(self) -> float:
        return self.law.alpha if self.kind == "a_of_v" else self.law.beta

    @property
    def target(self) -> float:
        # 1/K_alpha makes v (1 - psi(theta / a(v))) tend to |theta|^alpha
        if self.kind == "a_of_v":
            return 1.0 / stable_norming_constant(self.law.alpha)
        return 1.0

    def __call__(self, v: float) -> float:
        return _solve_norming(self, float(v))


@lru_cache(maxsize=4096)
def _solve_norming(norming: NormingFunction, v: float) -> float:
    if v <= 0:
        raise ValueError("v must be positive.")
    log_target = math.log(norming.target)

    def residual(log_q: float) -> float:
        # q = x + 1 > 0 keeps the Hurwitz argument valid
        return math.log(v * float(norming.law.tail_interp(math.exp(log_q) - 1))) - log_target

    index = norming.index
    scale = (v / norming.target) ** (1 / index)
    lo, hi = math.log(1e-12), math.log(8 * scale + 16)
    if residual(lo) < 0:
        raise NormingError(f"Cannot bracket the norming equation at v={v}.")
    while residual(hi) > 0:
        hi += math.log(4.0)
        if hi > 200:
            raise NormingError(f"Cannot bracket the norming equation at v={v}.")
    log_q = optimize.brentq(residual, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    x = math.exp(log_q) - 1
    if x <= 0:
        raise NormingError(f"v={v} is below the range where the norming value is positive.")
    return x


def norming_a(law: LatticeStableLaw, v: float) -> float:
    """a(v) with v P{|xi| > a(v)} = 1 / K_alpha, so that S_xi(vt) / a(v) has exponent |theta|^alpha."""
    return NormingFunction(kind="a_of_v", law=law)(v)


def norming_c(law: PerturbationLaw, v: float) -> float:
    """c(v) with v P{|eta| > c(v)} = 1."""
    return NormingFunction(kind="c_of_v", law=law)(v)


def classify_regime(alpha: float, eta_law: PerturbationLaw) -> str:
    """Which scaling limit the perturbed walk has: skew, vanishing or boundary."""
    if eta_law.finite_mean:
        return "vanishing"
    if math.isclose(eta_law.beta, alpha - 1, abs_tol=1e-12):
        return "boundary"
    return "skew" if eta_law.beta < alpha - 1 else "vanishing"


def xi_law_from_config(block: XiLawConfig) -> LatticeStableLaw:
    if block.tail_constant is None:
        return LatticeStableLaw(alpha=block.alpha)
    return LatticeStableLaw(alpha=block.alpha, tail_constant=block.tail_constant)


def eta_law_from_config(block: EtaLawConfig) -> PerturbationLaw:
    return PerturbationLaw(
        mode=block.eta_mode,
        beta=block.beta if block.eta_mode in ("one_sided", "two_sided") else None,
        c_plus=1.0 if block.eta_mode == "one_sided" else block.c_plus,
        tail_constant=block.tail_constant,
        constant_value=block.constant_value,
        geometric_p=block.geometric_p,
    )
