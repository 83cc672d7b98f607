"""Simulation of the perturbed chain, its zero-visit counter and its Poissonization.

The chain moves by a fresh xi draw from every nonzero state and by a fresh eta draw
from 0. The k-th xi draw is consumed by the k-th step taken from a nonzero state and
the k-th eta draw by the k-th visit to 0, so that

    X(n) = X(0) + S_xi(n - T(n-1)) + S_eta(T(n-1))

holds as an identity of integers for every recorded path.
"""

import logging
import math
from functools import partial

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .distributions import (
    FiniteLatticeLaw,
    LatticeStableLaw,
    PerturbationLaw,
    norming_a,
)
from .utils import make_rng, map_ordered

logger = logging.getLogger(__name__)

STREAM_CHUNK = 2**14
SHARD_SIZE = 256
_MAX_BLOCK_CELLS = 2**22

StepLaw = LatticeStableLaw | FiniteLatticeLaw


class _DrawStream:
    """Ordered stream of draws from one law, refilled in fixed-size chunks."""

    def __init__(self, law, rng: np.random.Generator):
        self.law = law
        self.rng = rng
        self.chunks: list[np.ndarray] = []
        self.buffer = np.empty(0, dtype=np.int64)
        self.offset = 0
        self.consumed = 0

    def peek(self, k: int) -> np.ndarray:
        while self.buffer.size - self.offset < k:
            chunk = self.law.draw(self.rng, STREAM_CHUNK)
            self.chunks.append(chunk)
            self.buffer = np.concatenate([self.buffer[self.offset :], chunk])
            self.offset = 0
        return self.buffer[self.offset : self.offset + k]

    def advance(self, k: int) -> None:
        self.offset += k
        self.consumed += k

    def take(self) -> int:
        value = int(self.peek(1)[0])
        self.advance(1)
        return value

    def history(self) -> np.ndarray:
        if not self.chunks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(self.chunks)[: self.consumed]


class PathSample(BaseModel):
    """A simulated trajectory X(0..n) with its zero-visit counter T(0..n)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x0: int
    values: np.ndarray = Field(description="X(0..n) as int64.")
    zero_count: np.ndarray = Field(description="T(0..n) as int64.")
    seed: int
    xi_draws: np.ndarray = Field(description="xi increments in consumption order.")
    eta_draws: np.ndarray = Field(description="eta increments in consumption order.")
    xi_law: StepLaw | None = None
    eta_law: PerturbationLaw | None = None

    @property
    def n_steps(self) -> int:
        return self.values.size - 1

    def __repr__(self):
        return f"PathSample(x0={self.x0}, n_steps={self.n_steps}, zeros={int(self.zero_count[-1])}, seed={self.seed})"


class PoissonClock(BaseModel):
    """Event times of a Poisson process of the given rate on [0, t_max]."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rate: float = Field(gt=0)
    t_max: float = Field(ge=0)
    event_times: np.ndarray

    def count(self, t) -> np.ndarray | int:
        """N(t), the number of events in [0, t]."""
        value = np.searchsorted(self.event_times, t, side="right")
        return int(value) if np.ndim(value) == 0 else value


class ScaledTrajectory(BaseModel):
    """Right-continuous step function t -> X(N(vt)) / a(v)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    clock: PoissonClock
    values: np.ndarray = Field(description="Scaled chain value after each event.")
    scale: float

    def at(self, t) -> np.ndarray | float:
        value = self.values[self.clock.count(t)]
        return float(value) if np.ndim(value) == 0 else value


class HitTime(BaseModel):
    """First zero of a path; a censored outcome carries the cap as index."""

    index: int
    censored: bool = False


class HitTimes(BaseModel):
    """Vectorised first-passage times with censoring flags."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    x0: int
    times: np.ndarray
    censored: np.ndarray
    cap: int
    seed: int

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(self.censored))

    def survival(self, n) -> np.ndarray | float:
        """Empirical P{sigma > n}; censored paths count as survivors up to the cap."""
        n = np.asarray(n)
        if np.any(n >= self.cap):
            raise ValueError("Survival beyond the cap is not identified.")
        value = (self.times[None, :] > n.reshape(-1, 1)).mean(axis=1).reshape(n.shape)
        return float(value) if np.ndim(value) == 0 else value


class BatchResult(BaseModel):
    """Per-path summaries of a batch of perturbed chains."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    x0: np.ndarray
    n_steps: np.ndarray
    terminal: np.ndarray = Field(description="X(n) per path.")
    zero_count: np.ndarray = Field(description="T(n) per path.")
    eta_sum: np.ndarray = Field(description="S_eta(T(n-1)) per path.")
    eta_sup: np.ndarray = Field(description="max_k |S_eta(k)| over k <= T(n-1).")
    unperturbed: np.ndarray = Field(description="X(0) + S_xi(n) on the same xi stream.")
    checkpoint_steps: np.ndarray | None = Field(
        default=None, description="Checkpoint times per path, shape (n_paths, k)."
    )
    checkpoint_values: np.ndarray | None = None
    checkpoint_zeros: np.ndarray | None = None
    seed: int = 0


class ScaledMarginal(BaseModel):
    """Empirical law of X_v(floor(vt)) / a(v) with its coupled unperturbed twin."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray
    unperturbed: np.ndarray
    start: int
    scale: float
    n_steps: int
    seed: int

    def ecdf(self, grid) -> np.ndarray:
        grid = np.asarray(grid, dtype=float)
        ordered = np.sort(self.values)
        return np.searchsorted(ordered, grid, side="right") / ordered.size


def simulate_chain(
    xi_law: StepLaw,
    eta_law: PerturbationLaw,
    x0: int,
    n_steps: int,
    seed: int,
) -> PathSample:
    """Exact realisation of the perturbed recursion with recorded increment streams.

    The xi and eta streams are refilled in fixed chunks, so the path for a larger
    n_steps extends the path for a smaller one.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1.")
    xi_stream = _DrawStream(xi_law, make_rng(seed, 1))
    eta_stream = _DrawStream(eta_law, make_rng(seed, 2))
    values = np.empty(n_steps + 1, dtype=np.int64)
    values[0] = x = int(x0)
    pos = 0
    while pos < n_steps:
        if x == 0:
            x = eta_stream.take()
            pos += 1
            values[pos] = x
            continue
        width = min(n_steps - pos, STREAM_CHUNK)
        window = x + np.cumsum(xi_stream.peek(width))
        hits = np.flatnonzero(window == 0)
        used = int(hits[0]) + 1 if hits.size else width
        values[pos + 1 : pos + 1 + used] = window[:used]
        xi_stream.advance(used)
        pos += used
        x = int(values[pos])
    zero_count = np.cumsum(values == 0).astype(np.int64)
    logger.debug("Simulated %d steps from %d with %d zero visits.", n_steps, x0, zero_count[-1])
    return PathSample(
        x0=int(x0),
        values=values,
        zero_count=zero_count,
        seed=seed,
        xi_draws=xi_stream.history(),
        eta_draws=eta_stream.history(),
        xi_law=xi_law,
        eta_law=eta_law,
    )


def reconstruct_from_increments(path: PathSample) -> np.ndarray:
    """X(0) + S_xi(n - T(n-1)) + S_eta(T(n-1)) for n = 0..N."""
    s_xi = np.concatenate([[0], np.cumsum(path.xi_draws)])
    s_eta = np.concatenate([[0], np.cumsum(path.eta_draws)])
    out = np.empty_like(path.values)
    out[0] = path.x0
    n = np.arange(1, path.values.size)
    previous = path.zero_count[:-1]
    out[1:] = path.x0 + s_xi[n - previous] + s_eta[previous]
    return out


def first_hit_zero(
    source: PathSample | StepLaw,
    x0: int | None = None,
    seed: int = 0,
    cap: int = 10**8,
) -> HitTime:
    """sigma = inf{n >= 0 : X(n) = 0}, on a recorded path or on a fresh xi walk."""
    if isinstance(source, PathSample):
        zeros = np.flatnonzero(source.values == 0)
        if zeros.size:
            return HitTime(index=int(zeros[0]))
        return HitTime(index=source.n_steps, censored=True)
    if x0 is None:
        raise ValueError("x0 is required when simulating the hitting time.")
    hits = first_hit_times(source, x0, 1, seed, cap)
    return HitTime(index=int(hits.times[0]), censored=bool(hits.censored[0]))


def _first_hits_shard(
    xi_law: StepLaw, starts: np.ndarray, caps: np.ndarray, seed: int, stream: int, shard: int
) -> tuple[np.ndarray, np.ndarray]:
    rng = make_rng(seed, stream, shard)
    n = caps.size
    times = np.zeros(n, dtype=np.int64)
    censored = np.zeros(n, dtype=bool)
    position = starts.astype(np.int64).copy()
    alive = np.flatnonzero((caps > 0) & (position != 0))
    censored[(caps <= 0) & (position != 0)] = True
    block = 64
    while alive.size:
        width = int(min(block, max(1, _MAX_BLOCK_CELLS // alive.size)))
        steps = xi_law.draw(rng, alive.size * width).reshape(alive.size, width)
        walk = position[alive, None] + np.cumsum(steps, axis=1)
        remaining = caps[alive] - times[alive]
        inside = np.arange(width)[None, :] < remaining[:, None]
        zero = (walk == 0) & inside
        hit = zero.any(axis=1)
        first = np.argmax(zero, axis=1)
        advance = np.where(hit, first + 1, np.minimum(width, remaining))
        times[alive] += advance
        last = np.take_along_axis(walk, (advance - 1)[:, None], axis=1)[:, 0]
        position[alive] = np.where(hit, 0, last)
        out_of_steps = ~hit & (times[alive] >= caps[alive])
        censored[alive[out_of_steps]] = True
        alive = alive[~hit & ~out_of_steps]
        block = min(block * 2, 2**16)
    return times, censored


def first_hit_times(
    xi_law: StepLaw,
    x0: int,
    n_paths: int,
    seed: int,
    cap: int | np.ndarray = 10**8,
    stream: int = 0,
    workers: int = 1,
) -> HitTimes:
    """Independent first-passage times to 0 from x0, censored at cap steps.

    Paths are split into fixed shards with their own seed streams, so the result
    does not depend on the worker count.
    """
    caps = np.broadcast_to(np.asarray(cap, dtype=np.int64), (n_paths,)).copy()
    starts = np.full(n_paths, int(x0), dtype=np.int64)
    jobs = [
        partial(
            _first_hits_shard,
            xi_law,
            starts[i : i + SHARD_SIZE],
            caps[i : i + SHARD_SIZE],
            seed,
            stream,
            k,
        )
        for k, i in enumerate(range(0, n_paths, SHARD_SIZE))
    ]
    parts = map_ordered(jobs, workers)
    times = np.concatenate([p[0] for p in parts])
    censored = np.concatenate([p[1] for p in parts])
    if censored.any():
        logger.warning(
            "%d of %d first-passage paths from %d censored at the step cap.",
            int(censored.sum()),
            n_paths,
            x0,
        )
    return HitTimes(
        x0=int(x0), times=times, censored=censored, cap=int(caps.max(initial=0)), seed=seed
    )


def return_times(
    xi_law: StepLaw,
    n_paths: int,
    seed: int,
    cap: int = 10**8,
    stream: int = 0,
    workers: int = 1,
) -> HitTimes:
    """sigma+ = inf{n >= 1 : S(n) = 0} for the walk started at 0, censored at cap."""
    if cap < 1:
        raise ValueError("cap must be at least 1.")
    first = xi_law.draw(make_rng(seed, 5, stream), n_paths)
    caps = np.full(n_paths, cap - 1, dtype=np.int64)
    jobs = [
        partial(
            _first_hits_shard,
            xi_law,
            first[i : i + SHARD_SIZE],
            caps[i : i + SHARD_SIZE],
            seed,
            stream + 1,
            k,
        )
        for k, i in enumerate(range(0, n_paths, SHARD_SIZE))
    ]
    parts = map_ordered(jobs, workers)
    times = np.concatenate([p[0] for p in parts]) + 1
    censored = np.concatenate([p[1] for p in parts])
    if censored.any():
        logger.warning(
            "%d of %d return-time paths censored at the step cap.", int(censored.sum()), n_paths
        )
    return HitTimes(x0=0, times=times, censored=censored, cap=int(cap), seed=seed)


def poisson_clock(rate: float, t_max: float, seed: int, stream: int = 0) -> PoissonClock:
    """Event times on [0, t_max] built from i.i.d. exponential(rate) gaps."""
    if rate <= 0:
        raise ValueError("rate must be positive.")
    rng = make_rng(seed, 3, stream)
    mean = rate * t_max
    batch = int(mean + 6 * math.sqrt(mean) + 16)
    times = np.empty(0)
    last = 0.0
    while last <= t_max:
        chunk = last + np.cumsum(rng.exponential(1.0 / rate, batch))
        times = np.concatenate([times, chunk])
        last = float(chunk[-1])
    return PoissonClock(rate=rate, t_max=t_max, event_times=times[times <= t_max])


def poissonize(
    path: PathSample,
    v: float,
    t_max: float,
    seed: int,
    scale: float | None = None,
) -> ScaledTrajectory:
    """X~(t) = X(N(vt)) / a(v) for t in [0, t_max].

    The events of t -> N(vt) form a rate-v clock. If the path is shorter than
    N(v t_max) it is re-simulated from its own seed with more steps, which extends
    it without changing the recorded prefix.
    """
    clock = poisson_clock(v, t_max, seed)
    needed = clock.event_times.size
    if needed > path.n_steps:
        if path.xi_law is None or path.eta_law is None:
            raise ValueError("Path too short and carries no laws to extend it.")
        path = simulate_chain(path.xi_law, path.eta_law, path.x0, needed, path.seed)
    if scale is None:
        if not isinstance(path.xi_law, LatticeStableLaw):
            raise ValueError("scale is required for step laws without a norming function.")
        scale = norming_a(path.xi_law, v)
    return ScaledTrajectory(clock=clock, values=path.values[: needed + 1] / scale, scale=scale)


def _batch_shard(
    xi_law: StepLaw,
    eta_law: PerturbationLaw,
    x0: np.ndarray,
    n_steps: np.ndarray,
    checkpoints: np.ndarray,
    seed: int,
    stream: int,
    shard: int,
) -> dict[str, np.ndarray]:
    rng = make_rng(seed, stream, shard)
    n = x0.size
    x = x0.astype(np.int64).copy()
    m = np.zeros(n, dtype=np.int64)
    zeros = (x == 0).astype(np.int64)
    eta_used = np.zeros(n, dtype=np.int64)
    eta_sum = np.zeros(n, dtype=np.int64)
    eta_sup = np.zeros(n, dtype=np.int64)
    xi_sum = np.zeros(n, dtype=np.int64)
    cp = checkpoints
    cp_values = np.zeros(cp.shape, dtype=np.int64)
    cp_zeros = np.zeros(cp.shape, dtype=np.int64)
    at_start = cp == 0
    cp_values[at_start] = np.broadcast_to(x[:, None], cp.shape)[at_start]
    cp_zeros[at_start] = np.broadcast_to(zeros[:, None], cp.shape)[at_start]
    block = 64
    while True:
        active = m < n_steps
        if not active.any():
            break
        at_zero = np.flatnonzero(active & (x == 0))
        if at_zero.size:
            jump = eta_law.draw(rng, at_zero.size)
            x[at_zero] = jump
            m[at_zero] += 1
            eta_used[at_zero] += 1
            eta_sum[at_zero] += jump
            eta_sup[at_zero] = np.maximum(eta_sup[at_zero], np.abs(eta_sum[at_zero]))
            zeros[at_zero] += jump == 0
            hit_cp = m[at_zero, None] == cp[at_zero]
            rows, cols = np.nonzero(hit_cp)
            cp_values[at_zero[rows], cols] = x[at_zero[rows]]
            cp_zeros[at_zero[rows], cols] = zeros[at_zero[rows]]
        moving = np.flatnonzero((m < n_steps) & (x != 0))
        if not moving.size:
            continue
        width = int(min(block, max(1, _MAX_BLOCK_CELLS // moving.size)))
        steps = xi_law.draw(rng, moving.size * width).reshape(moving.size, width)
        walk = x[moving, None] + np.cumsum(steps, axis=1)
        remaining = n_steps[moving] - m[moving]
        inside = np.arange(width)[None, :] < remaining[:, None]
        zero = (walk == 0) & inside
        hit = zero.any(axis=1)
        advance = np.where(hit, np.argmax(zero, axis=1) + 1, np.minimum(width, remaining))
        if cp.shape[1]:
            offset = cp[moving] - m[moving, None] - 1
            in_block = (offset >= 0) & (offset < advance[:, None])
            rows, cols = np.nonzero(in_block)
            cp_values[moving[rows], cols] = walk[rows, offset[rows, cols]]
            cp_zeros[moving[rows], cols] = zeros[moving[rows]] + (
                hit[rows] & (offset[rows, cols] == advance[rows] - 1)
            )
        last = np.take_along_axis(walk, (advance - 1)[:, None], axis=1)[:, 0]
        xi_sum[moving] += last - x[moving]
        x[moving] = last
        m[moving] += advance
        zeros[moving] += hit
        block = min(block * 2, 2**16)
    # coupling: the unperturbed walk uses the same xi stream plus eta_used extra steps
    extra = np.zeros(n, dtype=np.int64)
    owners = np.repeat(np.arange(n), eta_used)
    for start in range(0, owners.size, _MAX_BLOCK_CELLS):
        piece = owners[start : start + _MAX_BLOCK_CELLS]
        np.add.at(extra, piece, xi_law.draw(rng, piece.size))
    return {
        "terminal": x,
        "zero_count": zeros,
        "eta_sum": eta_sum,
        "eta_sup": eta_sup,
        "unperturbed": x0 + xi_sum + extra,
        "checkpoint_values": cp_values,
        "checkpoint_zeros": cp_zeros,
    }


def simulate_batch(
    xi_law: StepLaw,
    eta_law: PerturbationLaw,
    x0: int | np.ndarray,
    n_steps: int | np.ndarray,
    n_paths: int,
    seed: int,
    checkpoints: list[int] | np.ndarray | None = None,
    stream: int = 0,
    workers: int = 1,
) -> BatchResult:
    """Many independent perturbed chains at once, summarised per path.

    n_steps may vary by path (e.g. N(vt) for a Poissonised marginal). Checkpoints
    are a list shared by all paths or an (n_paths, k) array; X(c) and T(c) are
    recorded for c <= n_steps of each path.
    """
    starts = np.broadcast_to(np.asarray(x0, dtype=np.int64), (n_paths,)).copy()
    lengths = np.broadcast_to(np.asarray(n_steps, dtype=np.int64), (n_paths,)).copy()
    if np.any(lengths < 0):
        raise ValueError("n_steps must be nonnegative.")
    if checkpoints is None:
        cps = np.zeros((n_paths, 0), dtype=np.int64)
    else:
        cps = np.asarray(checkpoints, dtype=np.int64)
        if cps.ndim == 1:
            cps = cps[None, :]
        cps = np.broadcast_to(cps, (n_paths, cps.shape[-1])).copy()
    has_checkpoints = cps.shape[1] > 0
    jobs = [
        partial(
            _batch_shard,
            xi_law,
            eta_law,
            starts[i : i + SHARD_SIZE],
            lengths[i : i + SHARD_SIZE],
            cps[i : i + SHARD_SIZE],
            seed,
            stream,
            k,
        )
        for k, i in enumerate(range(0, n_paths, SHARD_SIZE))
    ]
    parts = map_ordered(jobs, workers)

    def gather(key):
        return np.concatenate([p[key] for p in parts])

    return BatchResult(
        x0=starts,
        n_steps=lengths,
        terminal=gather("terminal"),
        zero_count=gather("zero_count"),
        eta_sum=gather("eta_sum"),
        eta_sup=gather("eta_sup"),
        unperturbed=gather("unperturbed"),
        checkpoint_steps=cps if has_checkpoints else None,
        checkpoint_values=gather("checkpoint_values") if has_checkpoints else None,
        checkpoint_zeros=gather("checkpoint_zeros") if has_checkpoints else None,
        seed=seed,
    )


def scaled_marginal(
    xi_law: LatticeStableLaw,
    eta_law: PerturbationLaw,
    x: float,
    v: float,
    t: float,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> ScaledMarginal:
    """Sample of X_v(floor(vt)) / a(v) started from floor(x a(v))."""
    if v < 1 or t < 0:
        raise ValueError("Need v >= 1 and t >= 0.")
    scale = norming_a(xi_law, v)
    start = math.floor(x * scale)
    n_steps = math.floor(v * t)
    if n_steps == 0:
        values = np.full(n_paths, start / scale)
        return ScaledMarginal(
            values=values, unperturbed=values.copy(), start=start, scale=scale, n_steps=0, seed=seed
        )
    batch = simulate_batch(xi_law, eta_law, start, n_steps, n_paths, seed, workers=workers)
    return ScaledMarginal(
        values=batch.terminal / scale,
        unperturbed=batch.unperturbed / scale,
        start=start,
        scale=scale,
        n_steps=n_steps,
        seed=seed,
    )


def poissonized_marginal(
    xi_law: LatticeStableLaw,
    eta_law: PerturbationLaw,
    x: float,
    v: float,
    t: float,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> np.ndarray:
    """Sample of X~_v(t) = X_v(N(vt)) / a(v); N(vt) is Poisson(vt) per path."""
    scale = norming_a(xi_law, v)
    start = math.floor(x * scale)
    counts = make_rng(seed, 4).poisson(v * t, n_paths)
    batch = simulate_batch(
        xi_law, eta_law, start, counts, n_paths, seed, stream=1, workers=workers
    )
    return batch.terminal / scale


def _occupation_shard(
    xi_law: StepLaw,
    eta_law: PerturbationLaw | None,
    m0: int,
    v: float,
    lam: float,
    f,
    scale: float,
    horizon: float,
    n: int,
    seed: int,
    stream: int,
    shard: int,
) -> np.ndarray:
    rng = make_rng(seed, stream, shard)
    y = np.full(n, m0, dtype=np.int64)
    clock = np.zeros(n)
    total = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    while alive.any():
        if eta_law is None:
            alive &= y != 0
        idx = np.flatnonzero(alive)
        if not idx.size:
            break
        nxt = clock[idx] + rng.exponential(1.0 / v, idx.size)
        weight = np.exp(-lam * clock[idx]) - np.exp(-lam * nxt)
        total[idx] += f(y[idx] / scale) * weight
        steps = xi_law.draw(rng, idx.size)
        if eta_law is not None:
            at_zero = y[idx] == 0
            if at_zero.any():
                steps[at_zero] = eta_law.draw(rng, int(at_zero.sum()))
        y[idx] += steps
        clock[idx] = nxt
        alive[idx] = nxt < horizon
    return total


def discounted_occupation(
    xi_law: StepLaw,
    m0: int,
    v: float,
    lam: float,
    f,
    scale: float,
    n_paths: int,
    seed: int,
    eta_law: PerturbationLaw | None = None,
    stream: int = 0,
    workers: int = 1,
    horizon: float | None = None,
) -> np.ndarray:
    """Per-path samples of int_0^kill e^(-lam t) f(X_v(N(vt)) / scale) dt.

    Without eta_law the path is killed at its first visit to 0 (killed resolvent);
    with eta_law it jumps from 0 by eta (holding-and-jumping chain) and is never
    killed. Segment integrals between Poisson events are exact; paths stop once
    e^(-lam t) < 1e-12.
    """
    horizon = horizon if horizon is not None else 27.7 / lam
    jobs = [
        partial(
            _occupation_shard,
            xi_law,
            eta_law,
            int(m0),
            v,
            lam,
            f,
            scale,
            horizon,
            min(SHARD_SIZE, n_paths - i),
            seed,
            stream,
            k,
        )
        for k, i in enumerate(range(0, n_paths, SHARD_SIZE))
    ]
    # shard totals hold lam * int e^(-lam t) f dt
    return np.concatenate(map_ordered(jobs, workers)) / lam
