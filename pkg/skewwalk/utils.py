from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone

import numpy as np

SEED_MASK = 2**64 - 1


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for the stream (seed, *stream); disjoint streams never overlap."""
    return np.random.default_rng(np.random.SeedSequence([seed & SEED_MASK, *stream]))


def timestamp_slug(moment: datetime | None = None) -> str:
    """UTC timestamp safe for file names, e.g. 20240601T120000Z."""
    moment = moment or datetime.now(timezone.utc)
    return moment.strftime("%Y%m%dT%H%M%SZ")


def strictly_decreasing(values) -> bool:
    """True when every finite entry is below its predecessor."""
    values = [float(v) for v in values]
    if len(values) < 2 or not all(np.isfinite(values)):
        return False
    return all(b < a for a, b in zip(values, values[1:]))


def map_ordered(jobs: list, workers: int = 1) -> list:
    """Run zero-argument callables, returning results in submission order.

    With workers > 1 the jobs go to a process pool, so they must be picklable.
    """
    if workers <= 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))


def _call(job):
    return job()
