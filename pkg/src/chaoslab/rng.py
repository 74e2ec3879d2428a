"""Per-replicate random streams and order-preserving parallel execution.

Replicate ``i`` of an experiment with master seed ``s`` always draws from
``Philox(SeedSequence(s, spawn_key=(i,)))``, so results depend only on
``(s, i)`` and never on how replicates are scheduled.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional

import numpy as np

from .errors import ConfigurationError

SEED_ENV = "CHAOSLAB_SEED"
_MASK64 = (1 << 64) - 1


def check_seed(seed) -> int:
    try:
        s = int(seed)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"seed must be an integer, got {seed!r}") from exc
    if s < 0 or s > _MASK64:
        raise ConfigurationError("seed must fit in 64 unsigned bits")
    return s


def env_seed(default: Optional[int]) -> Optional[int]:
    """Seed from the environment override if set, else ``default``."""
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return default
    return check_seed(raw.strip())


def stream(master_seed: int, *index: int) -> np.random.Generator:
    """Independent generator for the replicate addressed by ``index``."""
    ss = np.random.SeedSequence(check_seed(master_seed), spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.Philox(ss))


def ordered_map(fn: Callable, items: Iterable, threads: int = 1) -> List:
    """``[fn(x) for x in items]`` evaluated on ``threads`` workers, in input order."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(fn, items))
