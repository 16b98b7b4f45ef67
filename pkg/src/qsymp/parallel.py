"""Deterministic sharded execution.

Work is split into a fixed number of shards whose random streams derive from
(seed, shard index).  Shard results are combined by a pairwise tree in shard
order, so the result depends on the seed and shard count but not on the
number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np


def pairwise_reduce(items: Sequence, combine: Callable = lambda a, b: a + b):
    items = list(items)
    if not items:
        raise ValueError("nothing to reduce")
    while len(items) > 1:
        nxt = [combine(items[i], items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def shard_sizes(total: int, shards: int) -> list:
    base, extra = divmod(int(total), int(shards))
    return [base + (1 if i < extra else 0) for i in range(shards)]


def map_shards(work: Callable, args: Sequence, threads: int = 1) -> list:
    """Apply ``work`` to each argument, preserving order."""
    if threads <= 1 or len(args) <= 1:
        return [work(a) for a in args]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, args))


def seed_sequences(seed: int, shards: int) -> list:
    return np.random.SeedSequence(int(seed)).spawn(int(shards))
