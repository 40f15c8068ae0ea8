"""Deterministic chunked Monte Carlo execution.

Every sampling operation in the library takes an explicit integer seed and
splits its work into fixed-size chunks with per-chunk seeds ``seed + k``.
Chunks may be evaluated by a thread pool, but results are merged in chunk
order, so the output is a function of ``(seed, n)`` alone and never of the
thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

from .errors import ParameterError

CHUNK_SIZE = 1 << 15

_num_threads = 1


def set_num_threads(k: int) -> None:
    """Set the worker-pool size used for chunked loops (1 = serial)."""
    global _num_threads
    if int(k) < 1:
        raise ParameterError(f"thread count must be >= 1, got {k}")
    _num_threads = int(k)


def get_num_threads() -> int:
    return _num_threads


def chunk_sizes(n: int, chunk: int = CHUNK_SIZE) -> list[int]:
    """Split ``n`` items into fixed-size chunks (last one may be short)."""
    if n < 1:
        raise ParameterError(f"need at least one sample, got n={n}")
    full, rem = divmod(n, chunk)
    return [chunk] * full + ([rem] if rem else [])


def run_chunked(
    worker: Callable[[int, int], np.ndarray],
    seed: int,
    n: int,
    chunk: int = CHUNK_SIZE,
) -> np.ndarray:
    """Evaluate ``worker(chunk_seed, chunk_size)`` over all chunks of ``n``.

    Per-chunk seeds are ``seed + chunk_index``; row blocks are concatenated
    in chunk order regardless of how many threads ran them.
    """
    sizes = chunk_sizes(n, chunk)
    if _num_threads == 1 or len(sizes) == 1:
        parts = [worker(seed + k, m) for k, m in enumerate(sizes)]
    else:
        with ThreadPoolExecutor(max_workers=_num_threads) as pool:
            futures = [pool.submit(worker, seed + k, m) for k, m in enumerate(sizes)]
            parts = [f.result() for f in futures]
    return np.concatenate(parts, axis=0)


def sub_seed(seed: int, tag: int) -> int:
    """Derive an independent stream seed for a named purpose.

    The stride keeps purpose streams clear of the ``seed + chunk`` seeds used
    inside a single stream.
    """
    return (int(seed) * 1_000_003 + 7919 * int(tag)) % (2**63)
