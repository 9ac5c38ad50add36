"""Seeded random streams.

Every stochastic routine draws from ``Philox4x64`` keyed by ``(seed, stream)``,
so independent replicate chunks get non-overlapping streams and the results do
not depend on how the chunks are scheduled. Normal variates come from an
explicit Box-Muller transform of the Philox uniforms rather than numpy's
ziggurat sampler, which pins the exact normal sequence for a given seed.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_MASK64 = (1 << 64) - 1


def generator(seed: int, stream: int = 0) -> np.random.Generator:
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` standard normals by the Box-Muller transform."""
    half = (size + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1], keeps the log finite
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.empty(2 * half)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return z[:size]


def standard_normal(seed: int, shape, stream: int = 0) -> np.ndarray:
    size = int(np.prod(shape))
    return box_muller(generator(seed, stream), size).reshape(shape)


def thread_count() -> int:
    """Worker cap from ``BREG_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("BREG_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"BREG_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError("BREG_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def chunk_sizes(total: int, chunk: int) -> list[int]:
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes


def map_chunks(func, total: int, chunk: int = 4096):
    """Run ``func(stream, size)`` over fixed-size chunks and concatenate.

    The chunk layout depends only on ``total`` and ``chunk``; threads only
    change scheduling, never the merged output.
    """
    sizes = chunk_sizes(total, chunk)
    workers = min(thread_count(), len(sizes)) or 1
    if workers == 1:
        parts = [func(i, s) for i, s in enumerate(sizes)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(func, range(len(sizes)), sizes))
    return np.concatenate(parts) if parts else np.empty(0)


def map_ordered(func, items):
    """``[func(x) for x in items]`` spread over up to ``thread_count()`` threads."""
    items = list(items)
    workers = min(thread_count(), len(items)) or 1
    if workers == 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
