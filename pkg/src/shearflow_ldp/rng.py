"""Counter-based random streams.

Every random draw in the package is addressed by ``(master, stream, index)``.
The generator for a given address is built fresh from a ``SeedSequence``
whose spawn key encodes the address, so the numbers never depend on the
order in which samples are produced or on how work is split across workers.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

MASK64 = (1 << 64) - 1


def stream_id(name: str) -> int:
    """Stable integer tag for a named operation (``"sample_field"`` etc.)."""
    return zlib.crc32(name.encode("utf-8"))


def generator(master: int, stream: int | str, index: int) -> np.random.Generator:
    if isinstance(stream, str):
        stream = stream_id(stream)
    seq = np.random.SeedSequence(entropy=int(master) & MASK64,
                                 spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.Philox(seq))


def block_ranges(n: int, block_size: int) -> list[tuple[int, int, int]]:
    """Split ``range(n)`` into fixed blocks: ``(block_index, start, stop)``."""
    out = []
    for b, start in enumerate(range(0, n, block_size)):
        out.append((b, start, min(start + block_size, n)))
    return out


def parallel_map(func: Callable[[T], object], items: Sequence[T], workers: int = 1) -> list:
    """Map preserving order. Results are written by index, so worker count is irrelevant."""
    if workers <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
