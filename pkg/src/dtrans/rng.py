"""Named, splittable random streams and an order-preserving replica runner."""

import os
import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

__all__ = ["stream", "thread_count", "map_replicas"]


def stream(seed, name, *indices):
    """Independent generator keyed by ``(seed, name, *indices)``.

    Uses a counter-based bit generator so that a replica's stream does not
    depend on how many other replicas exist or which thread runs it.
    """
    key = (zlib.crc32(name.encode()),) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def thread_count():
    raw = os.environ.get("DTRANS_THREADS", "")
    try:
        value = int(raw)
    except ValueError:
        value = os.cpu_count() or 1
    return max(1, value)


def map_replicas(fn, items, threads=None):
    """``[fn(x) for x in items]``, possibly on a thread pool; order is kept."""
    items = list(items)
    threads = thread_count() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
