"""Thread-pool map capped by the FREELIP_THREADS environment variable."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
import os


def thread_count() -> int:
    raw = os.environ.get("FREELIP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items, threads: int | None = None) -> list:
    """Ordered map; runs serially unless more than one thread is allowed."""
    items = list(items)
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
