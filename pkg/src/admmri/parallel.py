"""Worker-pool plumbing shared by the block-parallel operators.

Work is always cut into the same chunks for a given array shape, whatever the
thread count, so results are bit-identical between serial and threaded runs.
Only the dispatch of those chunks changes.
"""
from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

_lock = threading.Lock()
_num_threads: int | None = None
_pool: ThreadPoolExecutor | None = None
_pool_size = 0

# upper bound on chunks per call; independent of the thread count
MAX_CHUNKS = 32


def get_num_threads() -> int:
    return _num_threads if _num_threads is not None else (os.cpu_count() or 1)


def set_num_threads(n: int | None) -> None:
    """Set the worker count. ``None`` restores the hardware default."""
    global _num_threads
    if n is not None and n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    _num_threads = n


@contextmanager
def num_threads(n: int | None):
    previous = _num_threads
    set_num_threads(n)
    try:
        yield
    finally:
        set_num_threads(previous)


def chunk_slices(n: int, max_chunks: int = MAX_CHUNKS) -> list[slice]:
    """Split ``range(n)`` into at most ``max_chunks`` contiguous slices."""
    k = max(1, min(n, max_chunks))
    bounds = [(n * j) // k for j in range(k + 1)]
    return [slice(bounds[j], bounds[j + 1]) for j in range(k)]


def _executor(size: int) -> ThreadPoolExecutor:
    global _pool, _pool_size
    with _lock:
        if _pool is None or _pool_size != size:
            if _pool is not None:
                _pool.shutdown(wait=True)
            _pool = ThreadPoolExecutor(max_workers=size, thread_name_prefix="admmri")
            _pool_size = size
        return _pool


def run_chunks(fn, n: int, max_chunks: int = MAX_CHUNKS) -> None:
    """Call ``fn(slice)`` for every chunk of ``range(n)``.

    ``fn`` must write only to its own slice of the output.
    """
    slices = chunk_slices(n, max_chunks)
    threads = get_num_threads()
    if threads == 1 or len(slices) == 1:
        for sl in slices:
            fn(sl)
        return
    # surface worker exceptions
    for fut in [_executor(threads).submit(fn, sl) for sl in slices]:
        fut.result()
