from concurrent.futures import ThreadPoolExecutor

from ._config import default_threads


def resolve_threads(threads):
    return default_threads() if threads is None else max(1, int(threads))


def pmap(fn, items, threads=None):
    """``[fn(x) for x in items]``, run on a thread pool; output order is input order."""
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
