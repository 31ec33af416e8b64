"""Order-preserving process-pool map used by sampling and the optimisers."""
import os
from concurrent.futures import ProcessPoolExecutor


def default_workers():
    return os.cpu_count() or 1


def pmap(fn, jobs, workers=1):
    """``[fn(j) for j in jobs]``, spread over ``workers`` processes.

    Results come back in job order, so parallelism never changes output.
    """
    jobs = list(jobs)
    if workers is None:
        workers = default_workers()
    if workers <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
