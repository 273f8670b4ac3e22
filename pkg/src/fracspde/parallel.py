"""Order-preserving parallel map for Monte Carlo sample loops.

Results are returned indexed by sample, and every sample derives its own
seed, so output is identical for any worker count; reductions over the
returned list must keep the sample order to stay bit-deterministic.
"""

import os
from concurrent.futures import ProcessPoolExecutor

WORKERS_ENV = "FRACSPDE_WORKERS"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return 1


def parallel_map(fn, args_list, workers: int = 1) -> list:
    """Map fn over args_list, in order; workers <= 1 runs inline."""
    if workers <= 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args_list))
