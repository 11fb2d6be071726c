"""
Bounded worker pool for the independent jobs of a stage.

Training splits, SR repeats and forward solves share no state, so each is
handed to joblib as a separate task. Results come back in submission order,
which keeps every downstream artefact independent of scheduling.
"""

import logging
from typing import Callable, List, Sequence

from joblib import Parallel, delayed

logger = logging.getLogger(__name__)


def run_jobs(func: Callable, tasks: Sequence[tuple], jobs: int = 1) -> List:
    """
    Run ``func(*task)`` for every task.

    Args:
        func: module-level callable (picklable for process workers)
        tasks: argument tuples, one per job
        jobs: worker count; 1 runs everything in this process

    Returns:
        list of results in the order of ``tasks``
    """
    tasks = list(tasks)
    workers = max(1, min(int(jobs), len(tasks)))
    logger.debug(f"running {len(tasks)} {getattr(func, '__name__', 'job')} task(s) on {workers} worker(s)")
    if workers == 1:
        return [func(*task) for task in tasks]
    return Parallel(n_jobs=workers, backend="loky")(delayed(func)(*task) for task in tasks)
