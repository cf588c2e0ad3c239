import asyncio
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence

from .models import JobStatus

logger = logging.getLogger(__name__)


@dataclass
class JobOutcome:
    """Result or error of one job, tagged with its submission index"""
    index: int
    status: JobStatus
    value: Any = None
    error_message: Optional[str] = None
    error: Optional[BaseException] = None
    time_taken: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == JobStatus.SUCCESS


class JobCoordinator:
    """Runs independent jobs concurrently on a thread pool

    A failing job never cancels the others; its exception becomes an error
    outcome. Outcomes come back in submission order whatever the worker count.
    """

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ValueError(f"workers must be at least 1, got {workers}")
        self.workers = workers

    async def _timed(self, loop, executor, job: Callable[[], Any]):
        start_time = time.time()
        value = await loop.run_in_executor(executor, job)
        return value, time.time() - start_time

    async def run_all(self, jobs: Sequence[Callable[[], Any]]) -> List[JobOutcome]:
        """Execute every job and collect outcomes"""
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            tasks = [self._timed(loop, executor, job) for job in jobs]
            results = await asyncio.gather(*tasks, return_exceptions=True)

        outcomes = []
        for i, result in enumerate(results):
            if isinstance(result, Exception):
                logger.warning("job %d failed: %s", i, result)
                outcomes.append(JobOutcome(index=i, status=JobStatus.ERROR, error_message=str(result), error=result))
            else:
                value, elapsed = result
                outcomes.append(JobOutcome(index=i, status=JobStatus.SUCCESS, value=value, time_taken=elapsed))

        failed = sum(1 for o in outcomes if not o.ok)
        busy = sum(o.time_taken for o in outcomes)
        logger.info("ran %d jobs on %d workers, %d failed, %.2fs of job time",
                    len(outcomes), self.workers, failed, busy)
        return outcomes


def run_jobs(jobs: Sequence[Callable[[], Any]], workers: int = 1) -> List[JobOutcome]:
    """Synchronous wrapper around JobCoordinator.run_all"""
    return asyncio.run(JobCoordinator(workers).run_all(jobs))
