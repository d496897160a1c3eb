import asyncio
import logging
from datetime import datetime
from typing import Callable, List, Optional, Sequence

from core.config import settings

logger = logging.getLogger(__name__)


class RunScheduler:
    """Fans independent seeded runs out to worker threads"""

    def __init__(self, max_parallel: Optional[int] = None):
        self.max_parallel = max_parallel or settings.MAX_PARALLEL_RUNS
        self.is_running = False
        self.last_batch: Optional[datetime] = None

    async def _run_one(self, semaphore: asyncio.Semaphore, index: int, label: str, job: Callable):
        async with semaphore:
            logger.info(f"🔄 Starting {label}")
            try:
                result = await asyncio.to_thread(job)
            except Exception as e:
                logger.error(f"❌ {label} failed: {e}")
                raise
            logger.info(f"✅ Finished {label}")
            return index, result

    async def run_all(self, jobs: Sequence[Callable], labels: Optional[Sequence[str]] = None) -> List:
        """
        Run every job and return the results in submission order.

        The first failure cancels the jobs that have not started and is re-raised.
        """
        if self.is_running:
            logger.warning("⚠️ Scheduler already running a batch")
        labels = labels or [f"run {i}" for i in range(len(jobs))]
        semaphore = asyncio.Semaphore(self.max_parallel)
        self.is_running = True
        tasks = [
            asyncio.create_task(self._run_one(semaphore, i, label, job))
            for i, (label, job) in enumerate(zip(labels, jobs))
        ]
        try:
            finished = await asyncio.gather(*tasks)
        except Exception:
            for task in tasks:
                task.cancel()
            await asyncio.gather(*tasks, return_exceptions=True)
            raise
        finally:
            self.is_running = False
            self.last_batch = datetime.now()
        return [result for _, result in sorted(finished, key=lambda item: item[0])]

    def run_sync(self, jobs: Sequence[Callable], labels: Optional[Sequence[str]] = None) -> List:
        """Blocking entry point for the command line."""
        if self.max_parallel == 1:
            return [job() for job in jobs]
        return asyncio.run(self.run_all(jobs, labels))


# Singleton instance
run_scheduler = RunScheduler()
