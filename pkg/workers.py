"""Master-slave evaluation pool.

The task function is installed once per worker process; every submission
carries only its small task tuple. Results come back in submission order
once the whole batch is done, which is the barrier the GA relies on.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence

logger = logging.getLogger(__name__)

_installed: Optional[Callable[[Any], Any]] = None


def _install(fn: Callable[[Any], Any]) -> None:
    global _installed
    _installed = fn


def _run_installed(task: Any) -> Any:
    return _installed(task)


@dataclass(frozen=True)
class TaskFailure:
    task: Any
    error: str


class WorkerPool:
    """`workers == 1` evaluates in-process; otherwise a ProcessPoolExecutor."""

    def __init__(self, fn: Callable[[Any], Any], workers: int = 1):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.fn = fn
        self.workers = workers
        self._executor: Optional[ProcessPoolExecutor] = None

    def __enter__(self) -> "WorkerPool":
        if self.workers > 1:
            self._executor = ProcessPoolExecutor(
                max_workers=self.workers, initializer=_install, initargs=(self.fn,)
            )
        return self

    def __exit__(self, *exc) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def map(self, tasks: Sequence[Any]) -> List[Any]:
        """Run every task; a raising task yields a TaskFailure in its slot."""
        if self._executor is None:
            results = []
            for task in tasks:
                try:
                    results.append(self.fn(task))
                except Exception as exc:
                    results.append(TaskFailure(task, f"{type(exc).__name__}: {exc}"))
            return results

        futures = [self._executor.submit(_run_installed, task) for task in tasks]
        results = []
        for task, future in zip(tasks, futures):
            try:
                results.append(future.result())
            except Exception as exc:
                results.append(TaskFailure(task, f"{type(exc).__name__}: {exc}"))
        return results
