"""Ordered worker-pool execution.

For N calls and ``max_workers=K``, the batch spawns ``min(K, N)`` worker
threads that pull calls off a shared queue. Results are stored by
submission index, so whatever order the workers finish in, callers reduce
them in a fixed order. This is what keeps multi-threaded evaluation
bit-identical to the single-threaded path.
"""

import concurrent.futures
import logging
import queue
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Tuple, Union

from .exceptions import CcrecBatchError

logger = logging.getLogger(__name__)


@dataclass
class CallOutcome:
    """Outcome of one call, stored at its submission index."""

    success: bool
    result: Any = None
    error: Optional[Exception] = None
    elapsed: float = 0.0
    call_index: int = 0


@dataclass
class BatchStats:
    """Timing and failure counts of one run."""

    calls: int = 0
    succeeded: int = 0
    failed: int = 0
    wall_time: float = 0.0
    slowest_call: float = 0.0
    workers: int = 0


class DeferredCall:
    """A function call captured for later execution."""

    def __init__(self, func: Callable, *args, **kwargs):
        self.func = func
        self.args = args
        self.kwargs = kwargs
        self.label = getattr(func, "__name__", "unknown")

    def execute(self) -> Any:
        return self.func(*self.args, **self.kwargs)


class OrderedBatch:
    """Execute calls on a small thread pool and return results in submission order.

    ``fail_fast`` stops handing out work after the first failure;
    ``return_exceptions`` decides whether failures are returned in place of
    results or raised as :class:`CcrecBatchError`.
    """

    def __init__(
        self,
        *calls: Union[DeferredCall, Callable],
        max_workers: int = 1,
        fail_fast: bool = True,
        return_exceptions: bool = False,
    ):
        self.calls: List[DeferredCall] = []
        self.max_workers = max(1, int(max_workers))
        self.fail_fast = fail_fast
        self.return_exceptions = return_exceptions

        for call in calls:
            if isinstance(call, DeferredCall):
                self.calls.append(call)
            elif callable(call):
                self.calls.append(DeferredCall(call))
            else:
                raise TypeError(
                    f"Invalid call type: {type(call)}. Must be callable or DeferredCall."
                )

        self.results: List[CallOutcome] = []
        self.stats = BatchStats()
        self.executed = False

    def execute(self) -> Tuple[Any, ...]:
        """Run every call and return their results ordered by submission index."""
        if self.executed:
            logger.warning("OrderedBatch already executed, returning cached results")
            return self.ordered_results()

        if not self.calls:
            self.executed = True
            return tuple()

        run_started = time.time()
        self.results = [CallOutcome(success=False, call_index=i) for i in range(len(self.calls))]

        n_workers = min(self.max_workers, len(self.calls))
        pending: "queue.Queue[Tuple[int, DeferredCall]]" = queue.Queue()
        for i, call in enumerate(self.calls):
            pending.put((i, call))
        halt = threading.Event()

        if n_workers == 1:
            self._worker(pending, halt)
        else:
            logger.debug(f"Starting ordered batch: {len(self.calls)} calls, {n_workers} workers")
            with concurrent.futures.ThreadPoolExecutor(max_workers=n_workers) as executor:
                futures = [
                    executor.submit(self._worker, pending, halt)
                    for _ in range(n_workers)
                ]
                for fut in concurrent.futures.as_completed(futures):
                    fut.result()

        call_times = [r.elapsed for r in self.results]
        ok = sum(r.success for r in self.results)
        self.stats = BatchStats(
            calls=len(self.calls),
            succeeded=ok,
            failed=len(self.calls) - ok,
            wall_time=time.time() - run_started,
            slowest_call=max(call_times) if call_times else 0.0,
            workers=n_workers,
        )
        self.executed = True
        return self.ordered_results()

    def _worker(self, pending: "queue.Queue", halt: threading.Event) -> None:
        while not halt.is_set():
            try:
                index, call = pending.get_nowait()
            except queue.Empty:
                return

            started = time.time()
            try:
                result = call.execute()
                self.results[index] = CallOutcome(
                    success=True,
                    result=result,
                    elapsed=time.time() - started,
                    call_index=index,
                )
            except Exception as e:
                self.results[index] = CallOutcome(
                    success=False,
                    error=e,
                    elapsed=time.time() - started,
                    call_index=index,
                )
                if self.fail_fast:
                    halt.set()

    def ordered_results(self) -> Tuple[Any, ...]:
        """Results as a tuple; failures raise unless ``return_exceptions``."""
        if not self.executed:
            raise RuntimeError("OrderedBatch.execute() has not run yet")

        failed = [r for r in self.results if not r.success]
        if failed and not self.return_exceptions:
            raise CcrecBatchError(
                f"{len(failed)} of {len(self.results)} calls failed; first: {failed[0].error}",
                failed_operations=[
                    {
                        "index": r.call_index,
                        "error": str(r.error) if r.error is not None else "not executed",
                        "operation": self.calls[r.call_index].label,
                    }
                    for r in failed
                ],
            )
        return tuple(r.result if r.success else r.error for r in self.results)

    def __len__(self) -> int:
        return len(self.calls)

    def __repr__(self) -> str:
        state = "executed" if self.executed else "not executed"
        return f"OrderedBatch({len(self.calls)} calls, {self.max_workers} workers, {state})"
