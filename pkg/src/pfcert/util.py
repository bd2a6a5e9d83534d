import asyncio
import hashlib
import json
from concurrent.futures import Executor, ProcessPoolExecutor
from typing import Any, Callable, Coroutine, Iterable, Optional, Sequence


def syncrun(coroutine: Coroutine) -> Any:
    return asyncio.run(coroutine)


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)


def sha256_of(payload: Any) -> str:
    text = payload if isinstance(payload, str) else canonical_json(payload)
    return hashlib.sha256(text.encode()).hexdigest()


def finite_or_none(value: float) -> Optional[float]:
    value = float(value)
    return value if value == value and abs(value) != float("inf") else None


def none_to_inf(value: Optional[float], sign: float = 1.0) -> float:
    return sign * float("inf") if value is None else float(value)


class WorkerPool:
    """Bounded pool for CPU-bound work driven from a coroutine.

    With ``jobs <= 1`` everything runs inline. Results come back in
    submission order.
    """

    def __init__(self, jobs: int = 1) -> None:
        self.jobs = max(1, int(jobs))
        self._executor: Optional[Executor] = None

    async def __aenter__(self) -> "WorkerPool":
        if self.jobs > 1:
            self._executor = ProcessPoolExecutor(max_workers=self.jobs)
        return self

    async def __aexit__(self, *exc) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    async def map(
        self,
        func: Callable[..., Any],
        arglist: Iterable[Sequence[Any]],
    ) -> list[Any]:
        if self._executor is None:
            return [func(*args) for args in arglist]

        loop = asyncio.get_running_loop()
        return list(
            await asyncio.gather(
                *(
                    loop.run_in_executor(self._executor, func, *args)
                    for args in arglist
                )
            )
        )
