# Copyright 2024 linear-fgw developers
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import logging
from typing import Callable, Iterable, TypeVar

import anyio
import anyio.to_thread
from anyio.from_thread import start_blocking_portal
from pydantic import validate_call

from linear_fgw.utils.validation import PositiveInt

logger = logging.getLogger("worker_pool")

T = TypeVar("T")
R = TypeVar("R")


class WorkerPool:
    """
    Fans independent, CPU-bound calls out to at most `threads` worker threads.

    `map` is synchronous so numerical code can take an optional pool without becoming async; it spins up a
    blocking portal for the duration of the call. Results come back in input order. If several calls fail, the
    error of the lowest-indexed item is raised.
    """

    @validate_call
    def __init__(self, threads: PositiveInt = 1) -> None:
        self.threads = threads

    async def map_async(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        items = list(items)
        results: list = [None] * len(items)
        failures: list[tuple[int, Exception]] = []
        limiter = anyio.CapacityLimiter(self.threads)

        async def run_one(index: int, item: T) -> None:
            try:
                results[index] = await anyio.to_thread.run_sync(fn, item, limiter=limiter)
            except Exception as e:
                failures.append((index, e))

        async with anyio.create_task_group() as tg:
            for index, item in enumerate(items):
                tg.start_soon(run_one, index, item)

        if failures:
            index, error = min(failures, key=lambda failure: failure[0])
            logger.debug("%s of %s tasks failed, first at item %s", len(failures), len(items), index)
            raise error
        return results

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        items = list(items)
        if self.threads == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with start_blocking_portal() as portal:
            return portal.call(self.map_async, fn, items)


def pool_map(pool: WorkerPool | None, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    return pool.map(fn, items) if pool is not None else [fn(item) for item in items]
