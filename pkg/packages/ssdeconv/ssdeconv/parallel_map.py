# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

import asyncio
from typing import Callable, TypeVar

from tqdm.auto import tqdm

from .utils import logger, resolve_concurrency

T = TypeVar("T")
R = TypeVar("R")


async def async_parallel_map(
    inputs: list[T],
    func: Callable[[T], R],
    *,
    concurrency: int | None = None,
    description: str = "Task",
    progress: bool = True,
) -> list[R]:
    """
    Map the inputs by a synchronous function on worker threads; resolves to the
    mapped list in input order.

    Args:
        inputs: List of items to process
        func: Function to apply to each item; it runs via ``asyncio.to_thread``
        concurrency: Maximum number of concurrent calls (default: ``resolve_concurrency()``)
        description: Description in the progress bar
        progress: Show a progress bar

    The first error stops scheduling of new items and is re-raised once the
    running items have finished.
    """
    count = len(inputs)
    results: list[R | None] = [None] * count
    semaphore = asyncio.Semaphore(resolve_concurrency(concurrency))
    stop_event = asyncio.Event()
    first_error: list[BaseException | None] = [None]

    pbar = tqdm(total=count, desc=description, disable=not progress)

    async def process(index: int, item: T) -> None:
        async with semaphore:
            if stop_event.is_set():
                return
            try:
                results[index] = await asyncio.to_thread(func, item)
                pbar.update(1)
            except Exception as e:
                logger.error("%s: item %d failed: %s", description, index, e)
                if first_error[0] is None:
                    first_error[0] = e
                stop_event.set()

    await asyncio.gather(*(process(i, item) for i, item in enumerate(inputs)))

    pbar.close()

    if first_error[0] is not None:
        raise first_error[0]

    return results  # type: ignore[return-value]


def parallel_map(
    inputs: list[T],
    func: Callable[[T], R],
    *,
    concurrency: int | None = None,
    description: str = "Task",
    progress: bool = True,
) -> list[R]:
    """Blocking wrapper around ``async_parallel_map``."""
    return asyncio.run(
        async_parallel_map(
            inputs,
            func,
            concurrency=concurrency,
            description=description,
            progress=progress,
        )
    )
