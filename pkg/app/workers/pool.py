"""Thread pool for chunked evaluation and prediction."""
import contextvars
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Optional, TypeVar

from app.core.logging import get_logger
from app.core.settings import settings

logger = get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> list[R]:
    """Apply fn to every item, returning results in input order."""
    items = list(items)
    workers = threads if threads and threads > 0 else settings.get_threads()
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]

    logger.debug(f"Mapping {len(items)} chunks over {workers} threads")
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as executor:
        # tasks run in a copy of the caller context
        contexts = [contextvars.copy_context() for _ in items]
        return list(executor.map(lambda ctx, item: ctx.run(fn, item), contexts, items))


def chunk_ranges(count: int, chunk_size: int) -> list[tuple[int, int]]:
    chunk_size = max(1, chunk_size)
    return [(start, min(start + chunk_size, count)) for start in range(0, count, chunk_size)]
