"""Worker pool helpers."""

# Import built-in modules
from concurrent.futures import ThreadPoolExecutor
import logging
import os
from typing import Callable
from typing import Iterable
from typing import List
from typing import Optional
from typing import TypeVar

# Import local modules
from spinefuse.errors import ConfigError


logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "SPINEFUSE_THREADS"


def resolve_threads(requested: Optional[int] = None) -> int:
    """Resolve the worker count.

    Args:
        requested: Explicit thread count, usually from ``--threads``.

    Returns:
        int: ``requested`` if given, else ``SPINEFUSE_THREADS``, else 1.

    Raises:
        ConfigError: If the resolved value is not a positive integer.
    """
    if requested is None:
        raw = os.environ.get(THREADS_ENV)
        if not raw:
            return 1
        try:
            requested = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    if requested < 1:
        raise ConfigError(f"thread count must be >= 1, got {requested}")
    return requested


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """Apply ``fn`` to every item, results in input order.

    Args:
        fn: Pure function to apply.
        items: Work items.
        threads: Worker count; 1 runs inline.

    Returns:
        List[R]: ``[fn(item) for item in items]``.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    workers = min(threads, len(items))
    logger.debug("Mapping %d items over %d threads", len(items), workers)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))
