"""Row-band work splitting over a thread pool.

Band boundaries depend only on the image height and ``band_rows``; the
worker count only changes how many bands run at once.  Results come back in
band order.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

from app.config import settings

logger = logging.getLogger("parallel")

T = TypeVar("T")


def row_bands(height: int, band_rows: int | None = None) -> list[tuple[int, int]]:
    """Split ``[0, height)`` into consecutive half-open row bands."""
    if band_rows is None:
        band_rows = settings.band_rows
    band_rows = max(1, band_rows)
    return [(y0, min(y0 + band_rows, height)) for y0 in range(0, height, band_rows)]


def run_bands(
    func: Callable[[int, int], T],
    bands: list[tuple[int, int]],
    workers: int | None = None,
    name: str = "band",
) -> list[T]:
    """Run ``func(y0, y1)`` for every band, returning results in band order."""
    if workers is None:
        workers = settings.workers
    workers = max(1, workers)
    if workers == 1 or len(bands) <= 1:
        return [func(y0, y1) for y0, y1 in bands]

    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix=name) as pool:
        futures = [pool.submit(func, y0, y1) for y0, y1 in bands]
        try:
            return [f.result() for f in futures]
        except Exception:
            logger.exception("%s worker failed", name)
            for f in futures:
                f.cancel()
            raise
