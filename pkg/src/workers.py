from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple, TypeVar

from config import MAX_WORKERS, ROW_BLOCK

T = TypeVar("T")


def row_blocks(n_rows: int, block_rows: int = ROW_BLOCK) -> List[Tuple[int, int]]:
    """Fixed partition of [0, n_rows) into half-open blocks"""
    block_rows = max(1, block_rows)
    return [(start, min(start + block_rows, n_rows)) for start in range(0, n_rows, block_rows)]


def map_row_blocks(
    func: Callable[[int, int], T],
    n_rows: int,
    block_rows: int = ROW_BLOCK,
    max_workers: Optional[int] = None,
) -> List[T]:
    """
    Apply func(start, stop) to every row block, results in block order

    The partition depends only on n_rows and block_rows, never on the
    worker count. numpy releases the GIL in the heavy kernels, so threads
    are enough.
    """
    blocks = row_blocks(n_rows, block_rows)
    workers = MAX_WORKERS if max_workers is None else max(1, max_workers)

    if workers == 1 or len(blocks) <= 1:
        return [func(start, stop) for start, stop in blocks]

    with ThreadPoolExecutor(max_workers=min(workers, len(blocks))) as pool:
        return list(pool.map(lambda bounds: func(*bounds), blocks))
