import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from config import ROW_BLOCK
from errors import InvalidInputError
from logging_conf import logger
from radar_model import MagnitudeImage
from workers import map_row_blocks


def window_offsets(size: int) -> tuple[int, int]:
    """Cells before and after the center for a window of the given size"""
    before = (size - 1) // 2
    return before, size - 1 - before


def median_filter(img: MagnitudeImage, m: int, n: int, block_rows: int = ROW_BLOCK) -> MagnitudeImage:
    """
    Replace every pixel with the lower median of its m x n neighbourhood

    The median minimizes the summed absolute deviation over the window.
    Windows are clipped at the image border; with an even count k the
    lower middle order statistic (index (k-1)//2) is used, so every
    output value is one of the window's pixels.

    Args:
        img: magnitude image
        m: window rows (azimuth)
        n: window columns (range)
    """
    if m < 1 or n < 1:
        raise InvalidInputError(f"window must be at least 1x1, got {m}x{n}")
    if m > img.n_az or n > img.n_rg:
        raise InvalidInputError(f"window {m}x{n} is larger than the {img.n_az}x{img.n_rg} image")
    if m == 1 and n == 1:
        return img.with_data(img.data.copy())

    top, bottom = window_offsets(m)
    left, right = window_offsets(n)
    padded = np.pad(img.data, ((top, bottom), (left, right)), constant_values=np.nan)
    windows = sliding_window_view(padded, (m, n))
    n_rg = img.n_rg

    def block(start: int, stop: int) -> np.ndarray:
        values = windows[start:stop].reshape(stop - start, n_rg, m * n)
        # NaN padding sorts to the end
        ordered = np.sort(values, axis=-1)
        count = np.sum(~np.isnan(values), axis=-1)
        pick = ((count - 1) // 2)[..., None]
        return np.take_along_axis(ordered, pick, axis=-1)[..., 0]

    data = np.vstack(map_row_blocks(block, img.n_az, block_rows))
    logger.debug(f"Median filtered {img.n_az}x{img.n_rg} image with {m}x{n} window")
    return img.with_data(data)
