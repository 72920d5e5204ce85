"""
Two-dimensional CFAR detection with a Weibull-designed threshold factor

Each cell under test is compared with mu_c + sigma_c * Q, where mu_c and
sigma_c come from the rectangular training ring around the guard region
and Q = T_aW / mean of the globally fitted Weibull clutter model.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from clutter_stats import model_mean
from config import ROW_BLOCK
from errors import InvalidInputError
from logging_conf import logger, metrics
from radar_model import MagnitudeImage
from schemas import CfarConfig, Family, FittedModel, Hypothesis
from store_csv import CSVSchemas
from workers import map_row_blocks


@dataclass(frozen=True)
class DetectionMap:
    """Per-pixel H1 mask and the matching detection table"""

    mask: np.ndarray
    detections: pd.DataFrame
    config: CfarConfig
    q: float

    @property
    def count(self) -> int:
        return int(self.mask.sum())


def weibull_threshold(alpha: float, beta: float, p_fa: float) -> float:
    """Weibull amplitude exceeded with probability p_fa: beta * ln(1/p_fa)^(1/alpha)"""
    if not (alpha > 0 and beta > 0):
        raise InvalidInputError(f"weibull parameters must be > 0, got ({alpha}, {beta})")
    if not 0 < p_fa < 1:
        raise InvalidInputError(f"p_fa must be in (0, 1), got {p_fa}")
    return beta * (-math.log(p_fa)) ** (1.0 / alpha)


def design_q(model: FittedModel, p_fa: float) -> float:
    """Scale-free design factor Q = T_aW / model mean"""
    if model.family != Family.WEIBULL:
        raise InvalidInputError(f"adaptive threshold is defined for weibull clutter only, got {model.family.value}")
    return weibull_threshold(model.p1, model.p2, p_fa) / model_mean(model)


def cell_decision(x_cut: float, mu_c: float, sigma_c: float, q: float) -> Hypothesis:
    if sigma_c < 0:
        raise InvalidInputError(f"sigma_c must be >= 0, got {sigma_c}")
    return Hypothesis.H1 if x_cut > mu_c + sigma_c * q else Hypothesis.H0


def _summed_area(values: np.ndarray) -> np.ndarray:
    table = np.zeros((values.shape[0] + 1, values.shape[1] + 1))
    table[1:, 1:] = values.cumsum(axis=0).cumsum(axis=1)
    return table


def _box_sum(table: np.ndarray, r0, r1, c0, c1) -> np.ndarray:
    return table[r1, c1] - table[r0, c1] - table[r1, c0] + table[r0, c0]


def resolve_q(cfg: CfarConfig) -> float:
    """Manual override when present, otherwise the Weibull design value"""
    if cfg.q is not None:
        return cfg.q
    if cfg.model is None:
        raise InvalidInputError("cfar needs either a clutter model or a manual q")
    return design_q(cfg.model, cfg.p_fa)


def cfar_scan(
    img: MagnitudeImage,
    cfg: CfarConfig,
    block_rows: int = ROW_BLOCK,
    max_workers: Optional[int] = None,
) -> DetectionMap:
    """
    Slide the guard/training window over every pixel

    Windows are clipped at the image border. Training statistics use the
    N-1 standard deviation (0 for a single cell); a pixel without
    training cells stays H0.

    Raises:
        InvalidInputError: window larger than the image, or no way to get Q
    """
    n_az, n_rg = img.n_az, img.n_rg
    if cfg.half_extent_az > (n_az - 1) // 2 or cfg.half_extent_rg > (n_rg - 1) // 2:
        raise InvalidInputError(
            f"cfar window {2 * cfg.half_extent_az + 1}x{2 * cfg.half_extent_rg + 1} "
            f"does not fit in the {n_az}x{n_rg} image"
        )
    q = resolve_q(cfg)

    # Centered data keeps the running sums small; a constant image sums to 0 exactly
    reference = float(np.median(img.data))
    centered = img.data - reference
    sums = _summed_area(centered)
    squares = _summed_area(centered ** 2)

    cols = np.arange(n_rg)[None, :]
    outer_c0 = np.maximum(cols - cfg.half_extent_rg, 0)
    outer_c1 = np.minimum(cols + cfg.half_extent_rg + 1, n_rg)
    inner_c0 = np.maximum(cols - cfg.guard_rg, 0)
    inner_c1 = np.minimum(cols + cfg.guard_rg + 1, n_rg)

    def block(start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
        rows = np.arange(start, stop)[:, None]
        outer_r0 = np.maximum(rows - cfg.half_extent_az, 0)
        outer_r1 = np.minimum(rows + cfg.half_extent_az + 1, n_az)
        inner_r0 = np.maximum(rows - cfg.guard_az, 0)
        inner_r1 = np.minimum(rows + cfg.guard_az + 1, n_az)

        count = (outer_r1 - outer_r0) * (outer_c1 - outer_c0) - (inner_r1 - inner_r0) * (inner_c1 - inner_c0)
        s1 = _box_sum(sums, outer_r0, outer_r1, outer_c0, outer_c1) - _box_sum(sums, inner_r0, inner_r1, inner_c0, inner_c1)
        s2 = (_box_sum(squares, outer_r0, outer_r1, outer_c0, outer_c1)
              - _box_sum(squares, inner_r0, inner_r1, inner_c0, inner_c1))

        with np.errstate(divide="ignore", invalid="ignore"):
            mean_centered = np.where(count > 0, s1 / count, 0.0)
            spread = np.where(count > 1, (s2 - s1 * mean_centered) / (count - 1), 0.0)
        sigma = np.sqrt(np.maximum(spread, 0.0))

        threshold = reference + mean_centered + sigma * q
        threshold = np.where(count > 0, threshold, np.inf)
        return img.data[start:stop] > threshold, threshold

    parts = map_row_blocks(block, n_az, block_rows, max_workers)
    mask = np.vstack([part[0] for part in parts])
    threshold = np.vstack([part[1] for part in parts])

    rows, cols_hit = np.nonzero(mask)
    detections = pd.DataFrame(
        {
            "row": rows.astype(np.int64),
            "col": cols_hit.astype(np.int64),
            "amplitude": img.data[rows, cols_hit],
            "threshold": threshold[rows, cols_hit],
        },
        columns=CSVSchemas.DETECTIONS,
    )

    metrics.increment("detections", len(detections))
    logger.info(f"CFAR: Q={q:.4f}, {len(detections)} detections over {n_az}x{n_rg} pixels")
    return DetectionMap(mask=mask, detections=detections, config=cfg, q=q)
