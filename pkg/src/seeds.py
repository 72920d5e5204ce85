from typing import Dict

import numpy as np


class SeedManager:
    """Derive independent random streams from one run seed

    Each (stream, row) pair gets its own generator, so row-parallel
    generation gives the same numbers for any worker count.
    """

    STREAMS: Dict[str, int] = {
        'clutter_raw': 1,
        'clutter_focused': 2,
        'field': 3,
    }

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)

    def stream_id(self, stream: str) -> int:
        if stream not in self.STREAMS:
            raise KeyError(f"unknown random stream '{stream}'")
        return self.STREAMS[stream]

    def row_rng(self, stream: str, row: int) -> np.random.Generator:
        """Generator for one azimuth row of a stream"""
        return np.random.default_rng([self.seed, self.stream_id(stream), int(row)])
