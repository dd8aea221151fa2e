"""Shared plumbing: deterministic JSON output, ordered parallel map, grids."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

__all__ = ["parallel_map", "dump_json", "geometric_grid"]


def parallel_map(fn, items, threads: int = 1) -> list:
    """map() preserving input order, optionally on a thread pool.

    Results are collected per index, so reductions done by the caller see
    the same sequence no matter how many workers ran.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(fn, items))


def dump_json(payload, path=None) -> str:
    """Canonical JSON: sorted keys, fixed indent, no NaN, trailing newline.

    Float formatting is repr (shortest round-trip), so equal inputs give
    byte-equal files.
    """
    text = json.dumps(payload, sort_keys=True, indent=1, allow_nan=False)
    text += "\n"
    if path is not None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(text)
    return text


def geometric_grid(lo: float, hi: float, per_octave: int = 4) -> np.ndarray:
    """Ascending grid lo * 2^(j/per_octave) capped at hi; at least one node."""
    if lo <= 0:
        raise ValueError(f"grid start must be positive, got {lo}")
    if per_octave < 1:
        raise ValueError(f"per_octave must be >= 1, got {per_octave}")
    if hi <= lo:
        return np.array([lo])
    count = int(math.floor(math.log2(hi / lo) * per_octave + 1e-9)) + 1
    grid = lo * 2.0 ** (np.arange(count) / per_octave)
    return grid[grid <= hi * (1 + 1e-12)]
