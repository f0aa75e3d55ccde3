"""Utilities"""
from typing import Sequence

import numpy as np


def fit_power_law(sizes: Sequence[float], times: Sequence[float]) -> float:
    """Least-squares exponent b of time = a * size^b"""
    x = np.asarray(sizes, dtype=float)
    y = np.asarray(times, dtype=float)
    mask = (x > 0) & (y > 0)
    if np.count_nonzero(mask) < 2:
        return float("nan")

    slope, _intercept = np.polyfit(np.log(x[mask]), np.log(y[mask]), 1)
    return float(slope)


def parse_counts(text: str) -> list:
    """Parse '1..8', '0,2,4' or '3'"""
    counts = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue

        if ".." in part:
            start, end = part.split("..", maxsplit=1)
            counts.extend(range(int(start), int(end) + 1))
        else:
            counts.append(int(part))

    return counts


def relative_gap(incumbent: float, bound: float) -> float:
    return max(0.0, incumbent - bound) / max(1.0, abs(incumbent))
