"""Prediction-quality tracking for the DH guidance variant.

Each link keeps a sliding window of prediction errors, one sample per minute:
err = observed mean travel time minus the reservation-model estimate.  The
Pearson correlation of those errors against their sample index (re-indexed
1..n on every read) measures whether the model is drifting; ``blend`` mixes
the model estimate and the current observation accordingly.
"""

from __future__ import annotations

import math
from collections import deque


class ErrorWindow:
    """Sliding window of at most `capacity` prediction-error samples."""

    def __init__(self, capacity: int = 60):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._samples: deque[float] = deque(maxlen=capacity)

    def record_sample(self, err: float) -> None:
        if not math.isfinite(err):
            raise ValueError("error sample must be finite")
        self._samples.append(err)

    def __len__(self) -> int:
        return len(self._samples)

    def samples(self) -> list[float]:
        return list(self._samples)

    def pearson_r(self) -> float:
        """Correlation of the stored errors against their index 1..n.

        Zero for fewer than two samples or when either side has zero
        variance; otherwise the plain product-moment coefficient.
        """
        n = len(self._samples)
        if n < 2:
            return 0.0
        ys = self._samples
        mean_x = (n + 1) / 2.0
        mean_y = math.fsum(ys) / n
        sxy = 0.0
        sxx = 0.0
        syy = 0.0
        for i, y in enumerate(ys, start=1):
            dx = i - mean_x
            dy = y - mean_y
            sxy += dx * dy
            sxx += dx * dx
            syy += dy * dy
        if sxx == 0.0 or syy == 0.0:
            return 0.0
        return sxy / math.sqrt(sxx * syy)


def blend(r: float, t_lpf: float, t_cur: float) -> float:
    """Mix the reservation estimate and the current observation by |r|.

    Negative correlation weights toward the reservation estimate, positive
    correlation toward the live observation; r == 0 returns the estimate
    unchanged.
    """
    if not (math.isfinite(t_lpf) and math.isfinite(t_cur)):
        raise ValueError("travel times must be finite")
    if not (-1.0 <= r <= 1.0):
        raise ValueError(f"correlation must lie in [-1, 1], got {r!r}")
    if r == 0.0:
        return t_lpf
    w = abs(r)
    if r < 0.0:
        return w * t_lpf + (1.0 - w) * t_cur
    return (1.0 - w) * t_lpf + w * t_cur
