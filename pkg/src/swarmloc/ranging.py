"""UWB range stream filtering.

Raw inter-robot ranges are smoothed with a short moving average and then
passed through a RANSAC consensus step that rejects non-line-of-sight
outliers. Pairs without a consensus are flagged invalid for that step so
downstream consumers can skip them.
"""

import math
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class RawRange:
    """One range measurement between robots i < j at a given step."""

    i: int
    j: int
    step: int
    distance: float

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("a range needs two distinct robots")
        if self.i > self.j:
            raise ValueError("range pairs are stored with i < j")
        if not (math.isfinite(self.distance) and self.distance >= 0.0):
            raise ValueError("range distance must be finite and non-negative")
        if self.step < 0:
            raise ValueError("step must be non-negative")

    @property
    def pair(self):
        return (self.i, self.j)


@dataclass(frozen=True)
class RangeSet:
    """Filtered pairwise distances for one step.

    distances: (n, n) symmetric with zero diagonal
    valid: (n, n) boolean mask; invalid pairs hold distance 0
    """

    step: int
    distances: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        d = np.array(self.distances, dtype=float)
        v = np.array(self.valid, dtype=bool)
        n = d.shape[0]
        if d.shape != (n, n) or v.shape != (n, n):
            raise ValueError("distance and validity matrices must be square and matching")
        if not np.array_equal(d, d.T) or not np.array_equal(v, v.T):
            raise ValueError("range set must be symmetric")
        if np.any(np.diag(d) != 0.0) or np.any(np.diag(v)):
            raise ValueError("range set diagonal must be zero/invalid")
        masked = d[v]
        if masked.size and (not np.all(np.isfinite(masked)) or np.any(masked < 0.0)):
            raise ValueError("valid ranges must be finite and non-negative")
        d.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "valid", v)

    @property
    def n(self) -> int:
        return self.distances.shape[0]

    @property
    def all_valid(self) -> bool:
        off_diag = ~np.eye(self.n, dtype=bool)
        return bool(np.all(self.valid[off_diag]))


class RansacResult(NamedTuple):
    ok: bool
    inliers: np.ndarray  # boolean mask over the window
    value: float  # consensus mean; nan when not ok


def _window_values(window) -> np.ndarray:
    """Distances of a filter window; validates RawRange windows."""
    if len(window) == 0:
        raise ValueError("empty filter window")
    first = window[0]
    if isinstance(first, RawRange):
        pair = first.pair
        last_step = first.step
        values = np.empty(len(window))
        for k, sample in enumerate(window):
            if sample.pair != pair:
                raise ValueError("filter window mixes robot pairs")
            if sample.step < last_step:
                raise ValueError("filter window steps must be ordered")
            last_step = sample.step
            values[k] = sample.distance
        return values
    return np.asarray(window, dtype=float)


def moving_average(window) -> float:
    """Mean of a window of samples for a single pair."""
    return float(np.mean(_window_values(window)))


def ransac_filter(window, threshold=0.3, min_samples=5, iterations=50, rng=None) -> RansacResult:
    """Constant-model RANSAC over a window of range samples.

    Every hypothesis is a single sample value; inliers are samples within
    `threshold` of it. A consensus needs at least ceil(0.5 * len(window))
    members, otherwise the pair is invalid for this step. With
    iterations >= len(window) the hypothesis scan is exhaustive (and thus
    independent of the seed); ties break to the earliest hypothesis.
    """
    values = _window_values(window)
    m = len(values)
    if m < min_samples:
        raise ValueError(f"RANSAC window needs at least {min_samples} samples, got {m}")
    if threshold <= 0.0:
        raise ValueError("inlier threshold must be positive")
    min_consensus = math.ceil(0.5 * m)

    if iterations >= m:
        hypothesis_indices = np.arange(m)
    else:
        if rng is None or isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        hypothesis_indices = rng.integers(0, m, size=iterations)

    best_count = 0
    best_mask = None
    for idx in hypothesis_indices:
        mask = np.abs(values - values[idx]) <= threshold
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
    if best_mask is None or best_count < min_consensus:
        return RansacResult(False, np.zeros(m, dtype=bool), float("nan"))
    return RansacResult(True, best_mask, float(values[best_mask].mean()))


def assemble_range_set(n: int, step: int, pairs) -> RangeSet:
    """Build a RangeSet from {(i, j): distance or None} for i < j."""
    distances = np.zeros((n, n))
    valid = np.zeros((n, n), dtype=bool)
    for (i, j), value in pairs.items():
        if not (0 <= i < j < n):
            raise ValueError(f"pair ({i}, {j}) out of range for n={n}")
        if value is None:
            continue
        distances[i, j] = distances[j, i] = float(value)
        valid[i, j] = valid[j, i] = True
    return RangeSet(step, distances, valid)


class RangeFilterBank:
    """Stateful per-pair filter chain: moving average, then RANSAC.

    Raw samples are pushed as they arrive (possibly several per step); the
    smoothed stream feeds a longer RANSAC window whose consensus mean is
    the filtered range for the step.
    """

    def __init__(self, n, ma_window=5, ransac_window=15, threshold=0.3,
                 min_samples=5, iterations=50, seed=0):
        self.n = n
        self.threshold = threshold
        self.min_samples = min_samples
        self.iterations = iterations
        self._rng = np.random.default_rng(seed)
        self._raw = {}
        self._smoothed = {}
        for i in range(n):
            for j in range(i + 1, n):
                self._raw[(i, j)] = deque(maxlen=ma_window)
                self._smoothed[(i, j)] = deque(maxlen=ransac_window)

    def push(self, sample: RawRange) -> None:
        raw = self._raw[sample.pair]
        raw.append(sample.distance)
        self._smoothed[sample.pair].append(moving_average(raw))

    def range_set(self, step: int) -> RangeSet:
        """Filtered ranges for the step, after all its samples were pushed."""
        pairs = {}
        for pair, smoothed in self._smoothed.items():
            if len(smoothed) < self.min_samples:
                pairs[pair] = None
                continue
            result = ransac_filter(
                list(smoothed),
                threshold=self.threshold,
                min_samples=self.min_samples,
                iterations=self.iterations,
                rng=self._rng,
            )
            pairs[pair] = result.value if result.ok else None
        return assemble_range_set(self.n, step, pairs)
