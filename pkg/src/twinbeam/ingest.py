"""Grouping click streams into compound-beam samples and stream statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateStreamError, InvalidParameterError,
                     StreamTooShortError)
from .simulate import ClickStream

SLIDING = "sliding"
DISJOINT = "disjoint"


@dataclass(frozen=True)
class GroupingPolicy:
    """How many subsequent windows form one group and how groups overlap.

    Sliding groups reuse windows (every shift by one window starts a new
    group) and are therefore statistically dependent; disjoint groups are
    independent and preferred for variance-based statistics.
    """

    n: int
    mode: str = SLIDING

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParameterError("group size must be >= 1")
        if self.mode not in (SLIDING, DISJOINT):
            raise InvalidParameterError(f"unknown grouping mode {self.mode!r}")


@dataclass
class JointHistogram:
    """Counts of (signal, idler) group sums over ``0..n`` squared."""

    counts: np.ndarray
    n_groups: int
    policy: GroupingPolicy

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)

    def normalized(self) -> np.ndarray:
        return self.counts / self.n_groups

    def marginal_counts(self, arm: str) -> np.ndarray:
        return self.counts.sum(axis=1 if arm == "s" else 0)


def grouped_counts(bits: np.ndarray, policy: GroupingPolicy) -> np.ndarray:
    """Per-group sums of a single bit sequence."""
    bits = np.asarray(bits)
    if len(bits) < policy.n:
        raise StreamTooShortError(
            f"stream of {len(bits)} windows cannot form groups of {policy.n}")
    if policy.mode == DISJOINT:
        m = len(bits) // policy.n
        return bits[:m * policy.n].reshape(m, policy.n).sum(axis=1)
    csum = np.concatenate(([0], np.cumsum(bits, dtype=np.int64)))
    return csum[policy.n:] - csum[:-policy.n]


def group_histogram(stream: ClickStream, policy: GroupingPolicy) -> JointHistogram:
    """Joint histogram of grouped signal and idler click numbers."""
    gs = grouped_counts(stream.signal, policy)
    gi = grouped_counts(stream.idler, policy)
    n = policy.n
    counts = np.zeros((n + 1, n + 1), dtype=np.int64)
    np.add.at(counts, (gs, gi), 1)
    return JointHistogram(counts, len(gs), policy)


def conditioned_sequences(stream: ClickStream) -> dict:
    """Reference and conditioned click sequences of both arms.

    ``conditioned_i`` keeps the idler bits of exactly those windows in which
    the signal detector clicked (and symmetrically for ``conditioned_s``).
    """
    if len(stream) == 0:
        raise StreamTooShortError("empty stream")
    s, i = stream.signal, stream.idler
    return {
        "reference_s": s,
        "reference_i": i,
        "conditioned_s": s[i == 1],
        "conditioned_i": i[s == 1],
    }


def window_correlation(stream: ClickStream, arm: str, dj_max: int) -> np.ndarray:
    """Normalized correlation of click fluctuations at window shifts ``0..dj_max``.

    ``K[dj] = n_windows * sum_j dc_j dc_{j+dj} / (sum_j c_j)^2`` with the sum
    truncated at the end of the record (no wraparound).
    """
    bits = stream.signal if arm == "s" else stream.idler
    n = len(bits)
    if n <= dj_max:
        raise StreamTooShortError("stream shorter than the requested shift range")
    total = int(bits.sum())
    if total == 0:
        raise DegenerateStreamError(f"no clicks in arm {arm!r}")
    dc = bits.astype(np.float64) - total / n
    # One FFT gives every shift at once; the linear (non-circular) part is
    # exactly the truncated sum above.
    size = 1 << int(np.ceil(np.log2(n + dj_max + 1)))
    spec = np.fft.rfft(dc, size)
    corr = np.fft.irfft(spec * np.conj(spec), size)[:dj_max + 1]
    return n * corr / float(total) ** 2


def averaged_correlation(k: np.ndarray, delta_j: int) -> np.ndarray:
    """Centered moving average over ``2 delta_j + 1`` shifts, edges shrunk."""
    if delta_j < 0:
        raise InvalidParameterError("delta_j must be >= 0")
    if delta_j == 0:
        return np.asarray(k, dtype=float).copy()
    k = np.asarray(k, dtype=float)
    width = 2 * delta_j + 1
    kernel = np.ones(width)
    sums = np.convolve(k, kernel, mode="same")
    norm = np.convolve(np.ones_like(k), kernel, mode="same")
    return sums / norm
