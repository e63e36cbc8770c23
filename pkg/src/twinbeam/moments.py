"""Moment tables, ordering transforms and non-classicality quantification.

Counting moments are turned into normally-ordered intensity moments with
signed Stirling numbers of the first kind (the factorial-moment identity),
and from there into moments of any operator ordering ``s`` through the
integer Laguerre-coefficient expansion

    <W^k>_s = sum_m  (k!)^2 / (m!^2 (k-m)!) * t^(k-m) * <W^m>,   t = (1-s)/2.

A non-classicality identifier (NCI) is an intensity-moment expression that
is negative only for non-classical fields.  Decreasing ``s`` injects
ordering noise that gradually lifts a violated NCI back to zero; the
threshold ``s_th`` where it nullifies gives the non-classicality depth
``tau = (1 - s_th)/2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import JointDist, MarginalDist
from .errors import (DataError, InsufficientOrderError, InvalidParameterError)
from .ingest import JointHistogram

RAW = "raw"
NORMAL = "normally_ordered"
S_ORDERED = "s_ordered"

E_FAMILY = ("E001", "E101", "E111", "E211")
M_FAMILY = ("M1001", "M001001")
L_FAMILY = ("L11", "L21", "L31", "L41")
IDENTIFIERS = E_FAMILY + M_FAMILY + L_FAMILY

#: Total moment order each identifier needs.
_REQUIRED_ORDER = {"E001": 2, "E101": 3, "E111": 4, "E211": 5,
                   "M1001": 2, "M001001": 2,
                   "L11": 2, "L21": 3, "L31": 4, "L41": 5}


def stirling_first(order: int) -> list:
    """Signed Stirling numbers of the first kind, ``s[k][m]`` as exact ints."""
    s = [[0] * (order + 1) for _ in range(order + 1)]
    s[0][0] = 1
    for k in range(1, order + 1):
        for m in range(k + 1):
            s[k][m] = (s[k - 1][m - 1] if m else 0) - (k - 1) * s[k - 1][m]
    return s


def stirling_second(order: int) -> list:
    """Stirling numbers of the second kind, ``S[k][m]`` as exact ints."""
    s = [[0] * (order + 1) for _ in range(order + 1)]
    s[0][0] = 1
    for k in range(1, order + 1):
        for m in range(1, k + 1):
            s[k][m] = s[k - 1][m - 1] + m * s[k - 1][m]
    return s


def laguerre_mixing(order: int) -> list:
    """Integer coefficients ``(k!)^2 / (m!^2 (k-m)!)`` of the ordering change."""
    from math import factorial
    return [[factorial(k) ** 2 // (factorial(m) ** 2 * factorial(k - m))
             if m <= k else 0 for m in range(order + 1)]
            for k in range(order + 1)]


@dataclass
class MomentTable:
    """Mixed moments ``raw[k, l] = <x_s^k x_i^l>`` for ``k, l <= order``."""

    raw: np.ndarray
    order: int
    flavor: str = RAW
    s: float = 1.0
    kind: str = "photon"

    def require(self, order: int) -> None:
        if self.order < order:
            raise InsufficientOrderError(
                f"identifier needs order {order}, table has {self.order}")

    def __getitem__(self, kl) -> float:
        return self.raw[kl]

    def validate(self) -> None:
        if abs(self.raw[0, 0] - 1) > 1e-10:
            raise DataError(f"zeroth moment is {self.raw[0, 0]}, not 1")
        if self.flavor == RAW and self.order >= 2:
            for mean, second in ((self.raw[1, 0], self.raw[2, 0]),
                                 (self.raw[0, 1], self.raw[0, 2])):
                if second < mean ** 2 - 1e-10:
                    raise DataError("second moment below squared mean")


def moments(d: JointDist | MarginalDist, order: int) -> MomentTable:
    """Raw mixed moments of a (possibly one-dimensional) distribution."""
    if order < 1:
        raise InvalidParameterError("order must be >= 1")
    if isinstance(d, MarginalDist):
        table = d.probs[:, None]
        kind = d.kind
    else:
        table = d.table
        kind = d.kind
    ns = np.arange(table.shape[0], dtype=float)
    ni = np.arange(table.shape[1], dtype=float)
    vs = np.vander(ns, order + 1, increasing=True)   # vs[n, k] = n^k
    vi = np.vander(ni, order + 1, increasing=True)
    raw = vs.T @ table @ vi
    return MomentTable(raw, order, RAW, 1.0, kind)


def fano_nrp_cov(m: MomentTable) -> dict:
    """Marginal Fano factors, noise-reduction parameter and covariance."""
    m.require(2)
    mean_s, mean_i = m[1, 0], m[0, 1]
    if mean_s <= 0 or mean_i <= 0:
        raise DataError("Fano and noise-reduction need nonzero means")
    var_s = m[2, 0] - mean_s ** 2
    var_i = m[0, 2] - mean_i ** 2
    cov = m[1, 1] - mean_s * mean_i
    return {
        "fano_s": var_s / mean_s,
        "fano_i": var_i / mean_i,
        "nrp": (var_s + var_i - 2 * cov) / (mean_s + mean_i),
        "covariance": m[1, 1] / np.sqrt(m[2, 0] * m[0, 2]),
    }


def _transform_2d(raw, matrix_k, matrix_l, order):
    """Apply independent per-axis integer transforms to a moment table."""
    out = np.empty_like(raw)
    for k in range(order + 1):
        for l in range(order + 1):
            acc = 0
            for a in range(k + 1):
                ska = matrix_k[k][a]
                if ska == 0:
                    continue
                for b in range(l + 1):
                    slb = matrix_l[l][b]
                    if slb:
                        acc += ska * slb * raw[a, b]
            out[k, l] = acc
    return out


def to_intensity_moments(m: MomentTable) -> MomentTable:
    """Normally-ordered (factorial) moments from raw counting moments."""
    if m.flavor != RAW:
        raise DataError("input must carry raw moments")
    s1 = stirling_first(m.order)
    out = _transform_2d(m.raw, s1, s1, m.order)
    return MomentTable(out, m.order, NORMAL, 1.0, m.kind)


def from_intensity_moments(m: MomentTable) -> MomentTable:
    """Inverse of :func:`to_intensity_moments` (Stirling second kind)."""
    if m.flavor != NORMAL:
        raise DataError("input must carry normally-ordered moments")
    s2 = stirling_second(m.order)
    out = _transform_2d(m.raw, s2, s2, m.order)
    return MomentTable(out, m.order, RAW, 1.0, m.kind)


def to_s_ordered(m: MomentTable, s: float) -> MomentTable:
    """Intensity moments at operator ordering ``s`` (``s = 1`` is a no-op)."""
    if m.flavor != NORMAL:
        raise DataError("ordering change starts from normally-ordered moments")
    if s > 1:
        raise InvalidParameterError("ordering parameter must satisfy s <= 1")
    t = (1.0 - s) / 2.0
    mix = laguerre_mixing(m.order)
    order = m.order
    weighted_k = [[mix[k][a] * t ** (k - a) if a <= k else 0.0
                   for a in range(order + 1)] for k in range(order + 1)]
    out = _transform_2d(m.raw, weighted_k, weighted_k, order)
    return MomentTable(out, order, S_ORDERED, s, m.kind)


def _axis_moment(m: MomentTable, arm: str, k: int) -> float:
    return m[k, 0] if arm == "s" else m[0, k]


def _identifier_terms(m: MomentTable, identifier: str, arm: str) -> list:
    """Signed summands of one identifier (their absolute sum sets its scale)."""
    if identifier not in IDENTIFIERS:
        raise InvalidParameterError(f"unknown identifier {identifier!r}")
    if m.flavor == RAW:
        raise DataError("identifiers are defined on intensity moments")
    m.require(_REQUIRED_ORDER[identifier])
    w = m.raw
    if identifier == "E001":
        return [w[2, 0], w[0, 2], -2 * w[1, 1]]
    if identifier == "E101":
        return [w[3, 0], w[1, 2], -2 * w[2, 1]]
    if identifier == "E111":
        return [w[3, 1], w[1, 3], -2 * w[2, 2]]
    if identifier == "E211":
        return [w[4, 1], w[2, 3], -2 * w[3, 2]]
    if identifier == "M1001":
        return [w[2, 0] * w[0, 2], -w[1, 1] ** 2]
    if identifier == "M001001":
        return [w[2, 0] * w[0, 2], 2 * w[1, 1] * w[1, 0] * w[0, 1],
                -w[1, 1] ** 2, -w[2, 0] * w[0, 1] ** 2,
                -w[1, 0] ** 2 * w[0, 2]]
    k = int(identifier[1])
    return [_axis_moment(m, arm, k + 1),
            -_axis_moment(m, arm, k) * _axis_moment(m, arm, 1)]


def nci_value(m: MomentTable, identifier: str, arm: str = "s") -> float:
    """Evaluate one non-classicality identifier; negative flags non-classicality."""
    return float(sum(_identifier_terms(m, identifier, arm)))


def _noise_floor(m: MomentTable, identifier: str, arm: str) -> float:
    """Round-off magnitude of an identifier evaluated from table ``m``.

    Intensity moments are alternating Stirling sums of the raw counting
    moments; expressions like the third-order identifiers cancel exactly on
    tiny supports, and what is left is pure rounding noise.  The bound
    rebuilds each moment with unsigned Stirling coefficients, which caps the
    cancellation noise, and mirrors the identifier's term structure with the
    product rule.
    """
    raw = np.abs(from_intensity_moments(m).raw)
    s1 = stirling_first(m.order)
    absw = np.empty_like(raw)
    for k in range(m.order + 1):
        for l in range(m.order + 1):
            acc = 0.0
            for a in range(k + 1):
                for b in range(l + 1):
                    acc += abs(s1[k][a] * s1[l][b]) * raw[a, b]
            absw[k, l] = acc

    def axis(k):
        return absw[k, 0] if arm == "s" else absw[0, k]

    w = absw
    if identifier == "E001":
        scale = w[2, 0] + w[0, 2] + 2 * w[1, 1]
    elif identifier == "E101":
        scale = w[3, 0] + w[1, 2] + 2 * w[2, 1]
    elif identifier == "E111":
        scale = w[3, 1] + w[1, 3] + 2 * w[2, 2]
    elif identifier == "E211":
        scale = w[4, 1] + w[2, 3] + 2 * w[3, 2]
    elif identifier == "M1001":
        scale = w[2, 0] * w[0, 2] + w[1, 1] ** 2
    elif identifier == "M001001":
        scale = (w[2, 0] * w[0, 2] + 2 * w[1, 1] * w[1, 0] * w[0, 1]
                 + w[1, 1] ** 2 + w[2, 0] * w[0, 1] ** 2
                 + w[1, 0] ** 2 * w[0, 2])
    else:
        k = int(identifier[1])
        scale = axis(k + 1) + axis(k) * axis(1)
    return 1e-13 * float(scale)


@dataclass
class NcdResult:
    """Outcome of a non-classicality depth determination."""

    identifier: str
    tau: float
    s_threshold: float
    nonclassical: bool
    value_at_normal: float
    saturated: bool = False
    multiple_roots: bool = False


#: Bisection stops once the bracket is this small.
_S_RESOLUTION = 1e-6


def ncd(m: MomentTable, identifier: str, arm: str = "s") -> NcdResult:
    """Non-classicality depth of one identifier via threshold search in ``s``.

    The identifier value is scanned over 64 orderings with s in [-1, 1]; the
    sign change closest to ``s = 1`` is bisected down to ``1e-6``.  A
    violation persisting at ``s = -1`` is reported saturated with ``tau = 1``
    rather than extrapolated.
    """
    if m.flavor != NORMAL:
        raise DataError("depth search starts from normally-ordered moments")

    def value(s: float) -> float:
        return nci_value(to_s_ordered(m, s), identifier, arm)

    # a violation only counts if it clears the round-off floor of the
    # expression: structurally cancelled cases are classical
    floor = _noise_floor(m, identifier, arm)
    v1 = value(1.0)
    if not v1 < -floor:
        return NcdResult(identifier, 0.0, 1.0, False, v1)

    grid = np.linspace(1.0, -1.0, 64)
    vals = [v1] + [value(s) for s in grid[1:]]
    sign_changes = [i for i in range(len(grid) - 1)
                    if vals[i] < -floor <= vals[i + 1]]
    if not sign_changes:
        return NcdResult(identifier, 1.0, -1.0, True, v1, saturated=True)

    lo_i = sign_changes[0]
    hi, lo = grid[lo_i], grid[lo_i + 1]      # value(hi) < -floor <= value(lo)
    while hi - lo > _S_RESOLUTION:
        mid = 0.5 * (hi + lo)
        if value(mid) < -floor:
            hi = mid
        else:
            lo = mid
    s_th = 0.5 * (hi + lo)
    return NcdResult(identifier, (1.0 - s_th) / 2.0, s_th, True, v1,
                     multiple_roots=len(sign_changes) > 1)


def bootstrap_statistic(h: JointHistogram, statistic, n_boot: int = 200,
                        seed: int = 0) -> tuple:
    """Nonparametric bootstrap of a histogram statistic over groups.

    Groups are resampled with replacement (a multinomial redraw of the cell
    counts); returns the mean and standard deviation of the statistic across
    resamples as arrays.
    """
    rng = np.random.default_rng(seed)
    flat = h.counts.ravel()
    prob = flat / flat.sum()
    outcomes = []
    for _ in range(n_boot):
        redraw = rng.multinomial(h.n_groups, prob).reshape(h.counts.shape)
        outcomes.append(np.asarray(statistic(
            JointHistogram(redraw, h.n_groups, h.policy)), dtype=float))
    stacked = np.stack(outcomes)
    return stacked.mean(axis=0), stacked.std(axis=0, ddof=1)
