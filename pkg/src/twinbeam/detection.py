"""Detection matrices for multiplexed on/off detectors and forward models.

An ``N``-pixel detector with quantum efficiency ``eta`` and per-pixel dark
count probability ``dark`` maps ``n`` incident photons to ``c`` clicks with
probability

    T(c, n; N) = C(N, c) * sum_l (-1)^l C(c, l) (1 - dark)^(N-c+l)
                 * (1 - eta (N-c+l)/N)^n .

This alternating sum cancels catastrophically once ``N`` and ``c`` are
large, so the default evaluation path uses an exactly equivalent all-positive
formulation: each photon independently marks a uniformly chosen pixel with
probability ``eta``; a pixel clicks when marked or on a dark count.  The
pixel-occupancy recursion involved is stable in double precision and its
column sums are one by construction.  The alternating sum is retained as an
arbitrary-precision verification path.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from scipy.special import comb, gammaln

from .core import (PHOTOCOUNT, PHOTON, JointDist, MarginalDist, TwbParams,
                   convolve_power_1d, joint_twb)
from .errors import (InvalidParameterError, KindMismatchError,
                     PrecisionExhaustedError, SupportViolationError,
                     ZeroProbabilityConditionError)

#: Column sums of a valid matrix must match 1 this tightly.
COLUMN_SUM_TOL = 1e-10

#: Entries this slightly negative are attributed to rounding and clamped.
NEGATIVE_CLAMP = 1e-12


@dataclass(frozen=True)
class DetectorSpec:
    """Efficiency, dark-count probability per pixel and pixel count."""

    eta: float
    dark: float = 0.0
    pixels: int = 1

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise InvalidParameterError(f"eta must be in (0, 1], got {self.eta}")
        if not 0.0 <= self.dark < 1.0:
            raise InvalidParameterError(f"dark must be in [0, 1), got {self.dark}")
        if self.pixels < 1:
            raise InvalidParameterError(f"pixels must be >= 1, got {self.pixels}")


@dataclass(frozen=True)
class DetectionMatrix:
    """Immutable click-from-photon transfer matrix ``entries[c, n]``."""

    entries: np.ndarray
    spec: DetectorSpec
    precision_bits: int

    @property
    def n_max(self) -> int:
        return self.entries.shape[1] - 1

    def column_sum_error(self) -> float:
        return float(np.abs(self.entries.sum(axis=0) - 1.0).max())


_cache: dict = {}
_cache_lock = threading.Lock()


def default_n_max(c_max: int, eta: float) -> int:
    """Photon-support bound covering essentially all mass behind ``c_max`` clicks."""
    return int(np.ceil(3.0 * (c_max + 5) / eta))


def _occupancy_table(pixels: int, eta: float, n_max: int) -> np.ndarray:
    """``Q[j, n]``: probability that ``n`` photons mark exactly ``j`` pixels.

    One photon is appended per step: it is detected with probability ``eta``
    and then lands on a uniformly chosen pixel.  All recursion terms are
    nonnegative, so double precision is exact to round-off.
    """
    jdim = min(pixels, n_max) + 1
    j = np.arange(jdim, dtype=float)
    stay = 1.0 - eta + eta * j / pixels          # photon lost or pixel already marked
    grow = eta * (pixels - (j - 1.0)) / pixels   # photon marks a fresh pixel
    Q = np.zeros((jdim, n_max + 1))
    Q[0, 0] = 1.0
    col = Q[:, 0].copy()
    for n in range(1, n_max + 1):
        nxt = col * stay
        nxt[1:] += col[:-1] * grow[1:]
        Q[:, n] = nxt
        col = nxt
    return Q


def _dark_mixing(pixels: int, dark: float, jdim: int) -> np.ndarray:
    """``B[c, j]``: probability of ``c`` total clicks given ``j`` marked pixels.

    The remaining ``pixels - j`` pixels click independently with probability
    ``dark``, so ``c - j`` follows a binomial law.
    """
    B = np.zeros((pixels + 1, jdim))
    if dark == 0.0:
        B[:jdim, :] = np.eye(jdim)
        return B
    c = np.arange(pixels + 1)[:, None]
    jj = np.arange(jdim)[None, :]
    k = c - jj
    m = pixels - jj
    valid = (k >= 0) & (k <= m)
    with np.errstate(divide="ignore", invalid="ignore"):
        logpmf = (gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1)
                  + k * np.log(dark) + (m - k) * np.log1p(-dark))
    B[valid] = np.exp(logpmf[valid])
    return B


def _build_stable(spec: DetectorSpec, n_max: int) -> np.ndarray:
    Q = _occupancy_table(spec.pixels, spec.eta, n_max)
    B = _dark_mixing(spec.pixels, spec.dark, Q.shape[0])
    return B @ Q


def _build_extended(spec: DetectorSpec, n_max: int, bits: int) -> np.ndarray:
    """Direct evaluation of the alternating sum at ``bits`` of precision."""
    import mpmath as mp

    N, eta, dark = spec.pixels, spec.eta, spec.dark
    out = np.zeros((N + 1, n_max + 1))
    with mp.workprec(bits):
        one_m_dark = mp.mpf(1) - mp.mpf(dark)
        bases = [mp.mpf(1) - mp.mpf(eta) * m / N for m in range(N + 1)]
        for c in range(N + 1):
            prefactor = mp.binomial(N, c)
            for n in range(n_max + 1):
                acc = mp.mpf(0)
                for l in range(c + 1):
                    m = N - c + l
                    term = (mp.binomial(c, l) * one_m_dark ** m * bases[m] ** n)
                    acc = acc - term if l % 2 else acc + term
                out[c, n] = float(prefactor * acc)
    return out


def detection_matrix(spec: DetectorSpec, n_max: int,
                     precision_bits: int | None = None) -> DetectionMatrix:
    """Build (or fetch from cache) the detection matrix of a detector.

    ``precision_bits=None`` selects the stable double-precision path; an
    explicit bit count selects the arbitrary-precision alternating sum,
    useful for cross-validation.  Column sums are validated either way and
    tiny negative entries are clamped to zero only after validation passes.
    """
    if n_max < 0:
        raise InvalidParameterError("n_max must be >= 0")
    key = (spec.eta, spec.dark, spec.pixels, n_max, precision_bits)
    with _cache_lock:
        hit = _cache.get(key)
    if hit is not None:
        return hit

    if precision_bits is None:
        entries = _build_stable(spec, n_max)
        bits = 53
    else:
        entries = _build_extended(spec, n_max, precision_bits)
        bits = precision_bits

    colsum_err = np.abs(entries.sum(axis=0) - 1.0).max()
    if colsum_err > COLUMN_SUM_TOL:
        raise PrecisionExhaustedError(
            f"column sums off by {colsum_err:.3e} at precision {bits} bits")
    if entries.min() < -NEGATIVE_CLAMP:
        raise PrecisionExhaustedError(
            f"entry {entries.min():.3e} below the rounding clamp")
    np.clip(entries, 0.0, None, out=entries)
    entries.flags.writeable = False
    matrix = DetectionMatrix(entries, spec, bits)
    with _cache_lock:
        _cache[key] = matrix
    return matrix


def forward_photocounts(p: JointDist, spec_s: DetectorSpec,
                        spec_i: DetectorSpec) -> JointDist:
    """Joint photocount distribution of a photon-number distribution."""
    if p.kind != PHOTON:
        raise KindMismatchError("forward model expects a photon-number distribution")
    t_s = detection_matrix(spec_s, p.table.shape[0] - 1)
    t_i = detection_matrix(spec_i, p.table.shape[1] - 1)
    f = t_s.entries @ p.table @ t_i.entries.T
    return JointDist(f, p.tail_mass, PHOTOCOUNT)


def compound_photocounts(f_w: JointDist, n: int) -> JointDist:
    """Photocount distribution of ``n`` independently detected weak beams.

    The per-window distribution must live on {0,1} x {0,1}; the compound
    table is then a four-outcome multinomial, evaluated cell by cell in log
    space.  All contributions are positive, so each cell is accurate to
    round-off and the support is exactly ``0..n`` per axis.
    """
    if f_w.kind != PHOTOCOUNT:
        raise KindMismatchError("compound composition expects photocounts")
    if n < 1:
        raise InvalidParameterError("group size must be >= 1")
    table = f_w.table
    if table.shape[0] > 2 or table.shape[1] > 2:
        if np.abs(table[2:, :]).sum() + np.abs(table[:, 2:]).sum() > 1e-15:
            raise SupportViolationError(
                "per-window distribution has mass outside {0,1}x{0,1}")
        table = table[:2, :2]
    w = np.zeros((2, 2))
    w[:table.shape[0], :table.shape[1]] = table

    # log(0) -> large negative finite value: exp underflows to exactly zero
    # while 0 * log stays zero, keeping the vectorized sum NaN-free.
    logw = np.full((2, 2), -1e9)
    pos = w > 0
    logw[pos] = np.log(w[pos])

    c_cap = _support_cap(w[1, 0] + w[1, 1], n)
    r_cap = _support_cap(w[0, 1] + w[1, 1], n)
    out = np.zeros((n + 1, n + 1))
    lg_n = gammaln(n + 1)
    cs = np.arange(c_cap + 1)[:, None]
    ci = np.arange(r_cap + 1)[None, :]
    acc = np.zeros((c_cap + 1, r_cap + 1))
    for k in range(min(c_cap, r_cap) + 1):
        rest = n - cs - ci + k
        valid = (cs >= k) & (ci >= k) & (rest >= 0)
        lp = (lg_n - gammaln(k + 1.0) - gammaln(cs - k + 1.0)
              - gammaln(ci - k + 1.0) - gammaln(rest + 1.0)
              + k * logw[1, 1] + (cs - k) * logw[1, 0]
              + (ci - k) * logw[0, 1] + rest * logw[0, 0])
        acc += np.where(valid, np.exp(np.where(valid, lp, -np.inf)), 0.0)
    out[:c_cap + 1, :r_cap + 1] = acc
    tail = min(1.0, n * f_w.tail_mass) + max(0.0, 1.0 - out.sum())
    return JointDist(out, tail, PHOTOCOUNT)


def _support_cap(p: float, n: int) -> int:
    """Index beyond which binomial(n, p) mass underflows double precision."""
    if p <= 0:
        return 0
    if p >= 1:
        return n
    mean = n * p
    spread = 42.0 * np.sqrt(max(mean * (1 - p), 1.0)) + 60.0
    return min(n, int(np.ceil(mean + spread)))


def conditional_photon_dist(p_w: JointDist, spec_s: DetectorSpec, c_s: int,
                            n: int) -> MarginalDist:
    """Idler photon distribution after ``c_s`` signal clicks in ``n`` windows.

    Per window the joint weight of ``n_i`` idler photons with click outcome
    ``c`` is ``w_c(n_i) = sum_{n_s} T_s(c, n_s; 1) p_w(n_s, n_i)``.  All
    click patterns summing to ``c_s`` contribute the same convolution
    product, so the compound conditional is the normalized
    ``c_s``-fold convolution of ``w_1`` with the ``(n - c_s)``-fold
    convolution of ``w_0``.
    """
    if spec_s.pixels != 1:
        raise InvalidParameterError("conditioning detector must be a single pixel")
    if not 0 <= c_s <= n:
        raise InvalidParameterError(f"need 0 <= c_s <= {n}, got {c_s}")
    t_s = detection_matrix(spec_s, p_w.table.shape[0] - 1)
    w0 = t_s.entries[0] @ p_w.table
    w1 = t_s.entries[1] @ p_w.table
    s0, s1 = w0.sum(), w1.sum()
    prob = comb(n, c_s, exact=False) * s1 ** c_s * s0 ** (n - c_s)
    if not np.isfinite(prob) or prob < 1e-300:
        raise ZeroProbabilityConditionError(
            f"conditioning on {c_s} clicks in {n} windows has probability {prob}")
    weights = np.convolve(convolve_power_1d(w1, c_s),
                          convolve_power_1d(w0, n - c_s))
    total = weights.sum()
    return MarginalDist(weights / total, 0.0, PHOTON)


def genuine_pnrd_model(params: TwbParams, spec_s: DetectorSpec,
                       spec_i: DetectorSpec) -> JointDist:
    """Photocounts of one strong beam on photon-number-resolving detectors.

    The beam carries ``pixels`` times the constituting mode counts, i.e. the
    same total intensity as the matching compound beam, but all photons share
    one detector per arm.  Serves as the comparison model for the compound
    composition.
    """
    if spec_s.pixels != spec_i.pixels:
        raise InvalidParameterError("both detectors must have the same pixel count")
    strong = params.scaled(spec_s.pixels)
    return forward_photocounts(joint_twb(strong), spec_s, spec_i)
