"""Photon-number models of twin beams.

A twin beam is modelled as three independent multi-mode thermal components:
a paired component feeding both arms and one noise component per arm.  Each
component follows the Mandel-Rice law for ``m`` equally populated modes with
``b`` mean photons (or photon pairs) per mode.  The joint signal-idler
photon-number distribution is the two-fold convolution of the three
component distributions, the paired component entering both arms with the
same photon number.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .errors import InvalidParameterError, KindMismatchError

PHOTON = "photon"
PHOTOCOUNT = "photocount"

#: Largest probability mass a truncated distribution may silently discard.
TAIL_CEILING = 1e-10

#: Per-component truncation target used when growing supports automatically.
COMPONENT_TAIL = 1e-12


@dataclass(frozen=True)
class TwbParams:
    """Mode counts and per-mode means of the three twin-beam components.

    ``m_*`` are (real, positive) mode counts, ``b_*`` mean photon(-pair)
    numbers per mode for the paired (``p``), noise-signal (``s``) and
    noise-idler (``i``) components.
    """

    m_p: float
    m_s: float
    m_i: float
    b_p: float
    b_s: float
    b_i: float

    def __post_init__(self):
        for name in ("m_p", "m_s", "m_i"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise InvalidParameterError(f"{name} must be finite and > 0, got {v}")
        for name in ("b_p", "b_s", "b_i"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidParameterError(f"{name} must be finite and >= 0, got {v}")

    @property
    def mean_pairs(self) -> float:
        return self.m_p * self.b_p

    @property
    def mean_signal(self) -> float:
        return self.m_p * self.b_p + self.m_s * self.b_s

    @property
    def mean_idler(self) -> float:
        return self.m_p * self.b_p + self.m_i * self.b_i

    def scaled(self, n: int) -> "TwbParams":
        """Parameters of ``n`` such beams combined (mode counts scaled)."""
        return replace(self, m_p=self.m_p * n, m_s=self.m_s * n, m_i=self.m_i * n)


@dataclass
class MarginalDist:
    """Truncated one-dimensional counting distribution."""

    probs: np.ndarray
    tail_mass: float
    kind: str = PHOTON

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)

    @property
    def n_max(self) -> int:
        return len(self.probs) - 1

    def mean(self) -> float:
        return float(np.arange(len(self.probs)) @ self.probs)

    def var(self) -> float:
        n = np.arange(len(self.probs))
        m = self.mean()
        return float((n - m) ** 2 @ self.probs)

    def fano(self) -> float:
        return self.var() / self.mean()

    def validate(self, atol: float = 1e-12) -> None:
        if np.any(self.probs < -atol):
            raise InvalidParameterError("negative probabilities in marginal")
        total = self.probs.sum() + self.tail_mass
        if abs(total - 1.0) > 1e-12 * max(1.0, len(self.probs) ** 0.5):
            raise InvalidParameterError(f"marginal not normalized: {total}")


@dataclass
class JointDist:
    """Truncated joint distribution over (signal, idler) counts.

    ``table[n_s, n_i]`` holds the probability of ``n_s`` signal and ``n_i``
    idler counts; ``tail_mass`` is whatever the truncation discarded.  A
    distribution whose tail exceeds :data:`TAIL_CEILING` is flagged
    ``truncation_dirty`` rather than rejected.
    """

    table: np.ndarray
    tail_mass: float
    kind: str = PHOTON
    truncation_dirty: bool = field(default=False)

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=float)
        if self.tail_mass > TAIL_CEILING:
            self.truncation_dirty = True

    @property
    def shape(self) -> tuple:
        return self.table.shape

    def marginal(self, arm: str) -> MarginalDist:
        axis = 1 if arm == "s" else 0
        return MarginalDist(self.table.sum(axis=axis), self.tail_mass, self.kind)

    def mean(self, arm: str) -> float:
        return self.marginal(arm).mean()

    def validate(self, atol: float = 1e-12) -> None:
        if np.any(self.table < -atol):
            raise InvalidParameterError("negative probabilities in joint table")
        total = self.table.sum() + self.tail_mass
        if abs(total - 1.0) > 1e-12 * max(1.0, np.sqrt(self.table.size)):
            raise InvalidParameterError(f"joint table not normalized: {total}")


def mandel_rice(m: float, b: float, n_max: int) -> MarginalDist:
    """Photon-number distribution of ``m`` thermal modes with mean ``b`` each.

    Evaluated through the stable ratio recurrence
    ``p[n+1] = p[n] * (n + m)/(n + 1) * b/(1 + b)`` which avoids Gamma
    overflow for supports reaching into the thousands.
    """
    if not np.isfinite(m) or m <= 0:
        raise InvalidParameterError(f"mode count must be finite and > 0, got {m}")
    if not np.isfinite(b) or b < 0:
        raise InvalidParameterError(f"mean per mode must be finite and >= 0, got {b}")
    if n_max < 0:
        raise InvalidParameterError("n_max must be >= 0")
    n = np.arange(n_max, dtype=float)
    ratios = (n + m) / (n + 1.0) * (b / (1.0 + b))
    p0 = np.exp(-m * np.log1p(b))
    probs = np.empty(n_max + 1)
    probs[0] = p0
    if n_max > 0:
        probs[1:] = p0 * np.cumprod(ratios)
    tail = max(0.0, 1.0 - probs.sum())
    return MarginalDist(probs, tail, PHOTON)


def _mr_support(m: float, b: float, tail: float = COMPONENT_TAIL) -> int:
    """Smallest support bound keeping the Mandel-Rice tail below ``tail``.

    Starts from a moment-based guess and grows geometrically (factor 1.5)
    until the requirement is met, so truncation never biases moments.
    """
    mean = m * b
    sd = np.sqrt(mean * (1.0 + b))
    n = int(np.ceil(mean + 10.0 * sd + 10))
    while mandel_rice(m, b, n).tail_mass > tail:
        n = int(np.ceil(n * 1.5)) + 5
    return n


def joint_twb(params: TwbParams, n_s_max: int | None = None,
              n_i_max: int | None = None) -> JointDist:
    """Joint signal-idler photon-number distribution of a twin beam.

    ``p(n_s, n_i) = sum_n p_s(n_s - n) p_i(n_i - n) p_p(n)`` with the three
    components from :func:`mandel_rice`.  Component supports are grown until
    each truncated tail is below :data:`COMPONENT_TAIL`; explicit bounds, if
    given, clip the final table (the clipped mass shows up in ``tail_mass``).
    """
    kp = _mr_support(params.m_p, params.b_p)
    ks = _mr_support(params.m_s, params.b_s)
    ki = _mr_support(params.m_i, params.b_i)
    pp = mandel_rice(params.m_p, params.b_p, kp).probs
    ps = mandel_rice(params.m_s, params.b_s, ks).probs
    pi = mandel_rice(params.m_i, params.b_i, ki).probs

    full = np.zeros((kp + ks + 1, kp + ki + 1))
    cross = np.outer(ps, pi)
    for n in range(kp + 1):
        full[n:n + ks + 1, n:n + ki + 1] += pp[n] * cross

    if n_s_max is not None or n_i_max is not None:
        ns = full.shape[0] - 1 if n_s_max is None else n_s_max
        ni = full.shape[1] - 1 if n_i_max is None else n_i_max
        out = np.zeros((ns + 1, ni + 1))
        view = full[:ns + 1, :ni + 1]
        out[:view.shape[0], :view.shape[1]] = view
        full = out
    tail = max(0.0, 1.0 - full.sum())
    return JointDist(full, tail, PHOTON)


def convolve_joint(a: JointDist, b: JointDist) -> JointDist:
    """Distribution of the cell-wise sum of two independent joint counts."""
    if a.kind != b.kind:
        raise KindMismatchError(f"cannot convolve {a.kind} with {b.kind}")
    big = a.table.size * b.table.size > 1e8
    table = signal.fftconvolve(a.table, b.table) if big else \
        signal.convolve2d(a.table, b.table)
    # FFT round-off may leave tiny negatives; anything worse is a real bug.
    if table.min() < -1e-12:
        raise InvalidParameterError("convolution produced negative mass")
    np.clip(table, 0.0, None, out=table)
    tail = min(1.0, a.tail_mass + b.tail_mass)
    return JointDist(table, tail, a.kind)


def self_convolve(d: JointDist, n: int) -> JointDist:
    """``n``-fold convolution of a joint distribution with itself.

    Uses binary exponentiation, so only ``O(log n)`` convolutions run.
    """
    if n < 1:
        raise InvalidParameterError("fold count must be >= 1")
    result = None
    power = d
    k = n
    while k:
        if k & 1:
            result = power if result is None else convolve_joint(result, power)
        k >>= 1
        if k:
            power = convolve_joint(power, power)
    return result


def convolve_power_1d(p: np.ndarray, n: int) -> np.ndarray:
    """``n``-fold discrete self-convolution of a 1-D weight vector."""
    if n == 0:
        return np.array([1.0])
    result = None
    power = np.asarray(p, dtype=float)
    k = n
    while k:
        if k & 1:
            result = power if result is None else np.convolve(result, power)
        k >>= 1
        if k:
            power = np.convolve(power, power)
    return result
