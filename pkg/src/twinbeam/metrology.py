"""Effective detection efficiencies, post-selection and precision metrics.

The covariance-based effective efficiency generalizes the coincidence
calibration of photon-pair detectors to multi-mode beams:

    eta_s^eff = <dc_s dc_i> / <c_i>   (and symmetrically for the idler).

Post-selecting idler outcomes on a chosen signal photocount yields
sub-Poissonian conditional fields; measuring a mean with such a field beats
the Poissonian (coherent-state) reference at equal mean count, which is what
the normalized relative error quantifies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TwbParams
from .detection import DetectorSpec
from .errors import (DataError, InsufficientDataError, InvalidParameterError,
                     NoEligibleColumnError)
from .ingest import (DISJOINT, GroupingPolicy, JointHistogram,
                     conditioned_sequences, grouped_counts)
from .moments import MomentTable
from .reconstruct import conditional_histogram
from .simulate import ClickStream


@dataclass
class PrecisionReport:
    """Relative-error bookkeeping of one grouped-count sequence."""

    mean: float
    rel_err: float
    rel_err_classical: float
    normalized: float
    n_groups: int
    n_blocks: int
    block_size: int
    partial_coverage: bool = False


@dataclass
class PostSelectionResult:
    """Best conditioning photocount and the conditional field it selects."""

    c_s_opt: int
    fano_min: float
    mean_conditional: float
    p_success: float


def effective_efficiency(data: JointHistogram | MomentTable, arm: str = "s",
                         subtract_dark: DetectorSpec | None = None,
                         group_n: int | None = None) -> float:
    """Covariance-based effective efficiency of one detector.

    With ``subtract_dark`` the per-group dark-count mean ``n * dark`` is
    removed from the denominator mean first.  ``group_n`` is only needed for
    that subtraction when ``data`` is a plain moment table.
    """
    if isinstance(data, JointHistogram):
        norm = data.normalized()
        cs = np.arange(norm.shape[0], dtype=float)
        ci = np.arange(norm.shape[1], dtype=float)
        mean_s = cs @ norm.sum(axis=1)
        mean_i = ci @ norm.sum(axis=0)
        cross = cs @ norm @ ci
        n = data.policy.n
    else:
        data.require(2)
        mean_s, mean_i = data[1, 0], data[0, 1]
        cross = data[1, 1]
        n = group_n
    cov = cross - mean_s * mean_i
    denominator = mean_i if arm == "s" else mean_s
    if subtract_dark is not None:
        if n is None:
            raise InvalidParameterError("dark subtraction needs the group size")
        denominator = denominator - n * subtract_dark.dark
    if denominator <= 0:
        raise DataError("complementary-arm mean is not positive")
    return float(cov / denominator)


def effective_efficiency_model(params: TwbParams, eta: float, k: float,
                               n: int, arm: str = "s") -> float:
    """Model value of the effective efficiency for ``n`` grouped windows.

    Pair-number fluctuations beyond Poissonian and the block-correlated pump
    drift raise it; noise photons in the complementary arm lower it.
    """
    if n < 1:
        raise InvalidParameterError("group size must be >= 1")
    w_pair = n * params.m_p * params.b_p
    var_pair = n * params.m_p * params.b_p ** 2
    w_window = params.m_p * params.b_p
    drift = k * n * (n - 1) * w_window ** 2
    noise = n * (params.m_i * params.b_i if arm == "s"
                 else params.m_s * params.b_s)
    return eta * (w_pair + var_pair + drift) / (w_pair + noise)


def fano_model(params: TwbParams, eta: float, k: float, n: int,
               arm: str = "s") -> float:
    """Marginal photocount Fano factor in the linear-detection model.

    Setting ``eta = 1`` gives the photon-number version.  The model ignores
    the one-click-per-window saturation, so it bounds the measured value
    from above.
    """
    if n < 1:
        raise InvalidParameterError("group size must be >= 1")
    w_pair = n * params.m_p * params.b_p
    var_pair = n * params.m_p * params.b_p ** 2
    m_noise = params.m_s if arm == "s" else params.m_i
    b_noise = params.b_s if arm == "s" else params.b_i
    w_noise = n * m_noise * b_noise
    var_noise = n * m_noise * b_noise ** 2
    drift = k * n * (n - 1) * (params.m_p * params.b_p) ** 2
    return 1.0 + eta * (var_pair + var_noise + drift) / (w_pair + w_noise)


def nrp_model(params: TwbParams, eta_s: float, eta_i: float, k: float,
              n: int) -> float:
    """Photocount noise-reduction parameter in the linear-detection model.

    The pump-drift term enters only through ``(eta_s - eta_i)^2`` and thus
    barely moves balanced detectors.  ``eta_s = eta_i = 1`` gives the
    photon-number version.
    """
    if n < 1:
        raise InvalidParameterError("group size must be >= 1")
    w_pair = n * params.m_p * params.b_p
    var_pair = n * params.m_p * params.b_p ** 2
    w_s, var_s = n * params.m_s * params.b_s, n * params.m_s * params.b_s ** 2
    w_i, var_i = n * params.m_i * params.b_i, n * params.m_i * params.b_i ** 2
    drift = k * n * (n - 1) * (params.m_p * params.b_p) ** 2
    numerator = ((eta_s - eta_i) ** 2 * (var_pair + drift)
                 - 2 * eta_s * eta_i * w_pair
                 + eta_s ** 2 * var_s + eta_i ** 2 * var_i)
    denominator = (eta_s + eta_i) * w_pair + eta_s * w_s + eta_i * w_i
    return 1.0 + numerator / denominator


def optimal_postselection(h: JointHistogram,
                          min_events: int = 100) -> PostSelectionResult:
    """Conditioning signal photocount minimizing the conditional Fano factor.

    Columns with fewer than ``min_events`` groups are excluded: their sample
    Fano factors are too noisy to rank.
    """
    best = None
    occupancy = h.counts.sum(axis=1)
    for c_s in range(h.counts.shape[0]):
        if occupancy[c_s] < min_events:
            continue
        cond = conditional_histogram(h, c_s)
        mean = cond.mean()
        if mean == 0:
            continue
        fano = cond.fano()
        if best is None or fano < best.fano_min:
            best = PostSelectionResult(c_s, fano, mean,
                                       occupancy[c_s] / h.n_groups)
    if best is None:
        raise NoEligibleColumnError(
            f"no signal column reaches {min_events} events")
    return best


def relative_error(seq: np.ndarray, n_m: int) -> PrecisionReport:
    """Relative error of a mean estimated from blocks of ``n_m`` repetitions.

    The sequence of grouped counts is cut into disjoint blocks of ``n_m``
    values.  Each block contributes its per-measurement relative error
    ``sqrt(<c^2> - <c>^2) / <c>`` (population-style normalization, so short
    blocks are biased low); the block average divided by ``sqrt(n_m)`` is
    the relative error of the estimated mean.  The classical reference is a
    Poissonian beam of the same global mean measured equally often.
    """
    seq = np.asarray(seq, dtype=float)
    n_blocks = len(seq) // n_m
    if n_blocks < 1:
        raise InsufficientDataError(
            f"sequence of {len(seq)} groups gives no block of {n_m}")
    trimmed = seq[:n_blocks * n_m].reshape(n_blocks, n_m)
    means = trimmed.mean(axis=1)
    if np.any(means == 0):
        raise DataError("a block has zero mean count")
    spreads = trimmed.std(axis=1)          # population normalization (1/n_m)
    per_measurement = float(np.mean(spreads / means))
    global_mean = float(trimmed.mean())
    rel = per_measurement / np.sqrt(n_m)
    rel_classical = 1.0 / np.sqrt(global_mean * n_m)
    return PrecisionReport(global_mean, rel, rel_classical, rel / rel_classical,
                           len(seq), n_blocks, n_m)


def precision_improvement(stream: ClickStream, n: int, n_m: int) -> dict:
    """Precision gain of conditioned over reference grouped photocounts.

    ``S_cs`` compares the sequence conditioned on signal clicks (idler
    detections in heralded windows) against the idler reference measured by
    the same detector; ``S_ci`` is the mirror image.  Values below one mean
    the conditioned, sub-Poissonian field measures a mean more precisely.
    """
    seqs = conditioned_sequences(stream)
    policy = GroupingPolicy(n, DISJOINT)

    def report(bits) -> PrecisionReport:
        if len(bits) < n * n_m:
            raise InsufficientDataError(
                f"{len(bits)} windows cannot fill one block of {n_m} groups of {n}")
        rep = relative_error(grouped_counts(bits, policy), n_m)
        return rep

    ref_s = report(seqs["reference_s"])
    ref_i = report(seqs["reference_i"])
    cond_on_s = report(seqs["conditioned_i"])
    cond_on_i = report(seqs["conditioned_s"])
    cond_on_s.partial_coverage = len(seqs["conditioned_i"]) < n * n_m * 2
    cond_on_i.partial_coverage = len(seqs["conditioned_s"]) < n * n_m * 2
    return {
        "reference_s": ref_s,
        "reference_i": ref_i,
        "conditioned_on_signal": cond_on_s,
        "conditioned_on_idler": cond_on_i,
        "S_cs": cond_on_s.normalized / ref_i.normalized,
        "S_ci": cond_on_i.normalized / ref_s.normalized,
    }
