"""Maximum-likelihood reconstruction of photon statistics from photocounts.

The estimate is driven to the maximum-likelihood solution by the
expectation-maximization iteration

    F(c_s, c_i)   = f(c_s, c_i) / sum_{n} T_s(c_s, n_s) T_i(c_i, n_i) p(n_s, n_i)
    p(n_s, n_i) <- p(n_s, n_i) * sum_{c} F(c_s, c_i) T_s(c_s, n_s) T_i(c_i, n_i)

i.e. the measured histogram is compared with the forward projection of the
current estimate and the ratio is projected back through the detection
matrices.  Because the matrices are column-stochastic, every iterate is a
probability distribution, and the data log-likelihood never decreases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PHOTOCOUNT, PHOTON, JointDist, MarginalDist
from .detection import DetectionMatrix
from .errors import (DataError, EmptyConditionError, InvalidParameterError,
                     KindMismatchError)
from .ingest import JointHistogram


@dataclass(frozen=True)
class EmConfig:
    """Stopping rule and photon-support truncation of a reconstruction."""

    max_iters: int = 10_000
    tol: float = 1e-9
    n_max: int | None = None
    track_likelihood: bool = False

    def __post_init__(self):
        if self.tol <= 0:
            raise InvalidParameterError("tol must be > 0")
        if self.max_iters < 1:
            raise InvalidParameterError("max_iters must be >= 1")


@dataclass
class EmResult:
    converged: bool
    iterations: int
    final_change: float
    log_likelihood: list


def _as_table(f) -> np.ndarray:
    if isinstance(f, JointHistogram):
        return f.normalized()
    if isinstance(f, JointDist):
        if f.kind != PHOTOCOUNT:
            raise KindMismatchError("reconstruction input must be photocounts")
        return f.table / f.table.sum()
    raise DataError(f"cannot reconstruct from {type(f).__name__}")


def _check_support(t: DetectionMatrix, c_dim: int, n_dim: int, label: str):
    if t.entries.shape[0] < c_dim:
        raise DataError(f"{label} matrix covers {t.entries.shape[0]} click values, "
                        f"data needs {c_dim}")
    if t.entries.shape[1] < n_dim:
        raise DataError(f"{label} matrix covers {t.entries.shape[1]} photon values, "
                        f"support needs {n_dim}")


def em_joint(f, t_s: DetectionMatrix, t_i: DetectionMatrix,
             cfg: EmConfig = EmConfig()) -> tuple[JointDist, EmResult]:
    """Reconstruct a joint photon-number distribution from photocounts."""
    data = _as_table(f)
    n_s_dim = cfg.n_max + 1 if cfg.n_max is not None else t_s.entries.shape[1]
    n_i_dim = cfg.n_max + 1 if cfg.n_max is not None else t_i.entries.shape[1]
    _check_support(t_s, data.shape[0], n_s_dim, "signal")
    _check_support(t_i, data.shape[1], n_i_dim, "idler")
    ts = t_s.entries[:data.shape[0], :n_s_dim]
    ti = t_i.entries[:data.shape[1], :n_i_dim]

    p = np.full((n_s_dim, n_i_dim), 1.0 / (n_s_dim * n_i_dim))
    observed = data > 0
    history = []
    change = np.inf
    for it in range(1, cfg.max_iters + 1):
        projected = ts @ p @ ti.T
        ratio = np.where(observed, data / np.where(observed, projected, 1.0), 0.0)
        new = p * (ts.T @ ratio @ ti)
        change = float(np.abs(new - p).max())
        p = new
        if cfg.track_likelihood:
            ll = float(data[observed] @ np.log(projected[observed]))
            if history and ll < history[-1] - 1e-10:
                raise AssertionError(f"log-likelihood decreased at iteration {it}")
            history.append(ll)
        if change < cfg.tol:
            return (JointDist(p, 0.0, PHOTON),
                    EmResult(True, it, change, history))
    return JointDist(p, 0.0, PHOTON), EmResult(False, cfg.max_iters, change, history)


def em_conditional(f_ci: MarginalDist | np.ndarray, t_i: DetectionMatrix,
                   cfg: EmConfig = EmConfig()) -> tuple[MarginalDist, EmResult]:
    """One-dimensional reconstruction of a conditional photocount column."""
    data = f_ci.probs if isinstance(f_ci, MarginalDist) else np.asarray(f_ci, float)
    data = data / data.sum()
    n_dim = cfg.n_max + 1 if cfg.n_max is not None else t_i.entries.shape[1]
    _check_support(t_i, len(data), n_dim, "idler")
    ti = t_i.entries[:len(data), :n_dim]

    p = np.full(n_dim, 1.0 / n_dim)
    observed = data > 0
    history = []
    change = np.inf
    for it in range(1, cfg.max_iters + 1):
        projected = ti @ p
        ratio = np.where(observed, data / np.where(observed, projected, 1.0), 0.0)
        new = p * (ti.T @ ratio)
        change = float(np.abs(new - p).max())
        p = new
        if cfg.track_likelihood:
            ll = float(data[observed] @ np.log(projected[observed]))
            if history and ll < history[-1] - 1e-10:
                raise AssertionError(f"log-likelihood decreased at iteration {it}")
            history.append(ll)
        if change < cfg.tol:
            return MarginalDist(p, 0.0, PHOTON), EmResult(True, it, change, history)
    return MarginalDist(p, 0.0, PHOTON), EmResult(False, cfg.max_iters, change, history)


def conditional_histogram(h: JointHistogram, c_s: int) -> MarginalDist:
    """Idler photocount distribution conditioned on a signal column."""
    if not 0 <= c_s < h.counts.shape[0]:
        raise InvalidParameterError(f"column {c_s} outside histogram")
    column = h.counts[c_s, :]
    total = column.sum()
    if total == 0:
        raise EmptyConditionError(f"no events with {c_s} signal clicks")
    return MarginalDist(column / total, 0.0, PHOTOCOUNT)
