"""Fixed-threshold refinement stage and support recovery.

A minimax-accurate, sparse warm start (by default the iteration-selection
estimate) is refined by IHT at a constant threshold.  With the estimation
threshold the error approaches ``2 sigma^2 s log(ep/s)`` below the
separation level and the oracle ``sigma^2 s`` above it; with the recovery
threshold the iterates converge to the least-squares fit on the true
support.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .adaptive import DEFAULT_PENALTY, run_iteration_selection
from .engine import DEFAULT_MAX_ITER, IterateTrace, _check_dims, _run_thresholds, _Tracker
from .exceptions import DimensionError, SingularSupportError
from .model import DesignMatrix

__all__ = [
    "SupportPattern",
    "sharp_threshold",
    "recovery_threshold",
    "run_fixed_threshold",
    "oracle_least_squares",
    "support_decoder",
    "hamming_error",
    "default_sharp_steps",
    "run_sharp",
]


@dataclass(frozen=True, eq=False)
class SupportPattern:
    """Binary support indicator of length ``dim``."""

    dim: int
    indicator: np.ndarray

    def __post_init__(self):
        ind = np.asarray(self.indicator).astype(np.int8).ravel()
        if ind.size != self.dim:
            raise DimensionError(f"indicator has length {ind.size}, expected {self.dim}")
        if np.any((ind != 0) & (ind != 1)):
            raise ValueError("indicator entries must be 0 or 1")
        ind.setflags(write=False)
        object.__setattr__(self, "indicator", ind)

    @property
    def popcount(self) -> int:
        return int(self.indicator.sum())

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.indicator)


def sharp_threshold(epsilon: float, sigma: float, max_col_norm: float, p: int, s: int) -> float:
    """Estimation threshold ``(1 + sqrt(eps)) sigma sqrt(2 log(ep/s)) / ||X||_{2,inf}``."""
    if not 0 <= epsilon < 1:
        raise ValueError("epsilon must lie in [0, 1)")
    if not 1 <= s <= p:
        raise ValueError(f"need 1 <= s <= p, got s={s}, p={p}")
    return (1 + math.sqrt(epsilon)) * sigma * math.sqrt(2 * math.log(math.e * p / s)) / max_col_norm


def recovery_threshold(epsilon: float, sigma: float, max_col_norm: float, p: int) -> float:
    """Support-recovery threshold ``(1 + sqrt(eps)) sigma sqrt(2 log p) / ||X||_{2,inf}``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if p < 2:
        raise ValueError("recovery threshold needs p >= 2")
    return (1 + math.sqrt(epsilon)) * sigma * math.sqrt(2 * math.log(p)) / max_col_norm


def run_fixed_threshold(design: DesignMatrix, y, beta_init, lam: float, m_steps: int,
                        beta_true=None) -> IterateTrace:
    """``m_steps`` IHT steps at constant threshold ``lam`` from ``beta_init``."""
    if lam < 0:
        raise ValueError("threshold must be nonnegative")
    if m_steps < 0:
        raise ValueError("m_steps must be nonnegative")
    y = np.asarray(y, dtype=float).ravel()
    beta_init = np.array(beta_init, dtype=float)
    _check_dims(design, y, beta_init)
    tracker = _Tracker(design, y, beta_true)
    records, _ = _run_thresholds(tracker, [lam] * m_steps, beta_init, lam)
    return IterateTrace(iterates=records, stop_index=m_steps, stop_reason="floor_hit",
                        info={"lambda": lam, "m_steps": m_steps})


def oracle_least_squares(design: DesignMatrix, y, support) -> np.ndarray:
    """Least squares restricted to ``support``; zero elsewhere."""
    y = np.asarray(y, dtype=float).ravel()
    _check_dims(design, y, None)
    if isinstance(support, SupportPattern):
        support = support.support
    support = np.unique(np.asarray(support, dtype=np.int64))
    out = np.zeros(design.p)
    if support.size == 0:
        return out
    if support.size > design.n:
        raise SingularSupportError(f"support of size {support.size} exceeds n={design.n}")
    XS = design.values[:, support]
    try:
        factor = scipy.linalg.cho_factor(XS.T @ XS)
    except np.linalg.LinAlgError as exc:
        raise SingularSupportError("Gram block on the support is singular") from exc
    out[support] = scipy.linalg.cho_solve(factor, XS.T @ y)
    return out


def support_decoder(beta_hat) -> SupportPattern:
    beta_hat = np.asarray(beta_hat, dtype=float).ravel()
    return SupportPattern(beta_hat.size, (beta_hat != 0).astype(np.int8))


def hamming_error(eta_hat, eta) -> int:
    a = eta_hat.indicator if isinstance(eta_hat, SupportPattern) else np.asarray(eta_hat)
    b = eta.indicator if isinstance(eta, SupportPattern) else np.asarray(eta)
    if a.shape != b.shape:
        raise DimensionError(f"patterns differ in length: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def default_sharp_steps(mode: str, s: int, p: int) -> int:
    """``ceil(log log(ep/s))`` for estimation, ``ceil(log s)`` for recovery; at least 1."""
    if mode == "estimation":
        steps = math.ceil(math.log(math.log(math.e * p / s)))
    elif mode == "recovery":
        steps = math.ceil(math.log(s)) if s > 1 else 0
    else:
        raise ValueError(f"unknown sharp mode {mode!r}")
    return max(steps, 1)


def run_sharp(design: DesignMatrix, y, epsilon: float = 0.25, mode: str = "estimation",
              s: int | None = None, sigma: float | None = None, m_steps: int | None = None,
              kappa: float = 0.25, penalty_const: float = DEFAULT_PENALTY,
              warm_start=None, max_iter: int = DEFAULT_MAX_ITER,
              beta_true=None) -> tuple[IterateTrace, IterateTrace | None]:
    """Warm start plus fixed-threshold refinement.

    Without ``warm_start`` the iteration-selection estimate is used.  With
    ``sigma=None`` the noise level is replaced by the residual RMS of the
    warm start.  With ``s=None`` the estimation threshold uses ``log(ep)``
    and the recovery step count uses the warm start's sparsity.

    Returns ``(refinement_trace, warm_start_trace)``; the second item is
    ``None`` when a warm start was supplied.
    """
    y = np.asarray(y, dtype=float).ravel()
    warm_trace = None
    if warm_start is None:
        warm_trace, _, _ = run_iteration_selection(design, y, kappa, penalty_const, max_iter, beta_true)
        beta0 = warm_trace.beta_hat
    else:
        beta0 = np.asarray(warm_start, dtype=float)
    if sigma is None:
        r = y - design.values @ beta0
        sigma = math.sqrt(float(r @ r) / design.n)
    s_eff = s if s is not None else max(1, int(np.count_nonzero(beta0)))
    if mode == "estimation":
        lam = sharp_threshold(epsilon, sigma, design.max_col_norm, design.p, s if s is not None else 1)
    elif mode == "recovery":
        lam = recovery_threshold(epsilon, sigma, design.max_col_norm, design.p)
    else:
        raise ValueError(f"unknown sharp mode {mode!r}")
    if m_steps is None:
        m_steps = default_sharp_steps(mode, s_eff, design.p)
    trace = run_fixed_threshold(design, y, beta0, lam, m_steps, beta_true)
    trace.info.update(mode=mode, epsilon=epsilon, sigma_used=sigma)
    return trace, warm_trace
