"""IHT procedures that need neither the sparsity nor the noise level.

Two variants share the same adaptive initial threshold:

* early stopping: the geometric schedule runs against a noise floor
  estimated from the current residual and stops one step after it meets it;
* iteration selection: the pure geometric schedule is run down to a small
  multiple of the estimated noise level and the iterate minimizing a
  penalized residual criterion is returned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import DEFAULT_MAX_ITER, IterateTrace, _check_dims, _Tracker
from .model import DesignMatrix, scaled_correlation
from .thresholding import ThresholdSchedule, adaptive_floor, adaptive_initial_threshold, schedule_value

__all__ = [
    "SelectionRecord",
    "sigma_hat",
    "run_early_stopping",
    "selection_criterion",
    "run_iteration_selection",
]

DEFAULT_PENALTY = 10.0


@dataclass(frozen=True)
class SelectionRecord:
    m: int
    criterion_value: float
    nnz: int
    residual_norm_sq: float


def sigma_hat(y, design: DesignMatrix, beta_hat) -> float:
    """Root mean squared residual ``||y - X beta_hat|| / sqrt(n)``."""
    y = np.asarray(y, dtype=float).ravel()
    beta_hat = np.asarray(beta_hat, dtype=float)
    _check_dims(design, y, beta_hat)
    r = y - design.values @ beta_hat
    return math.sqrt(float(r @ r) / design.n)


def _penalty(k: int, n: int, p: int, sigma_ref: float, penalty_const: float) -> float:
    if k == 0:
        return 0.0
    return penalty_const * sigma_ref ** 2 * k * math.log(math.e * p / k) / n


def selection_criterion(y, design: DesignMatrix, beta_hat, sigma_hat_ref: float,
                        penalty_const: float = DEFAULT_PENALTY) -> float:
    """Mean squared residual plus ``c sigma^2 k log(e p / k) / n``, ``k = nnz``."""
    if penalty_const <= 0:
        raise ValueError("penalty_const must be positive")
    y = np.asarray(y, dtype=float).ravel()
    beta_hat = np.asarray(beta_hat, dtype=float)
    _check_dims(design, y, beta_hat)
    r = y - design.values @ beta_hat
    k = int(np.count_nonzero(beta_hat))
    return float(r @ r) / design.n + _penalty(k, design.n, design.p, sigma_hat_ref, penalty_const)


def _start(design: DesignMatrix, y: np.ndarray):
    M = scaled_correlation(design, y)
    s0 = math.sqrt(float(y @ y) / design.n)
    lam0 = adaptive_initial_threshold(M, s0, design.max_col_norm, design.p)
    return s0, lam0


def run_early_stopping(design: DesignMatrix, y, kappa: float = 0.25,
                       max_iter: int = DEFAULT_MAX_ITER, beta_true=None) -> IterateTrace:
    """Adaptive early stopping.

    At step ``m`` the threshold is ``max(kappa^{m/2} lambda0, floor)``, where
    the floor uses the noise estimate of the last completed iterate.  After
    computing iterate ``m`` its own noise estimate is formed; the first ``m``
    whose geometric term does not exceed that floor triggers one final step,
    and iterate ``m + 1`` is returned (``trace.info['m_bar']``).
    """
    y = np.asarray(y, dtype=float).ravel()
    _check_dims(design, y, None)
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    norm, p = design.max_col_norm, design.p
    sigma0, lam0 = _start(design, y)
    schedule = ThresholdSchedule(lam0, 0.0, kappa, mode="adaptive_floor")
    tracker = _Tracker(design, y, beta_true)

    beta = np.zeros(p)
    residual = tracker.residual(beta)
    floor = adaptive_floor(sigma0, norm, p)
    trace = IterateTrace(info={"lambda0": lam0, "sigma_hat0": sigma0, "kappa": kappa})
    trace.iterates.append(tracker.record(0, schedule_value(schedule, 0, floor), beta, residual))
    floors, geometric = [floor], [schedule.geometric(0)]

    fired = schedule.geometric(0) <= floor
    m = 0
    while not fired and m < max_iter:
        m += 1
        lam = schedule_value(schedule, m, floor)
        beta = tracker.step(beta, residual, lam)
        residual = tracker.residual(beta)
        rec = tracker.record(m, lam, beta, residual)
        trace.iterates.append(rec)
        floor = adaptive_floor(rec.sigma_hat, norm, p)
        floors.append(floor)
        geometric.append(schedule.geometric(m))
        fired = schedule.geometric(m) <= floor

    if fired and m < max_iter:
        m += 1
        lam = schedule_value(schedule, m, floor)
        beta = tracker.step(beta, residual, lam)
        residual = tracker.residual(beta)
        rec = tracker.record(m, lam, beta, residual)
        trace.iterates.append(rec)
        floors.append(adaptive_floor(rec.sigma_hat, norm, p))
        geometric.append(schedule.geometric(m))
    else:
        trace.stop_reason = "max_iter"
        trace.flags.add("max_iter")
    trace.stop_index = m
    trace.info.update(m_bar=m, floors=floors, geometric=geometric,
                      sigma_hat_mbar=trace.iterates[m].sigma_hat)
    return trace


def _first_below(lam0: float, kappa: float, level: float, cap: int) -> tuple[int, bool]:
    """Smallest ``m`` with ``kappa^{m/2} lam0 <= level``, capped at ``cap``."""
    m = 0
    while kappa ** (m / 2) * lam0 > level:
        if m >= cap:
            return cap, False
        m += 1
    return m, True


def run_iteration_selection(design: DesignMatrix, y, kappa: float = 0.25,
                            penalty_const: float = DEFAULT_PENALTY,
                            max_iter: int = DEFAULT_MAX_ITER,
                            beta_true=None) -> tuple[IterateTrace, int, int]:
    """Penalized selection over the geometric iterate path.

    Returns ``(trace, m_tilde, T_hat)``.  The noise level in the penalty and
    in the search horizon ``T_hat`` comes from an early-stopping run.  The
    iterates form one warm-started chain; the selected index is the
    smallest minimizer over ``m = 1..T_hat`` (``0`` when ``T_hat == 0``).
    """
    if penalty_const <= 0:
        raise ValueError("penalty_const must be positive")
    y = np.asarray(y, dtype=float).ravel()
    es = run_early_stopping(design, y, kappa, max_iter, beta_true)
    sigma_ref = es.info["sigma_hat_mbar"]
    lam0 = es.info["lambda0"]
    T_hat, reached = _first_below(lam0, kappa, 4 * sigma_ref / design.max_col_norm, max_iter)

    tracker = _Tracker(design, y, beta_true)
    schedule = ThresholdSchedule(lam0, 0.0, kappa)
    beta = np.zeros(design.p)
    residual = tracker.residual(beta)
    trace = IterateTrace(stop_reason="selection",
                         info={"lambda0": lam0, "kappa": kappa, "sigma_hat_ref": sigma_ref,
                               "m_bar": es.info["m_bar"], "T_hat": T_hat,
                               "penalty_const": penalty_const})
    trace.iterates.append(tracker.record(0, lam0, beta, residual))
    for m in range(1, T_hat + 1):
        lam = schedule_value(schedule, m)
        beta = tracker.step(beta, residual, lam)
        residual = tracker.residual(beta)
        trace.iterates.append(tracker.record(m, lam, beta, residual))
    if not reached or "max_iter" in es.flags:
        trace.flags.add("max_iter")

    n, p = design.n, design.p
    candidates = range(1, T_hat + 1) if T_hat >= 1 else range(0, 1)
    for m in candidates:
        rec = trace.iterates[m]
        value = rec.residual_norm_sq / n + _penalty(rec.nnz, n, p, sigma_ref, penalty_const)
        trace.selection.append(SelectionRecord(m, value, rec.nnz, rec.residual_norm_sq))
    values = np.array([r.criterion_value for r in trace.selection])
    m_tilde = trace.selection[int(np.argmin(values))].m
    trace.stop_index = m_tilde
    trace.info["m_tilde"] = m_tilde
    return trace, m_tilde, T_hat
