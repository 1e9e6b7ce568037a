"""Gradient map, single IHT step and the known-(s, sigma) IHT pipeline.

Every run produces an :class:`IterateTrace` holding one record per iterate,
starting from the zero vector.  Iterates are kept dense while running and
stored sparse in the trace.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .exceptions import DimensionError
from .model import DesignMatrix, SparseVector, scaled_correlation
from .thresholding import (ThresholdSchedule, hard_threshold, initial_threshold_oracle,
                           schedule_value, universal_threshold)

__all__ = [
    "IterateRecord",
    "IterateTrace",
    "gradient_map",
    "iht_step",
    "stopping_time_oracle",
    "run_nonadaptive",
    "TRACE_CSV_COLUMNS",
]

TRACE_CSV_COLUMNS = ("replication", "m", "lambda_m", "l2_error_sq", "off_support_count",
                     "nnz", "sigma_hat", "residual_norm_sq")

DEFAULT_MAX_ITER = 10_000
NOISELESS_DECADES = 12


@dataclass
class IterateRecord:
    m: int
    lambda_m: float
    beta_hat: SparseVector
    residual_norm_sq: float
    sigma_hat: float | None = None
    l2_error_sq: float | None = None
    off_support_count: int | None = None

    @property
    def nnz(self) -> int:
        return self.beta_hat.nnz


@dataclass
class IterateTrace:
    """Iterates of one run plus the index of the returned estimate."""

    iterates: list[IterateRecord] = field(default_factory=list)
    stop_index: int = 0
    stop_reason: str = "floor_hit"
    flags: set[str] = field(default_factory=set)
    info: dict = field(default_factory=dict)
    selection: list = field(default_factory=list)

    @property
    def final(self) -> IterateRecord:
        return self.iterates[self.stop_index]

    @property
    def beta_hat(self) -> np.ndarray:
        return self.final.beta_hat.to_dense()

    def beta(self, m: int) -> np.ndarray:
        return self.iterates[m].beta_hat.to_dense()

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([r.lambda_m for r in self.iterates])

    @property
    def n_iter(self) -> int:
        return self.stop_index

    def csv_rows(self, replication: int = 0) -> list[dict]:
        rows = []
        for r in self.iterates:
            rows.append({
                "replication": replication,
                "m": r.m,
                "lambda_m": repr(float(r.lambda_m)),
                "l2_error_sq": "" if r.l2_error_sq is None else repr(float(r.l2_error_sq)),
                "off_support_count": "" if r.off_support_count is None else r.off_support_count,
                "nnz": r.nnz,
                "sigma_hat": "" if r.sigma_hat is None else repr(float(r.sigma_hat)),
                "residual_norm_sq": repr(float(r.residual_norm_sq)),
            })
        return rows

    def write_csv(self, fh, replication: int = 0) -> None:
        """Write the iterate table, then selection records if any."""
        writer = csv.DictWriter(fh, fieldnames=TRACE_CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.csv_rows(replication))
        if self.selection:
            fh.write("\n")
            sel = csv.writer(fh, lineterminator="\n")
            sel.writerow(["m", "criterion_value", "nnz"])
            for rec in self.selection:
                sel.writerow([rec.m, repr(float(rec.criterion_value)), rec.nnz])


def _check_dims(design: DesignMatrix, y: np.ndarray, beta) -> None:
    if y.shape != (design.n,):
        raise DimensionError(f"y has shape {y.shape}, design has n={design.n}")
    if beta is not None and np.shape(beta) != (design.p,):
        raise DimensionError(f"vector has shape {np.shape(beta)}, design has p={design.p}")


def gradient_map(design: DesignMatrix, y, beta_prev) -> np.ndarray:
    """One unthresholded gradient step with step size ``1 / ||X||_{2,inf}^2``.

    Two matrix-vector products; ``X^T X`` is never formed.
    """
    y = np.asarray(y, dtype=float).ravel()
    beta_prev = np.asarray(beta_prev, dtype=float)
    _check_dims(design, y, beta_prev)
    X = design.values
    residual = y - X @ beta_prev
    return beta_prev + (X.T @ residual) / design.sq_max_col_norm


def iht_step(design: DesignMatrix, y, beta_prev, lam: float) -> np.ndarray:
    return hard_threshold(gradient_map(design, y, beta_prev), lam)


def stopping_time_oracle(lambda0_hat: float, sigma: float, max_col_norm: float, p: int, s: int,
                         kappa: float) -> int:
    """Number of steps until the geometric threshold reaches the universal one."""
    if sigma <= 0:
        raise ValueError("stopping time needs sigma > 0")
    if not 1 <= s <= p:
        raise ValueError(f"need 1 <= s <= p, got s={s}, p={p}")
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    arg = lambda0_hat ** 2 * max_col_norm ** 2 / (40 * sigma ** 2 * math.log(math.e * p / s))
    if arg <= 0:
        return 1
    x = 2 * math.log(arg) / math.log(1 / kappa)
    # absorb log round-off so exact powers of kappa land on the integer
    steps = math.floor(x + 1e-9) + 1
    return max(steps, 1)


class _Tracker:
    """Builds IterateRecords, reusing each iterate's residual for the next step."""

    def __init__(self, design: DesignMatrix, y: np.ndarray, beta_true=None):
        self.design = design
        self.y = y
        self.X = design.values
        self.sq = design.sq_max_col_norm
        if beta_true is not None:
            if isinstance(beta_true, SparseVector):
                beta_true = beta_true.to_dense()
            beta_true = np.asarray(beta_true, dtype=float)
            _check_dims(design, y, beta_true)
            self.off_support = beta_true == 0
        self.beta_true = beta_true

    def residual(self, beta: np.ndarray) -> np.ndarray:
        return self.y - self.X @ beta

    def step(self, beta: np.ndarray, residual: np.ndarray, lam: float) -> np.ndarray:
        return hard_threshold(beta + (self.X.T @ residual) / self.sq, lam)

    def record(self, m: int, lam: float, beta: np.ndarray, residual: np.ndarray) -> IterateRecord:
        rss = float(residual @ residual)
        rec = IterateRecord(m=m, lambda_m=float(lam), beta_hat=SparseVector.from_dense(beta),
                            residual_norm_sq=rss, sigma_hat=math.sqrt(rss / self.design.n))
        if self.beta_true is not None:
            diff = beta - self.beta_true
            rec.l2_error_sq = float(diff @ diff)
            rec.off_support_count = int(np.count_nonzero(beta[self.off_support]))
        return rec


def _run_thresholds(tracker: _Tracker, lambdas: Iterable[float], beta0: np.ndarray,
                    lambda_at_start: float) -> tuple[list[IterateRecord], np.ndarray]:
    beta = beta0
    residual = tracker.residual(beta)
    records = [tracker.record(0, lambda_at_start, beta, residual)]
    for m, lam in enumerate(lambdas, start=1):
        beta = tracker.step(beta, residual, lam)
        residual = tracker.residual(beta)
        records.append(tracker.record(m, lam, beta, residual))
    return records, beta


def run_nonadaptive(design: DesignMatrix, y, s: int, sigma: float, kappa: float = 0.25,
                    max_iter: int = DEFAULT_MAX_ITER, beta_true=None,
                    lambda0: float | None = None) -> IterateTrace:
    """IHT with the geometric schedule tuned by the true ``s`` and ``sigma``.

    Runs exactly ``m_hat`` thresholded gradient steps from zero, or stops
    at ``max_iter`` (flagged).  With ``sigma == 0`` there is no statistical
    floor; the run stops once the geometric threshold has decayed by a
    factor ``10**NOISELESS_DECADES``.
    ``beta_true`` only feeds the error columns of the trace.
    """
    y = np.asarray(y, dtype=float).ravel()
    _check_dims(design, y, None)
    p = design.p
    if not 1 <= s <= p:
        raise ValueError(f"need 1 <= s <= p, got s={s}, p={p}")
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    M = scaled_correlation(design, y)
    lam0 = initial_threshold_oracle(M, s, sigma, design.max_col_norm, p) if lambda0 is None else float(lambda0)
    lam_inf = universal_threshold(s, sigma, design.max_col_norm, p)
    schedule = ThresholdSchedule(lam0, lam_inf, kappa)
    trace = IterateTrace(info={"lambda0": lam0, "lambda_inf": lam_inf, "kappa": kappa})
    tracker = _Tracker(design, y, beta_true)
    if lambda0 is not None:
        bt = tracker.beta_true
        if bt is None or np.linalg.norm(bt) > math.sqrt(s) * lam0:
            trace.flags.add("precondition_unverified")

    if sigma > 0:
        m_hat = stopping_time_oracle(lam0, sigma, design.max_col_norm, p, s, kappa)
    else:
        # no statistical floor: stop once the geometric term has decayed by
        # NOISELESS_DECADES orders of magnitude
        m_hat = max(1, math.ceil(2 * NOISELESS_DECADES * math.log(10) / math.log(1 / kappa)))
    trace.info["m_hat"] = m_hat
    steps = min(m_hat, max_iter)
    lambdas = [schedule_value(schedule, m) for m in range(1, steps + 1)]
    trace.iterates, _ = _run_thresholds(tracker, lambdas, np.zeros(p), schedule_value(schedule, 0))
    trace.stop_index = steps
    if steps < m_hat:
        trace.stop_reason = "max_iter"
        trace.flags.add("max_iter")
    return trace
