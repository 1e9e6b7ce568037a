"""Threshold operators and threshold-value formulas.

All logarithms are natural.  Order statistics are taken on absolute
values, largest first.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ThresholdSchedule",
    "hard_threshold",
    "top_s_threshold",
    "soft_threshold",
    "schedule_value",
    "initial_threshold_oracle",
    "universal_threshold",
    "adaptive_initial_threshold",
    "adaptive_floor",
]


def _check_s(s: int, p: int) -> None:
    if not 1 <= s <= p:
        raise ValueError(f"need 1 <= s <= p, got s={s}, p={p}")


def hard_threshold(u, lam: float) -> np.ndarray:
    """Keep ``u_j`` where ``|u_j| >= lam``; zero elsewhere (ties kept)."""
    u = np.asarray(u, dtype=float)
    if lam < 0:
        raise ValueError("threshold must be nonnegative")
    return np.where(np.abs(u) >= lam, u, 0.0)


def top_s_threshold(u, s: int) -> np.ndarray:
    """Keep the ``s`` entries of largest magnitude.

    Ties are broken toward the smallest index; zero entries never survive,
    so the output has ``min(s, nnz(u))`` nonzeros.
    """
    u = np.asarray(u, dtype=float)
    _check_s(s, u.size)
    # stable sort on -|u| puts equal magnitudes in index order
    order = np.argsort(-np.abs(u), kind="stable")[:s]
    out = np.zeros_like(u)
    out[order] = u[order]
    return out


def soft_threshold(u, lam: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if lam < 0:
        raise ValueError("threshold must be nonnegative")
    return np.sign(u) * np.maximum(np.abs(u) - lam, 0.0)


@dataclass(frozen=True)
class ThresholdSchedule:
    """Geometric threshold sequence ``kappa^{m/2} lambda0`` with a floor.

    In ``fixed_floor`` mode the floor is ``lambda_inf`` at every step; in
    ``adaptive_floor`` mode the caller passes the floor for each step.
    """

    lambda0: float
    lambda_inf: float = 0.0
    kappa: float = 0.25
    mode: str = "fixed_floor"

    def __post_init__(self):
        if not 0 < self.kappa < 1:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.lambda0 < 0 or self.lambda_inf < 0:
            raise ValueError("thresholds must be nonnegative")
        if self.mode not in ("fixed_floor", "adaptive_floor"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")

    def geometric(self, m: int) -> float:
        return self.kappa ** (m / 2) * self.lambda0

    def value(self, m: int, floor: float | None = None) -> float:
        return schedule_value(self, m, floor)


def schedule_value(schedule: ThresholdSchedule, m: int, adaptive_floor_value: float | None = None) -> float:
    if m < 0:
        raise ValueError("step index must be nonnegative")
    if schedule.mode == "adaptive_floor":
        if adaptive_floor_value is None:
            raise ValueError("adaptive_floor schedule needs a floor value for every step")
        floor = adaptive_floor_value
    else:
        floor = schedule.lambda_inf
    return max(schedule.geometric(m), floor)


def _top_s_sq_sum(M: np.ndarray, s: int) -> float:
    sq = np.sort(np.asarray(M, dtype=float) ** 2)[::-1]
    return float(sq[:s].sum())


def initial_threshold_oracle(M, s: int, sigma: float, max_col_norm: float, p: int) -> float:
    """Initial threshold when ``s`` and ``sigma`` are known."""
    _check_s(s, p)
    signal_part = math.sqrt(10 * _top_s_sq_sum(M, s) / s)
    noise_part = sigma / max_col_norm * math.sqrt(40 * math.log(math.e * p / s))
    return max(signal_part, noise_part)


def universal_threshold(s: int, sigma: float, max_col_norm: float, p: int) -> float:
    _check_s(s, p)
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return sigma * math.sqrt(40 * math.log(math.e * p / s)) / max_col_norm


def adaptive_floor(sigma_hat: float, max_col_norm: float, p: int) -> float:
    """Noise floor ``sigma_hat sqrt(160 log(e p)) / ||X||_{2,inf}``."""
    return sigma_hat / max_col_norm * math.sqrt(160 * math.log(math.e * p))


def adaptive_initial_threshold(M, sigma_hat0: float, max_col_norm: float, p: int) -> float:
    """Initial threshold that needs neither ``s`` nor ``sigma``."""
    if p < 1:
        raise ValueError("p must be positive")
    if sigma_hat0 < 0:
        raise ValueError("sigma_hat0 must be nonnegative")
    M = np.asarray(M, dtype=float)
    top = float(np.max(np.abs(M))) if M.size else 0.0
    return max(math.sqrt(20) * top, adaptive_floor(sigma_hat0, max_col_norm, p))
