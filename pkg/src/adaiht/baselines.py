"""Comparison estimators: classical top-s IHT, ISTA for the Lasso, oracle LS."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import _check_dims
from .model import DesignMatrix
from .sharp import oracle_least_squares
from .thresholding import soft_threshold, top_s_threshold

__all__ = ["BaselineResult", "iht_top_s", "ista_lasso", "oracle_ls", "spectral_norm_sq",
           "default_lasso_penalty", "lasso_objective"]


@dataclass
class BaselineResult:
    name: str
    beta_hat: np.ndarray
    iterations_used: int
    converged: bool
    history: list = field(default_factory=list)


def iht_top_s(design: DesignMatrix, y, s: int, iters: int) -> BaselineResult:
    """Classical IHT: gradient step then keep the ``s`` largest entries."""
    y = np.asarray(y, dtype=float).ravel()
    _check_dims(design, y, None)
    if iters < 0:
        raise ValueError("iters must be nonnegative")
    X, sq = design.values, design.sq_max_col_norm
    beta = np.zeros(design.p)
    converged = False
    for _ in range(iters):
        new = top_s_threshold(beta + X.T @ (y - X @ beta) / sq, s)
        converged = np.array_equal(new, beta)
        beta = new
    return BaselineResult("iht_top_s", beta, iters, converged)


def spectral_norm_sq(design: DesignMatrix, iters: int = 100, seed: int = 0) -> float:
    """Power-iteration estimate of ``||X||_op^2``, inflated by 1% for safety."""
    X = design.values
    v = np.random.default_rng(seed).standard_normal(design.p)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = X.T @ (X @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        est, v = nw, w / nw
    return 1.01 * float(est)


def default_lasso_penalty(sigma: float, n: int, p: int) -> float:
    """``2 sigma sqrt(2 n log p)`` on the ``||y - X b||^2 / 2 + lam ||b||_1`` scale."""
    return 2 * sigma * math.sqrt(2 * n * math.log(p))


def lasso_objective(design: DesignMatrix, y, beta, lambda_l1: float) -> float:
    r = np.asarray(y, dtype=float) - design.values @ beta
    return 0.5 * float(r @ r) + lambda_l1 * float(np.abs(beta).sum())


def ista_lasso(design: DesignMatrix, y, lambda_l1: float, iters: int = 1000, tol: float = 1e-10,
               step: str = "max_col_norm", record_objective: bool = False) -> BaselineResult:
    """Proximal gradient for ``||y - X b||^2 / 2 + lambda_l1 ||b||_1``.

    ``step='max_col_norm'`` uses ``1 / ||X||_{2,inf}^2`` like the IHT
    gradient map; ``step='spectral'`` uses ``1 / ||X||_op^2`` from power
    iteration, which guarantees descent.  Stops when the relative iterate
    change falls below ``tol``.
    """
    if lambda_l1 < 0:
        raise ValueError("lambda_l1 must be nonnegative")
    y = np.asarray(y, dtype=float).ravel()
    _check_dims(design, y, None)
    if step == "max_col_norm":
        L = design.sq_max_col_norm
    elif step == "spectral":
        L = spectral_norm_sq(design)
    else:
        raise ValueError(f"unknown step rule {step!r}")
    X = design.values
    beta = np.zeros(design.p)
    history = [lasso_objective(design, y, beta, lambda_l1)] if record_objective else []
    converged, used = False, 0
    for used in range(1, iters + 1):
        new = soft_threshold(beta + X.T @ (y - X @ beta) / L, lambda_l1 / L)
        change = np.linalg.norm(new - beta)
        beta = new
        if record_objective:
            history.append(lasso_objective(design, y, beta, lambda_l1))
        if change <= tol * max(np.linalg.norm(beta), 1.0):
            converged = True
            break
    return BaselineResult("ista_lasso", beta, used, converged, history)


def oracle_ls(design: DesignMatrix, y, support) -> BaselineResult:
    return BaselineResult("oracle_ls", oracle_least_squares(design, y, support), 0, True)
