"""scikit-learn compatible wrappers around the IHT procedures.

All estimators fit the no-intercept model ``y = X beta + noise``; center
the data beforehand (or use a pipeline) if an intercept is needed.  The
fitted coefficient vector is ``coef_`` and the iterate history of the run
is kept in ``trace_``.

Example
-------
>>> from adaiht import IterationSelectionIHT
>>> model = IterationSelectionIHT(kappa=0.25).fit(X, y)      # doctest: +SKIP
>>> model.coef_, model.selected_iteration_                   # doctest: +SKIP
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .adaptive import DEFAULT_PENALTY, run_early_stopping, run_iteration_selection
from .baselines import default_lasso_penalty, ista_lasso, iht_top_s
from .engine import DEFAULT_MAX_ITER, run_nonadaptive
from .model import DesignMatrix
from .sharp import run_sharp

__all__ = [
    "ScheduledIHT",
    "EarlyStoppingIHT",
    "IterationSelectionIHT",
    "SharpIHT",
    "TopSIHT",
    "IstaLasso",
]


class _SparseLinearRegressor(RegressorMixin, BaseEstimator):
    """Shared validation, prediction and fitted-attribute bookkeeping."""

    def _validate_data_xy(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        return DesignMatrix.from_array(X), y

    def _set_coef(self, coef, n_iter):
        self.coef_ = np.asarray(coef, dtype=float)
        self.intercept_ = 0.0
        self.support_ = np.flatnonzero(self.coef_)
        self.n_iter_ = int(n_iter)

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, but {type(self).__name__} is expecting "
                             f"{self.n_features_in_} features as input.")
        return X @ self.coef_


class ScheduledIHT(_SparseLinearRegressor):
    """IHT with the geometric schedule tuned by known ``sparsity`` and ``sigma``.

    Parameters
    ----------
    sparsity : int
        Upper bound on the number of nonzero coefficients.
    sigma : float
        Noise standard deviation.
    kappa : float, default=0.25
        Squared ratio between consecutive thresholds, in (0, 1).
    max_iter : int, default=10000
    """

    def __init__(self, sparsity=1, sigma=1.0, kappa=0.25, max_iter=DEFAULT_MAX_ITER):
        self.sparsity = sparsity
        self.sigma = sigma
        self.kappa = kappa
        self.max_iter = max_iter

    def fit(self, X, y):
        design, y = self._validate_data_xy(X, y)
        self.trace_ = run_nonadaptive(design, y, self.sparsity, self.sigma, self.kappa, self.max_iter)
        self._set_coef(self.trace_.beta_hat, self.trace_.stop_index)
        self.stopping_time_ = self.trace_.info["m_hat"]
        return self


class EarlyStoppingIHT(_SparseLinearRegressor):
    """Adaptive IHT that stops once the threshold meets the estimated noise floor."""

    def __init__(self, kappa=0.25, max_iter=DEFAULT_MAX_ITER):
        self.kappa = kappa
        self.max_iter = max_iter

    def fit(self, X, y):
        design, y = self._validate_data_xy(X, y)
        self.trace_ = run_early_stopping(design, y, self.kappa, self.max_iter)
        self._set_coef(self.trace_.beta_hat, self.trace_.stop_index)
        self.sigma_hat_ = self.trace_.info["sigma_hat_mbar"]
        return self


class IterationSelectionIHT(_SparseLinearRegressor):
    """Adaptive IHT returning the iterate with the smallest penalized residual."""

    def __init__(self, kappa=0.25, penalty_const=DEFAULT_PENALTY, max_iter=DEFAULT_MAX_ITER):
        self.kappa = kappa
        self.penalty_const = penalty_const
        self.max_iter = max_iter

    def fit(self, X, y):
        design, y = self._validate_data_xy(X, y)
        trace, m_tilde, T_hat = run_iteration_selection(design, y, self.kappa, self.penalty_const,
                                                        self.max_iter)
        self.trace_ = trace
        self.selected_iteration_ = m_tilde
        self.search_horizon_ = T_hat
        self.sigma_hat_ = trace.info["sigma_hat_ref"]
        self._set_coef(trace.beta_hat, T_hat + trace.info["m_bar"])
        return self


class SharpIHT(_SparseLinearRegressor):
    """Fixed-threshold IHT refinement of the iteration-selection estimate.

    Parameters
    ----------
    epsilon : float, default=0.25
        Threshold inflation ``(1 + sqrt(epsilon))``.
    mode : {'estimation', 'recovery'}
        ``estimation`` thresholds at ``sqrt(2 log(ep/s))`` noise units,
        ``recovery`` at ``sqrt(2 log p)``.
    sparsity : int or None
        Known sparsity; ``None`` falls back to ``log(ep)`` in the threshold.
    sigma : float or None
        Known noise level; ``None`` uses the residual RMS of the warm start.
    m_steps : int or None
        Refinement steps; defaults depend on ``mode``.
    """

    def __init__(self, epsilon=0.25, mode="estimation", sparsity=None, sigma=None, m_steps=None,
                 kappa=0.25, penalty_const=DEFAULT_PENALTY, max_iter=DEFAULT_MAX_ITER):
        self.epsilon = epsilon
        self.mode = mode
        self.sparsity = sparsity
        self.sigma = sigma
        self.m_steps = m_steps
        self.kappa = kappa
        self.penalty_const = penalty_const
        self.max_iter = max_iter

    def fit(self, X, y):
        design, y = self._validate_data_xy(X, y)
        trace, warm = run_sharp(design, y, self.epsilon, self.mode, self.sparsity, self.sigma, self.m_steps,
                                self.kappa, self.penalty_const, max_iter=self.max_iter)
        self.trace_ = trace
        self.warm_start_trace_ = warm
        self.threshold_ = trace.info["lambda"]
        self._set_coef(trace.beta_hat, trace.stop_index)
        return self


class TopSIHT(_SparseLinearRegressor):
    """Classical IHT keeping the ``sparsity`` largest entries at every step."""

    def __init__(self, sparsity=1, n_iter=100):
        self.sparsity = sparsity
        self.n_iter = n_iter

    def fit(self, X, y):
        design, y = self._validate_data_xy(X, y)
        res = iht_top_s(design, y, self.sparsity, self.n_iter)
        self._set_coef(res.beta_hat, res.iterations_used)
        return self


class IstaLasso(_SparseLinearRegressor):
    """Lasso ``||y - X b||^2 / 2 + alpha ||b||_1`` by proximal gradient.

    ``alpha=None`` uses ``2 sigma sqrt(2 n log p)``, which needs ``sigma``.
    """

    def __init__(self, alpha=None, sigma=1.0, max_iter=1000, tol=1e-10, step="spectral"):
        self.alpha = alpha
        self.sigma = sigma
        self.max_iter = max_iter
        self.tol = tol
        self.step = step

    def fit(self, X, y):
        design, y = self._validate_data_xy(X, y)
        alpha = self.alpha
        if alpha is None:
            alpha = default_lasso_penalty(self.sigma, design.n, design.p)
        res = ista_lasso(design, y, alpha, self.max_iter, self.tol, self.step)
        self.alpha_ = alpha
        self.converged_ = res.converged
        self._set_coef(res.beta_hat, res.iterations_used)
        return self
