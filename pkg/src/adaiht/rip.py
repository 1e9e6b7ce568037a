"""Restricted eigenvalue audit of a design.

For a support size ``s`` the audit reports the extreme eigenvalues
``L_s = max_{|S|=s} lambda_max(X_S^T X_S)`` and
``m_s = min_{|S|=s} lambda_min(X_S^T X_S)`` and the ratio
``delta_s = 1 - m_s / L_s``.  Exact mode enumerates every support;
sampled mode looks at random supports and therefore only gives a lower
bound on ``delta_s``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import EnumerationBudgetError
from .model import DesignMatrix, generate_design, make_rng

__all__ = [
    "RipReport",
    "restricted_extremes_exact",
    "restricted_extremes_sampled",
    "contraction_check",
    "find_certified_design",
    "RIP_CSV_COLUMNS",
]

DEFAULT_BUDGET = 2_000_000
_CHUNK = 20_000
RIP_CSV_COLUMNS = ("s", "L_s", "m_s", "delta_s", "gamma_s", "method", "supports_examined", "worst_support")


@dataclass(frozen=True)
class RipReport:
    s: int
    L_s: float
    m_s: float
    delta_s: float
    method: str
    supports_examined: int
    max_support: tuple
    min_support: tuple

    @property
    def worst_support(self) -> tuple:
        """Support attaining the smallest restricted eigenvalue."""
        return self.min_support

    @property
    def gamma_s(self) -> float:
        return self.L_s / self.m_s if self.m_s > 0 else math.inf

    def csv_line(self) -> str:
        support = " ".join(str(i) for i in self.worst_support)
        return (f"{self.s},{self.L_s!r},{self.m_s!r},{self.delta_s!r},{self.gamma_s!r},"
                f"{self.method},{self.supports_examined},{support}")

    def summary(self) -> str:
        tag = "certified" if self.method == "exact" else "lower bound"
        return (f"s={self.s}: L_s={self.L_s:.6g}  m_s={self.m_s:.6g}  delta_s={self.delta_s:.6g} ({tag}, "
                f"{self.supports_examined} supports)")


def _check_size(design: DesignMatrix, s: int) -> None:
    if not 1 <= s <= min(design.n, design.p):
        raise ValueError(f"support size must lie in [1, min(n, p)] = [1, {min(design.n, design.p)}], got {s}")


def _block_extremes(gram: np.ndarray, combos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    blocks = gram[combos[:, :, None], combos[:, None, :]]
    eig = np.linalg.eigvalsh(blocks)
    return eig[:, -1], eig[:, 0]


class _Extremes:
    def __init__(self):
        self.L, self.m = -math.inf, math.inf
        self.max_support = self.min_support = ()
        self.count = 0

    def update(self, combos: np.ndarray, top: np.ndarray, bottom: np.ndarray) -> None:
        self.count += len(combos)
        i, j = int(np.argmax(top)), int(np.argmin(bottom))
        if top[i] > self.L:
            self.L, self.max_support = float(top[i]), tuple(int(k) for k in combos[i])
        if bottom[j] < self.m:
            self.m, self.min_support = float(bottom[j]), tuple(int(k) for k in combos[j])

    def report(self, s: int, method: str) -> RipReport:
        delta = 1 - self.m / self.L if self.L > 0 else 0.0
        return RipReport(s, self.L, self.m, delta, method, self.count, self.max_support, self.min_support)


def _gram(design: DesignMatrix) -> np.ndarray:
    X = design.values
    return X.T @ X


def restricted_extremes_exact(design: DesignMatrix, s: int, budget: int = DEFAULT_BUDGET) -> RipReport:
    """Enumerate every size-``s`` support in lexicographic order."""
    _check_size(design, s)
    total = math.comb(design.p, s)
    if total > budget:
        raise EnumerationBudgetError(
            f"C({design.p}, {s}) = {total} supports exceeds the budget {budget}; use restricted_extremes_sampled")
    gram = _gram(design)
    acc = _Extremes()
    combos_iter = itertools.combinations(range(design.p), s)
    while True:
        chunk = list(itertools.islice(combos_iter, _CHUNK))
        if not chunk:
            break
        combos = np.array(chunk, dtype=np.int64)
        acc.update(combos, *_block_extremes(gram, combos))
    return acc.report(s, "exact")


def restricted_extremes_sampled(design: DesignMatrix, s: int, trials: int, seed: int = 0) -> RipReport:
    """Extremes over ``trials`` uniformly drawn supports.

    ``L_s`` and ``m_s`` are inner bounds, so the reported ``delta_s`` never
    exceeds the exact one.
    """
    _check_size(design, s)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = make_rng(seed)
    gram = _gram(design)
    acc = _Extremes()
    done = 0
    while done < trials:
        k = min(_CHUNK, trials - done, max(1, 4_000_000 // design.p))
        keys = rng.random((k, design.p))
        combos = np.sort(np.argpartition(keys, s - 1, axis=1)[:, :s], axis=1)
        acc.update(combos, *_block_extremes(gram, combos))
        done += k
    return acc.report(s, "sampled")


def contraction_check(design: DesignMatrix, s_check: int, delta_claim: float,
                      budget: int = DEFAULT_BUDGET) -> tuple[bool, float]:
    """Largest ``|eigenvalue|`` of ``(X^T X)_SS / ||X||_{2,inf}^2 - I`` over ``|S| = s_check``.

    Supports of exactly ``s_check`` columns suffice: by eigenvalue interlacing
    smaller supports cannot do worse.  Returns ``(worst <= delta_claim, worst)``.
    """
    _check_size(design, s_check)
    total = math.comb(design.p, s_check)
    if total > budget:
        raise EnumerationBudgetError(f"C({design.p}, {s_check}) = {total} supports exceeds the budget {budget}")
    gram = _gram(design) / design.sq_max_col_norm
    worst = 0.0
    combos_iter = itertools.combinations(range(design.p), s_check)
    while True:
        chunk = list(itertools.islice(combos_iter, _CHUNK))
        if not chunk:
            break
        top, bottom = _block_extremes(gram, np.array(chunk, dtype=np.int64))
        worst = max(worst, float(np.max(top - 1)), float(np.max(1 - bottom)))
    return worst <= delta_claim, worst


def find_certified_design(n: int, p: int, s_audit: int, delta_max: float, kind: str = "near_orthogonal",
                          seeds=range(1000), perturbation: float = 0.01,
                          budget: int = DEFAULT_BUDGET) -> tuple[DesignMatrix, RipReport, int]:
    """First seed whose normalized design passes an exact audit ``delta_{s_audit} <= delta_max``."""
    for seed in seeds:
        design = generate_design(kind, n, p, normalize=True, seed=seed, perturbation=perturbation)
        report = restricted_extremes_exact(design, s_audit, budget)
        if report.delta_s <= delta_max:
            return design, report, seed
    raise RuntimeError(f"no seed certified delta_{s_audit} <= {delta_max} for a {kind} {n}x{p} design")
