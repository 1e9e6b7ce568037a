"""Reference implementations written independently of the package.

Each helper re-derives a quantity along a different computational path
(plain loops, explicit matrices, a different eigensolver) so a shared bug
cannot hide in both routes.
"""
import itertools
import math

import numpy as np
import scipy.linalg


def hard_threshold_loop(u, lam):
    return np.array([x if abs(x) >= lam else 0.0 for x in u])


def soft_threshold_loop(u, lam):
    out = []
    for x in u:
        mag = abs(x) - lam
        out.append(math.copysign(mag, x) if mag > 0 else 0.0)
    return np.array(out)


def best_subset_energy(u, s):
    """Largest sum of squares over index sets of size ``s`` (brute force)."""
    return max(sum(u[i] ** 2 for i in S) for S in itertools.combinations(range(len(u)), s))


def phi_matrix(X):
    """Explicit ``X^T X / max_j ||X_j||^2 - I``."""
    X = np.asarray(X, dtype=float)
    scale = max(float(X[:, j] @ X[:, j]) for j in range(X.shape[1]))
    return X.T @ X / scale - np.eye(X.shape[1])


def brute_force_rip(X, s):
    """(L_s, m_s) by forming every Gram block and calling scipy's eigh."""
    X = np.asarray(X, dtype=float)
    L, m = -math.inf, math.inf
    for S in itertools.combinations(range(X.shape[1]), s):
        XS = X[:, S]
        w = scipy.linalg.eigh(XS.T @ XS, eigvals_only=True)
        L, m = max(L, w[-1]), min(m, w[0])
    return L, m


def brute_force_phi_worst(X, s):
    phi = phi_matrix(X)
    worst = 0.0
    for S in itertools.combinations(range(X.shape[1]), s):
        w = scipy.linalg.eigh(phi[np.ix_(S, S)], eigvals_only=True)
        worst = max(worst, abs(w[0]), abs(w[-1]))
    return worst


def lambda0_oracle(M, s, sigma, col_norm, p):
    top = sorted((m * m for m in M), reverse=True)[:s]
    return max(math.sqrt(10 * sum(top) / s), sigma / col_norm * math.sqrt(40 * math.log(math.e * p / s)))


def adaptive_lambda0_oracle(M, sigma0, col_norm, p):
    return max(math.sqrt(20) * max(abs(m) for m in M), sigma0 / col_norm * math.sqrt(160 * (1 + math.log(p))))


def stopping_time_formula(lambda0, sigma, col_norm, p, s, kappa):
    arg = lambda0 ** 2 * col_norm ** 2 / (40 * sigma ** 2 * (1 + math.log(p) - math.log(s)))
    return max(math.floor(2 * math.log(arg) / math.log(1 / kappa)) + 1, 1)


def iht_chain(X, y, lambdas, start=None):
    """Plain IHT with an explicit threshold sequence, from zero by default."""
    X = np.asarray(X, dtype=float)
    c = max(float(X[:, j] @ X[:, j]) for j in range(X.shape[1]))
    beta = np.zeros(X.shape[1]) if start is None else np.array(start, dtype=float)
    out = [beta]
    for lam in lambdas:
        h = beta + X.T @ (y - X @ beta) / c
        beta = np.where(np.abs(h) >= lam, h, 0.0)
        out.append(beta)
    return out


def selection_value(X, y, beta, sigma_ref, const=10.0):
    n, p = X.shape
    r = y - X @ beta
    k = int(np.count_nonzero(beta))
    pen = 0.0 if k == 0 else const * sigma_ref ** 2 * k * math.log(math.e * p / k) / n
    return float(r @ r) / n + pen


def restricted_ls(X, y, support):
    out = np.zeros(X.shape[1])
    support = list(support)
    sol, *_ = np.linalg.lstsq(X[:, support], y, rcond=None)
    out[support] = sol
    return out
