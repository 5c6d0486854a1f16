"""Brute-force reference computations used by the test suites.

Nothing here imports the estimator modules; each quantity is recomputed from
its defining formula by a different numerical route (loops, augmented least
squares, direct enumeration) so that agreement is evidence of correctness.
Speed is not a goal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.linalg import solve


@dataclass(frozen=True)
class OracleResult:
    name: str
    value: Any
    method: str


def oracle_realized_moments(returns) -> OracleResult:
    """Realized variance, skewness and kurtosis by plain Python loops."""
    r = [float(v) for v in returns]
    K = len(r)
    rdv = sum(v * v for v in r)
    if rdv == 0.0:
        skew = kurt = float("nan")
    else:
        skew = math.sqrt(K) * sum(v ** 3 for v in r) / rdv ** 1.5
        kurt = K * sum(v ** 4 for v in r) / rdv ** 2
    value = {"var": rdv, "vol": math.sqrt(rdv), "skew": skew, "kurt": kurt}
    return OracleResult("realized_moments", value, "direct-formula evaluation")


def oracle_trailing_mean(x, width: int) -> OracleResult:
    """Causal moving average with an expanding window over the first ``width - 1`` points."""
    out = []
    for t in range(len(x)):
        lo = max(0, t - width + 1)
        seg = [float(v) for v in x[lo:t + 1]]
        out.append(math.fsum(seg) / len(seg))
    return OracleResult("trailing_mean", np.array(out), "direct-formula evaluation")


def oracle_kernel_weights(T: int, H: float) -> OracleResult:
    """Local weights ``theta[s, t]`` and effective sizes by explicit loops."""
    theta = np.empty((T, T))
    ess = np.empty(T)
    for s in range(T):
        raw = [math.exp(-0.5 * ((t - s) / H) ** 2) / math.sqrt(2 * math.pi) for t in range(T)]
        total = math.fsum(raw)
        norm = [w / total for w in raw]
        ess[s] = 1.0 / math.fsum(w * w for w in norm)
        for t in range(T):
            theta[s, t] = ess[s] * norm[t]
    return OracleResult("kernel_weights", {"theta": theta, "ess": ess}, "direct-formula evaluation")


def _root(kappa0: np.ndarray) -> np.ndarray:
    """Matrix ``R`` with ``R.T @ R == kappa0`` for a PSD ``kappa0``."""
    vals, vecs = np.linalg.eigh(kappa0)
    vals = np.clip(vals, 0.0, None)
    return np.sqrt(vals)[:, None] * vecs.T


def oracle_conjugate_posterior(y, X, weights, beta0, kappa0, alpha0: float, gamma0: float,
                               shape_rule: str = "full") -> OracleResult:
    """Normal-Gamma quasi-posterior by augmented least squares.

    Stacking ``sqrt(theta) * [X | y]`` on top of ``R [I | beta0]`` (with
    ``R'R = kappa0``) turns the posterior mean into an ordinary least-squares
    solution; the minimized residual sum of squares equals
    ``y'Dy - beta_bar' kappa_bar beta_bar + beta0' kappa0 beta0``.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    w = np.asarray(weights, dtype=float)
    beta0 = np.asarray(beta0, dtype=float)
    kappa0 = np.atleast_2d(np.asarray(kappa0, dtype=float))
    sw = np.sqrt(w)
    R = _root(kappa0)
    A = np.vstack([sw[:, None] * X, R])
    b = np.concatenate([sw * y, R @ beta0])
    if np.linalg.matrix_rank(sw[:, None] * X) < X.shape[1]:
        raise np.linalg.LinAlgError("weighted design is singular")
    Q, U = np.linalg.qr(A)
    beta_bar = np.linalg.solve(U, Q.T @ b)
    resid = b - A @ beta_bar
    ssr = float(resid @ resid)
    Qw, Uw = np.linalg.qr(sw[:, None] * X)
    beta_hat = np.linalg.solve(Uw, Qw.T @ (sw * y))
    mass = float(w.sum())
    alpha_bar = alpha0 + (mass if shape_rule == "full" else 0.5 * mass)
    value = {
        "beta_bar": beta_bar,
        "kappa_bar": U.T @ U,
        "alpha_bar": alpha_bar,
        "gamma_bar": gamma0 + 0.5 * ssr,
        "beta_hat": beta_hat,
    }
    return OracleResult("conjugate_posterior", value, "dense conjugate solve")


def oracle_ols(y, X) -> OracleResult:
    """Least squares through the normal equations solved by Gaussian elimination."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    return OracleResult("ols", solve(X.T @ X, X.T @ y, assume_a="sym"), "dense conjugate solve")


def oracle_quantile_sizes(N: int, n: int) -> OracleResult:
    """Portfolio sizes by dealing assets one at a time to the smallest low-index bucket."""
    base = N // n
    sizes = [base] * n
    for q in range(N - base * n):
        sizes[q] += 1
    return OracleResult("quantile_sizes", sizes, "exhaustive enumeration")
