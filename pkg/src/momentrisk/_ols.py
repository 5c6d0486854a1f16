from __future__ import annotations

import numpy as np


def with_intercept(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.column_stack([np.ones(len(X)), X])


def has_full_rank(Z: np.ndarray) -> bool:
    if Z.shape[0] < Z.shape[1]:
        return False
    return np.linalg.matrix_rank(Z) == Z.shape[1]


def dependent_columns(Z: np.ndarray) -> list[int]:
    """Indices of columns that add no rank when appended left to right."""
    bad, rank = [], 0
    for j in range(Z.shape[1]):
        cols = [i for i in range(j + 1) if i not in bad]
        r = np.linalg.matrix_rank(Z[:, cols])
        if r == rank:
            bad.append(j)
        else:
            rank = r
    return bad


def ols(Z: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares coefficients and residuals; ``Y`` may hold several columns."""
    coef = np.linalg.lstsq(Z, Y, rcond=None)[0]
    return coef, Y - Z @ coef
