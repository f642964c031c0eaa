"""Tridiagonal solve by forward elimination and back substitution."""

import numpy as np
from numba import njit


@njit(cache=True)
def thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system.

    ``lower[i]`` multiplies x[i-1] in row i (lower[0] unused) and
    ``upper[i]`` multiplies x[i+1] (upper[-1] unused). No pivoting, so the
    matrix should be diagonally dominant.
    """
    n = diag.shape[0]
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / m
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / m
    x = np.empty(n)
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x
