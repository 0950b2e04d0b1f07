"""Scaled Bernoulli polynomials and the Sobolev reproducing kernel.

The order-m Sobolev space on [0,1] with squared norm

    sum_{i<m} (int f^(i))^2  +  int (f^(m))^2

splits into a polynomial null space and its orthogonal complement H1;
the reproducing kernel of H1 is

    K_m(s, t) = k_m(s) k_m(t) + (-1)^(m-1) k_{2m}(|s - t|),

where k_r(x) = B_r(x)/r! is the r-th Bernoulli polynomial scaled by r!.
For m=2 this is the familiar closed form k2(s)k2(t) - k4(|s-t|) used by
the slope penalty; the curve smoother reuses the same family at other
orders.
"""

from __future__ import annotations

from math import comb, factorial

import numpy as np
from scipy.special import bernoulli as _bernoulli_numbers

__all__ = ["scaled_bernoulli", "kernel_values", "kernel_gram"]


def _bernoulli_coeffs(r: int) -> np.ndarray:
    """Coefficients of B_r(x) in increasing powers of x."""
    numbers = _bernoulli_numbers(r)  # B_0 .. B_r with B_1 = -1/2
    return np.array([comb(r, j) * numbers[r - j] for j in range(r + 1)])


def scaled_bernoulli(r: int, x: np.ndarray) -> np.ndarray:
    """k_r(x) = B_r(x) / r! evaluated elementwise."""
    if r < 0:
        raise ValueError("polynomial order must be nonnegative")
    x = np.asarray(x, dtype=float)
    coeffs = _bernoulli_coeffs(r) / factorial(r)
    return np.polynomial.polynomial.polyval(x, coeffs)


def kernel_values(s: np.ndarray, t: np.ndarray, m: int) -> np.ndarray:
    """K_m(s, t) evaluated elementwise (broadcasting on s, t in [0,1])."""
    if m < 1:
        raise ValueError("kernel order must be >= 1")
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    sign = 1.0 if m % 2 == 1 else -1.0
    return scaled_bernoulli(m, s) * scaled_bernoulli(m, t) + sign * scaled_bernoulli(
        2 * m, np.abs(s - t)
    )


def kernel_gram(nodes: np.ndarray, m: int) -> np.ndarray:
    """Symmetric kernel matrix K_m(t_i, t_j) over all node pairs."""
    nodes = np.asarray(nodes, dtype=float)
    gram = kernel_values(nodes[:, None], nodes[None, :], m)
    # enforce exact symmetry against floating-point noise in |s-t|
    return (gram + gram.T) / 2.0
