"""First-stage curve smoothing.

Each observed curve is replaced by the minimizer of

    (1/M) sum_j (x(t_j) - g(t_j))^2 + lambda1 * int (g^(r))^2,

a natural smoothing spline of order 2r, computed through the
representer expansion g = polynomial + sum_j c_j K_r(., t_j) with the
scaled-Bernoulli kernel K_r.  The expensive part (a QR of the
polynomial block and an eigendecomposition of the projected kernel
Gram) depends only on (grid, r); it is built once and cached so that
smoothing n curves on a shared grid is a pair of matrix products.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._bernoulli import kernel_gram
from .core import Grid, GridFunction

__all__ = [
    "SmoothCurve",
    "smooth_curve",
    "smooth_paths",
    "hat_matrix",
    "grid_rate_warning",
    "DEFAULT_LAMBDA1_GRID",
]

# per-curve GCV search grid for lambda1
DEFAULT_LAMBDA1_GRID = np.logspace(-10.0, 2.0, 40)

_EIG_CLIP = 1e-12


@dataclass(frozen=True)
class SmoothCurve:
    """A smoothed curve, the penalty level that produced it, and its
    roughness int (g^(r))^2."""

    values: GridFunction
    lambda1: float
    r: int
    roughness: float


class _SmootherBasis:
    """Grid/order specific decomposition shared by all curves.

    With T the (M, r) polynomial design, Q2 an orthonormal basis of its
    complement and U S U^T the eigendecomposition of Q2^T K Q2, the
    penalized fit at ridge delta = M*lambda1 is

        fitted = x - delta * Q2 U diag(1/(s+delta)) U^T Q2^T x.
    """

    def __init__(self, grid: Grid, r: int):
        if r < 1:
            raise ValueError("penalty order r must be >= 1")
        if grid.M < 2 * r:
            raise ValueError(f"need at least 2r={2 * r} observation points, got {grid.M}")
        self.grid = grid
        self.r = r
        nodes = grid.nodes
        self.kernel = kernel_gram(nodes, r)
        t_poly = np.vander(nodes, r, increasing=True)
        q_full, _ = np.linalg.qr(t_poly, mode="complete")
        self.q2 = q_full[:, r:]
        core = self.q2.T @ self.kernel @ self.q2
        s, u = np.linalg.eigh((core + core.T) / 2.0)
        s = np.clip(s, 0.0, None)
        self.s = s
        self.proj = u.T @ self.q2.T  # maps observations to rotated coefficients
        self.back = self.q2 @ u  # inverse rotation

    def rotated(self, values: np.ndarray) -> np.ndarray:
        """b = U^T Q2^T x for rows of `values`; shape (n, M-r)."""
        return values @ self.proj.T

    def fit_at(self, values: np.ndarray, b: np.ndarray, lambda1: np.ndarray):
        """Fitted curves and roughness at per-curve penalties.

        values: (n, M); b: (n, M-r); lambda1: (n,) nonnegative.
        """
        delta = self.grid.M * np.asarray(lambda1, dtype=float)[:, None]
        denom = self.s[None, :] + delta
        coef = np.where(denom > 0, b / denom, 0.0)
        fitted = values - (delta * coef) @ self.back.T
        roughness = np.einsum("ij,j,ij->i", coef, self.s, coef)
        return fitted, roughness

    def gcv_curves(self, b: np.ndarray, lam_grid: np.ndarray) -> np.ndarray:
        """GCV(lambda) per curve: M * RSS / (M - tr A)^2; shape (n, L)."""
        delta = self.grid.M * np.asarray(lam_grid, dtype=float)  # (L,)
        denom = self.s[None, :, None] + delta[None, None, :]  # (1, K, L)
        resid = delta[None, None, :] * b[:, :, None] / denom  # (n, K, L)
        rss = np.sum(resid**2, axis=1)  # (n, L)
        denom_tr = np.sum(delta[None, :] / (self.s[:, None] + delta[None, :]), axis=0)  # (L,)
        with np.errstate(divide="ignore", invalid="ignore"):
            gcv = self.grid.M * rss / denom_tr[None, :] ** 2
        gcv[~np.isfinite(gcv)] = np.inf
        return gcv


_BASIS_CACHE: dict[tuple[bytes, int], _SmootherBasis] = {}


def _basis(grid: Grid, r: int) -> _SmootherBasis:
    key = (grid.cache_key(), r)
    basis = _BASIS_CACHE.get(key)
    if basis is None:
        basis = _SmootherBasis(grid, r)
        if len(_BASIS_CACHE) > 8:
            _BASIS_CACHE.clear()
        _BASIS_CACHE[key] = basis
    return basis


def smooth_paths(
    values: np.ndarray,
    grid: Grid,
    r: int = 2,
    lambda1: float | None = None,
    lambda1_grid: np.ndarray = DEFAULT_LAMBDA1_GRID,
):
    """Smooth each row of an (n, M) array; lambda1=None selects the
    penalty per curve by GCV.  Returns (fitted, lambdas, roughness)."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[1] != grid.M:
        raise ValueError("column count must match the grid size")
    basis = _basis(grid, r)
    b = basis.rotated(values)
    if lambda1 is None:
        gcv = basis.gcv_curves(b, lambda1_grid)
        lambdas = np.asarray(lambda1_grid)[np.argmin(gcv, axis=1)]
    else:
        if lambda1 < 0:
            raise ValueError("lambda1 must be nonnegative")
        lambdas = np.full(values.shape[0], float(lambda1))
    fitted, roughness = basis.fit_at(values, b, lambdas)
    if not np.all(np.isfinite(fitted)):
        raise RuntimeError("curve smoothing produced non-finite values")
    return fitted, lambdas, roughness


def smooth_curve(
    obs: GridFunction,
    r: int = 2,
    lambda1: float | None = None,
    lambda1_grid: np.ndarray = DEFAULT_LAMBDA1_GRID,
) -> SmoothCurve:
    """Smooth one observed curve; lambda1=None means per-curve GCV."""
    fitted, lambdas, rough = smooth_paths(obs.values[None, :], obs.grid, r, lambda1, lambda1_grid)
    return SmoothCurve(
        values=GridFunction(fitted[0], obs.grid),
        lambda1=float(lambdas[0]),
        r=r,
        roughness=float(rough[0]),
    )


def hat_matrix(grid: Grid, r: int, lambda1: float) -> np.ndarray:
    """The M x M linear operator mapping observations to fitted values."""
    if lambda1 < 0:
        raise ValueError("lambda1 must be nonnegative")
    basis = _basis(grid, r)
    delta = grid.M * float(lambda1)
    shrink = delta / (basis.s + delta) if delta > 0 else np.zeros_like(basis.s)
    return np.eye(grid.M) - basis.back @ (shrink[:, None] * basis.proj)


def grid_rate_warning(n: int, M: int, r: int) -> str | None:
    """Advisory message when the observation grid is coarse for n.

    The guideline M >= 20 * n^(1/(2r)) keeps the smoothing bias
    negligible next to the estimation error; below it the test still
    runs but sizes may drift.
    """
    threshold = 20.0 * n ** (1.0 / (2 * r))
    if M < threshold:
        return (
            f"M={M} observation points is below the advisory threshold "
            f"20*n^(1/{2 * r})={threshold:.1f} for n={n}; results may be "
            "grid-limited"
        )
    return None


def warn_if_coarse(n: int, M: int, r: int) -> None:
    msg = grid_rate_warning(n, M, r)
    if msg is not None:
        warnings.warn(msg, stacklevel=2)
