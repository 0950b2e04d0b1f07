"""Indicative-operator dimension screening for the residual process.

The hybrid test routes through either a directional or an omnibus
statistic depending on whether the residuals retain any directional
structure after the linear fit.  That decision is made here: build the
indicative operator from residuals and curves, compare its spectrum
against a data-driven ridge calibrated on synthetic null residuals, and
count the eigenvalues that clear the ridge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Grid

__all__ = [
    "IndicativeOperator",
    "RidgePair",
    "indicative_operator",
    "operator_spectrum",
    "null_reference_ridge",
    "estimate_dimension",
]


@dataclass(frozen=True)
class IndicativeOperator:
    """Grid matrix of the residual-direction operator (symmetric PSD)."""

    entries: np.ndarray
    grid: Grid

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=float)
        M = self.grid.M
        if entries.shape != (M, M):
            raise ValueError(f"operator entries must be {M}x{M}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("operator entries must be finite")
        if not np.allclose(entries, entries.T, atol=1e-9 * (1 + np.abs(entries).max())):
            raise ValueError("operator must be symmetric")
        object.__setattr__(self, "entries", entries)


@dataclass(frozen=True)
class RidgePair:
    """Thresholds for the normalized spectrum, both in (0, 1]."""

    c1: float
    c2: float

    def __post_init__(self) -> None:
        for name, value in (("c1", self.c1), ("c2", self.c2)):
            if not (0.0 < value <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1], got {value}")


def _curve_array(smoothed_curves, grid: Grid) -> np.ndarray:
    if isinstance(smoothed_curves, np.ndarray):
        mat = np.atleast_2d(np.asarray(smoothed_curves, dtype=float))
    else:
        rows = []
        for c in smoothed_curves:
            gf = getattr(c, "values", c)
            vals = getattr(gf, "values", gf)
            rows.append(np.asarray(vals, dtype=float))
        mat = np.array(rows)
    if mat.ndim != 2 or mat.shape[1] != grid.M:
        raise ValueError("curves must form an (n, M) array on the given grid")
    return mat


def indicative_operator(residuals, smoothed_curves, grid: Grid) -> IndicativeOperator:
    """Sample operator  e (x) e + H W H  from residuals and curves.

    e(s) = n^(-1/2) sum_i eps_i X_i(s) is the residual-weighted curve
    sum and H(s,t) = n^(-1/2) sum_i eps_i X_i(s) X_i(t); the H-squared
    term composes through the quadrature weights.  Both terms vanish
    exactly when the residuals are uncorrelated with every curve
    direction.  The root-n normalization keeps the spectrum bounded in
    probability under a correct linear fit while it grows linearly in n
    when the residuals retain curve structure, which is the separation
    the threshold rule needs at realistic sample sizes.
    """
    eps = np.asarray(residuals, dtype=float).ravel()
    mat = _curve_array(smoothed_curves, grid)
    n = mat.shape[0]
    if eps.shape != (n,):
        raise ValueError("residual count must match curve count")
    if n < 1:
        raise ValueError("need at least one observation")
    root_n = np.sqrt(n)
    e = mat.T @ eps / root_n
    h = (mat * eps[:, None]).T @ mat / root_n
    op = np.outer(e, e) + h @ (grid.weights[:, None] * h)
    return IndicativeOperator((op + op.T) / 2.0, grid)


def operator_spectrum(op: IndicativeOperator) -> np.ndarray:
    """Eigenvalues of the weighted eigenproblem, clipped at 0, descending."""
    sqrt_w = np.sqrt(op.grid.weights)
    sym = sqrt_w[:, None] * op.entries * sqrt_w[None, :]
    vals = np.linalg.eigvalsh((sym + sym.T) / 2.0)
    return np.clip(vals[::-1], 0.0, None)


def null_reference_ridge(
    smoothed_curves,
    sigma2_hat: float,
    B: int = 100,
    rng: np.random.Generator | None = None,
    grid: Grid | None = None,
    multiplier: float = 3.0,
) -> RidgePair:
    """Data-driven threshold from synthetic pure-noise residuals.

    Draw B residual vectors eta ~ N(0, sigma2_hat), average the B
    indicative operators they generate with the observed curves, and set
    both thresholds to max(multiplier * s1, n^(-1/2)) where s1 is the
    largest normalized eigenvalue of the average.  Averaging the
    operators pins the null level but strips the top-eigenvalue
    fluctuation a single realization carries, so the margin must come
    from the multiplier; 3 covers the observed spread across the
    built-in scenarios while staying far below the alternative signals,
    which clear the n^(-1/2) floor on their own.  The average is
    accumulated through the curve Gram matrix, so the cost is
    B n^2 + n^2 M + n M^2 rather than B M^2 n.
    """
    if sigma2_hat < 0:
        raise ValueError("sigma2_hat must be nonnegative")
    if B < 1:
        raise ValueError("need at least one null replicate")
    if multiplier <= 0:
        raise ValueError("multiplier must be positive")
    if grid is None:
        first = next(iter(smoothed_curves))
        gf = getattr(first, "values", first)
        grid = gf.grid
    mat = _curve_array(smoothed_curves, grid)
    n = mat.shape[0]
    floor = 1.0 / np.sqrt(n)
    if sigma2_hat == 0.0:
        return RidgePair(floor, floor)
    if rng is None:
        rng = np.random.default_rng()
    eta = rng.standard_normal((B, n)) * np.sqrt(sigma2_hat)
    a = eta.T @ eta / B
    gram = (mat * grid.weights[None, :]) @ mat.T
    core = a + gram * a
    avg = mat.T @ core @ mat / n
    spectrum = operator_spectrum(IndicativeOperator((avg + avg.T) / 2.0, grid))
    s1 = spectrum[0] / (spectrum[0] + 1.0)
    c = min(max(multiplier * s1, floor), 1.0)
    return RidgePair(c, c)


def estimate_dimension(eigvals, ridge: RidgePair) -> int:
    """Count of normalized eigenvalues above the threshold c1."""
    vals = np.asarray(eigvals, dtype=float).ravel()
    if vals.size and (np.any(vals < 0) or np.any(np.diff(vals) > 1e-12)):
        raise ValueError("eigenvalues must be nonnegative and sorted descending")
    s = vals / (vals + 1.0)
    return int(np.sum(s > ridge.c1))
