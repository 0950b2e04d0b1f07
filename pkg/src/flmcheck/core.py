"""Grids, trapezoid quadrature, and grid-function algebra.

Every functional object in this package (curve, slope, eigenfunction,
kernel) lives on one shared grid of nodes in [0, 1]; integrals are
trapezoid sums, so all operator algebra reduces to weighted matrix
algebra.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "GridFunction",
    "make_uniform_grid",
    "inner_product",
    "l2_norm",
]


@dataclass(frozen=True)
class Grid:
    """Quadrature nodes and trapezoid weights on [0, 1].

    Nodes must be strictly increasing with ``nodes[0] == 0`` and
    ``nodes[-1] == 1``; the weights then sum to 1 (the length of the
    interval).
    """

    nodes: np.ndarray
    weights: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("grid needs at least 2 one-dimensional nodes")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("grid nodes must be finite")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        if not (abs(nodes[0]) < 1e-12 and abs(nodes[-1] - 1.0) < 1e-12):
            raise ValueError("grid must span [0, 1] (nodes[0]=0, nodes[-1]=1)")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", _trapezoid_weights(nodes))

    @property
    def M(self) -> int:
        return self.nodes.size

    def cache_key(self) -> bytes:
        """Stable hashable identity, used to cache per-grid operators."""
        return self.nodes.tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self.nodes.shape == other.nodes.shape and bool(
            np.array_equal(self.nodes, other.nodes)
        )

    def __hash__(self) -> int:
        return hash(self.cache_key())


def _trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    gaps = np.diff(nodes)
    w = np.zeros_like(nodes)
    w[:-1] += gaps / 2.0
    w[1:] += gaps / 2.0
    return w


@dataclass(frozen=True)
class GridFunction:
    """A function represented by its values at the grid nodes."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.M,):
            raise ValueError(
                f"values shape {values.shape} does not match grid size {self.grid.M}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("grid-function values must be finite")
        object.__setattr__(self, "values", values)


def make_uniform_grid(M: int) -> Grid:
    """Equidistant grid t_i = (i-1)/(M-1) on [0, 1] with trapezoid weights."""
    if not isinstance(M, (int, np.integer)) or M < 2:
        raise ValueError("M must be an integer >= 2")
    return Grid(np.linspace(0.0, 1.0, int(M)))


def inner_product(f: GridFunction, g: GridFunction) -> float:
    """Trapezoid approximation of the L2 inner product on [0, 1]."""
    if f.grid != g.grid:
        raise ValueError("inner_product requires both functions on the same grid")
    return float(np.sum(f.grid.weights * f.values * g.values))


def l2_norm(f: GridFunction) -> float:
    """sqrt(<f, f>) under the grid quadrature."""
    return float(np.sqrt(max(inner_product(f, f), 0.0)))
