"""Uniform midpoint rules for averages over one period of the hidden angle.

A rule with N nodes places them at ``(k + 1/2) * 2*pi / N``. For periodic
integrands this is exact (up to roundoff) on trigonometric polynomials of
frequency below N, and converges as O(1/N) for piecewise-constant ones.
The half-node offset keeps nodes off the jumps of sign responses whose
settings are multiples of ``2*pi / N``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np

from .core import TWO_PI, DomainError

SMOOTH_NODES = 1024
DISCONTINUOUS_NODES = 2**16

# rows per block when evaluating a double mean on an N x N grid
_BLOCK_ROWS = 256


class QuadratureError(ArithmeticError):
    """The integrand produced a non-finite value at a node."""

    def __init__(self, message: str, lam: float, lam_prime: float | None = None):
        super().__init__(message)
        self.lam = lam
        self.lam_prime = lam_prime


@dataclass(frozen=True)
class QuadratureRule:
    nodes: int

    def __post_init__(self) -> None:
        if not isinstance(self.nodes, (int, np.integer)) or isinstance(self.nodes, bool) or self.nodes < 1:
            raise DomainError(f"quadrature needs a positive integer node count, got {self.nodes!r}")

    @property
    def weight(self) -> float:
        return TWO_PI / self.nodes

    @cached_property
    def points(self) -> np.ndarray:
        pts = (np.arange(self.nodes, dtype=float) + 0.5) * (TWO_PI / self.nodes)
        pts.flags.writeable = False
        return pts

    @cached_property
    def cos_points(self) -> np.ndarray:
        c = np.cos(self.points)
        c.flags.writeable = False
        return c

    @cached_property
    def sin_points(self) -> np.ndarray:
        s = np.sin(self.points)
        s.flags.writeable = False
        return s


def _check_finite(values: np.ndarray, rule: QuadratureRule, what: str) -> None:
    if not np.all(np.isfinite(values)):
        bad = np.flatnonzero(~np.isfinite(values.reshape(-1)))[0]
        raise QuadratureError(
            f"{what} is not finite at lambda={rule.points[bad % rule.nodes]!r}",
            float(rule.points[bad % rule.nodes]),
        )


def mean_over_period(f: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule) -> float:
    """Mean of ``f`` over one period, i.e. the integral of f(lambda) dlambda / 2pi.

    ``f`` is called once with the array of node positions and must broadcast.
    Constant functions returning a scalar are fine.
    """
    values = np.broadcast_to(np.asarray(f(rule.points), dtype=float), (rule.nodes,))
    _check_finite(values, rule, "integrand")
    return float(np.sum(values) / rule.nodes)


def mean_of_product_pairs(
    g: Callable[[np.ndarray, np.ndarray], np.ndarray],
    rule: QuadratureRule,
    density: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
) -> float:
    """Double mean of ``g(lambda, lambda')`` over the N x N node grid.

    Without ``density`` the two angles are independent and uniform. A density is
    any nonnegative function on the grid; it is normalized to unit mass here.
    Rows are reduced block by block in a fixed order, so results depend only on N.
    """
    pts = rule.points
    n = rule.nodes
    num = 0.0
    mass = 0.0
    for start in range(0, n, _BLOCK_ROWS):
        lam = pts[start : start + _BLOCK_ROWS, None]
        vals = np.broadcast_to(np.asarray(g(lam, pts[None, :]), dtype=float), (lam.shape[0], n))
        if not np.all(np.isfinite(vals)):
            i, j = np.argwhere(~np.isfinite(vals))[0]
            raise QuadratureError(
                f"integrand is not finite at lambda={pts[start + i]!r}, lambda'={pts[j]!r}",
                float(pts[start + i]),
                float(pts[j]),
            )
        if density is None:
            num += float(np.sum(vals))
            mass += float(vals.size)
        else:
            w = np.broadcast_to(np.asarray(density(lam, pts[None, :]), dtype=float), vals.shape)
            if not np.all(np.isfinite(w)) or np.any(w < 0.0):
                raise DomainError("density must be finite and nonnegative on the grid")
            num += float(np.sum(vals * w))
            mass += float(np.sum(w))
    if mass <= 0.0:
        raise DomainError("density has zero mass on the grid")
    return num / mass


@lru_cache(maxsize=32)
def rule_with(nodes: int) -> QuadratureRule:
    """Shared rule instance per node count, so cached node tables are reused."""
    return QuadratureRule(nodes)

