"""Orthonormal basis families on [0, 1].

Two trigonometric-type families are provided, both starting from the constant
function so that f_1 is identically one:

``constant-plus-cosine``
    f_1(x) = 1,  f_j(x) = sqrt(2) * cos((j - 1) * pi * x)  for j >= 2.

``full-trigonometric``
    f_1(x) = 1,  f_{2k}(x) = sqrt(2) * cos(2*pi*k*x),
    f_{2k+1}(x) = sqrt(2) * sin(2*pi*k*x).

Both are orthonormal in L2[0, 1] and satisfy the uniform bound
sup_x sum_{j<=m} f_j(x)^2 <= 2*m, which is what downstream variance bounds
need.  ``certify_sup_norm`` produces the grid-certified constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CONSTANT_PLUS_COSINE = "constant-plus-cosine"
FULL_TRIGONOMETRIC = "full-trigonometric"

_KINDS = (CONSTANT_PLUS_COSINE, FULL_TRIGONOMETRIC)

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class BasisFamily:
    """A basis family together with its uniform-bound constant eta_sq.

    eta_sq is the constant with sup_x sum_{j<=m} f_j(x)^2 <= m * eta_sq for
    every m; 2.0 is valid for both families (see certify_sup_norm).
    """

    kind: str = CONSTANT_PLUS_COSINE
    eta_sq: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown basis kind: {self.kind!r}")
        if not self.eta_sq >= 1.0:
            raise ValueError("eta_sq must be >= 1")


def _check_domain(j: int, x: np.ndarray) -> None:
    if j < 1:
        raise ValueError(f"basis index must be >= 1, got {j}")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("evaluation points must lie in [0, 1]")


def eval_basis(family: BasisFamily, j: int, x):
    """Evaluate f_j at x (scalar or array), x in [0, 1]."""
    xa = np.asarray(x, dtype=float)
    _check_domain(j, xa)
    if j == 1:
        out = np.ones_like(xa)
    elif family.kind == CONSTANT_PLUS_COSINE:
        out = _SQRT2 * np.cos((j - 1) * np.pi * xa)
    else:
        k = j // 2
        if j % 2 == 0:
            out = _SQRT2 * np.cos(2.0 * np.pi * k * xa)
        else:
            out = _SQRT2 * np.sin(2.0 * np.pi * k * xa)
    if np.isscalar(x) or xa.ndim == 0:
        return float(out)
    return out


def eval_vector(family: BasisFamily, m: int, x: float) -> np.ndarray:
    """Vector (f_1(x), ..., f_m(x))."""
    if m < 1:
        raise ValueError(f"dimension must be >= 1, got {m}")
    return np.array([eval_basis(family, j, x) for j in range(1, m + 1)])


def eval_matrix(family: BasisFamily, m: int, x) -> np.ndarray:
    """Matrix with rows indexed by the points of x and columns by j = 1..m."""
    if m < 1:
        raise ValueError(f"dimension must be >= 1, got {m}")
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    _check_domain(1, xa)
    cols = [np.asarray(eval_basis(family, j, xa)) for j in range(1, m + 1)]
    return np.column_stack(cols)


def antiderivative(family: BasisFamily, j: int, x):
    """Integral of f_j from 0 to x.  Needed for conditional-CDF transforms."""
    xa = np.asarray(x, dtype=float)
    _check_domain(j, xa)
    if j == 1:
        out = xa.astype(float)
    elif family.kind == CONSTANT_PLUS_COSINE:
        c = (j - 1) * np.pi
        out = _SQRT2 * np.sin(c * xa) / c
    else:
        k = j // 2
        c = 2.0 * np.pi * k
        if j % 2 == 0:
            out = _SQRT2 * np.sin(c * xa) / c
        else:
            out = _SQRT2 * (1.0 - np.cos(c * xa)) / c
    if np.isscalar(x) or xa.ndim == 0:
        return float(out)
    return out


def certify_sup_norm(family: BasisFamily, m_max: int, grid_points: int = 10_000) -> float:
    """Smallest eta_sq with grid-max of sum_{j<=m} f_j^2 <= m*eta_sq for all m <= m_max.

    The supremum is certified over a uniform grid (the testable surrogate for
    the true sup); 10^4 nodes by default.
    """
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    grid = np.linspace(0.0, 1.0, grid_points)
    fm = eval_matrix(family, m_max, grid)
    sq = np.cumsum(fm * fm, axis=1)  # column m-1 holds sum_{j<=m} f_j(x)^2
    per_m = sq.max(axis=0) / np.arange(1, m_max + 1)
    return float(per_m.max())
