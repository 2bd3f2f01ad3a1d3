"""Empirical moment systems and the thresholded least-squares estimate.

For a sample (Y_i, Z_i, W_i), i = 1..n, and basis families on [0, 1] the
m-dimensional system is

    t_hat[j, l] = n^-1 sum_i f_j(W_i) f_l(Z_i),    g_hat[j] = n^-1 sum_i Y_i f_j(W_i),

and the coefficient estimate solves t_hat @ theta = g_hat whenever the squared
spectral norm of the inverse stays below the sample size; otherwise the
estimate is set to zero (thresholded).  All sums use exactly rounded
accumulation (math.fsum), so assembly is invariant under permutations of the
sample - bit for bit, not just approximately.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .basis import BasisFamily, eval_matrix

# Relative smallest-singular-value cutoff below which t_hat counts as singular.
SINGULARITY_CUTOFF = 1e-14

_THRESHOLD_FORMS = ("squared", "unsquared")


@dataclass(frozen=True)
class Sample:
    """Immutable observed triples (y, z, w); z and w must lie in [0, 1]."""

    y: np.ndarray
    z: np.ndarray
    w: np.ndarray

    def __post_init__(self) -> None:
        for name in ("y", "z", "w"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.y.ndim == self.z.ndim == self.w.ndim == 1):
            raise ValueError("sample components must be one-dimensional")
        if not (len(self.y) == len(self.z) == len(self.w)):
            raise ValueError("sample components must have equal length")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("responses must be finite")
        for name in ("z", "w"):
            arr = getattr(self, name)
            if not np.all((arr >= 0.0) & (arr <= 1.0)):
                raise ValueError(f"{name} values must lie in [0, 1]")

    @property
    def n(self) -> int:
        return len(self.y)


@dataclass(frozen=True)
class GalerkinSystem:
    """Empirical m x m matrix and m-vector for one dimension m."""

    m: int
    t_hat: np.ndarray
    g_hat: np.ndarray
    n: int


@dataclass(frozen=True)
class CoefficientEstimate:
    """Thresholded LS coefficients; theta is the zero vector iff thresholded."""

    m: int
    theta: np.ndarray
    thresholded: bool
    inv_norm_sq: float


def _fsum_columns(a: np.ndarray) -> np.ndarray:
    # fsum over Python lists: exactly rounded and much faster than iterating
    # numpy scalars.  a has shape (k, n); returns the k exact column sums.
    return np.array([math.fsum(row) for row in a.tolist()])


def assemble(sample: Sample, m: int, basis_z: BasisFamily, basis_w: BasisFamily) -> GalerkinSystem:
    """Build the empirical system for dimension m with exact accumulation."""
    if m < 1:
        raise ValueError(f"dimension must be >= 1, got {m}")
    n = sample.n
    if n < 1:
        raise ValueError("empty sample")
    fw = eval_matrix(basis_w, m, sample.w)  # (n, m)
    fz = eval_matrix(basis_z, m, sample.z)
    prods = fw[:, :, None] * fz[:, None, :]  # (n, m, m); entry (i, j, l)
    t_hat = _fsum_columns(prods.reshape(n, m * m).T).reshape(m, m) / n
    g_hat = _fsum_columns((sample.y[:, None] * fw).T) / n
    return GalerkinSystem(m=m, t_hat=t_hat, g_hat=g_hat, n=n)


def leading_subsystem(system: GalerkinSystem, m: int) -> GalerkinSystem:
    """The dimension-m system embedded in a larger one (leading blocks).

    Identical to assembling at m directly: every entry is the same exact sum.
    """
    if not 1 <= m <= system.m:
        raise ValueError(f"need 1 <= m <= {system.m}, got {m}")
    if m == system.m:
        return system
    return GalerkinSystem(m=m, t_hat=system.t_hat[:m, :m].copy(),
                          g_hat=system.g_hat[:m].copy(), n=system.n)


def spectral_norm(matrix: np.ndarray) -> float:
    """Largest singular value."""
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    return float(np.linalg.svd(a, compute_uv=False)[0])


def matrix_inv_norm_sq(matrix: np.ndarray) -> float:
    """Squared spectral norm of the inverse; +inf when numerically singular."""
    a = np.asarray(matrix, dtype=float)
    s = np.linalg.svd(a, compute_uv=False)
    smax, smin = float(s[0]), float(s[-1])
    if smax == 0.0 or smin <= SINGULARITY_CUTOFF * smax:
        return math.inf
    return 1.0 / (smin * smin)


def inverse_norm_sq(system: GalerkinSystem) -> float:
    """Squared spectral norm of t_hat^-1 on the system's dimension."""
    return matrix_inv_norm_sq(system.t_hat)


def threshold_ls_estimate(system: GalerkinSystem, threshold_form: str = "squared") -> CoefficientEstimate:
    """Solve t_hat @ theta = g_hat unless the inverse is too large.

    threshold_form "squared" keeps the solution while ||t_hat^-1||^2 <= n;
    "unsquared" compares the unsquared norm against n instead.  The solve runs
    through the SVD with iterative refinement, targeting a residual below
    1e-10 * ||g_hat||.
    """
    if threshold_form not in _THRESHOLD_FORMS:
        raise ValueError(f"unknown threshold form: {threshold_form!r}")
    t, g, n, m = system.t_hat, system.g_hat, system.n, system.m
    u, s, vt = np.linalg.svd(t)
    smax, smin = float(s[0]), float(s[-1])
    if smax == 0.0 or smin <= SINGULARITY_CUTOFF * smax:
        inv_sq = math.inf
    else:
        inv_sq = 1.0 / (smin * smin)
    bound = inv_sq if threshold_form == "squared" else math.sqrt(inv_sq)
    if bound > n:
        return CoefficientEstimate(m=m, theta=np.zeros(m), thresholded=True, inv_norm_sq=inv_sq)

    def apply_inverse(rhs: np.ndarray) -> np.ndarray:
        return vt.T @ ((u.T @ rhs) / s)

    theta = apply_inverse(g)
    gnorm = float(np.linalg.norm(g))
    for _ in range(2):
        resid = g - t @ theta
        if float(np.linalg.norm(resid)) <= 1e-10 * gnorm:
            break
        theta = theta + apply_inverse(resid)
    return CoefficientEstimate(m=m, theta=theta, thresholded=False, inv_norm_sq=inv_sq)


def l2_error(estimate: CoefficientEstimate, true_coeffs: np.ndarray) -> float:
    """Exact squared L2 distance in coefficient space (zero-padded)."""
    c = np.asarray(true_coeffs, dtype=float)
    k = max(estimate.m, len(c))
    diff = np.zeros(k)
    diff[: estimate.m] = estimate.theta
    diff[: len(c)] -= c
    return float(diff @ diff)


def read_sample_csv(path) -> Sample:
    """Read a sample from CSV with header y,z,w.

    Rows with z or w outside [0, 1] are dropped with a warning; malformed
    numerics raise ValueError naming the offending row.
    """
    ys, zs, ws = [], [], []
    dropped = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["y", "z", "w"]:
            raise ValueError(f"{path}: expected header y,z,w, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise ValueError(f"{path}: row {lineno} has {len(row)} fields, expected 3")
            try:
                y, z, w = (float(cell) for cell in row)
            except ValueError as exc:
                raise ValueError(f"{path}: row {lineno}: {exc}") from None
            if not (math.isfinite(y) and math.isfinite(z) and math.isfinite(w)):
                raise ValueError(f"{path}: row {lineno}: non-finite value")
            if not (0.0 <= z <= 1.0 and 0.0 <= w <= 1.0):
                dropped.append(lineno)
                continue
            ys.append(y)
            zs.append(z)
            ws.append(w)
    if dropped:
        shown = ", ".join(map(str, dropped[:5])) + ("..." if len(dropped) > 5 else "")
        warnings.warn(f"{path}: dropped {len(dropped)} rows with z or w outside [0, 1] (rows {shown})")
    if not ys:
        raise ValueError(f"{path}: no usable rows")
    return Sample(y=np.array(ys), z=np.array(zs), w=np.array(ws))


def write_sample_csv(sample: Sample, path) -> None:
    """Write a sample in the y,z,w CSV format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "z", "w"])
        for y, z, w in zip(sample.y, sample.z, sample.w):
            writer.writerow([repr(float(y)), repr(float(z)), repr(float(w))])
