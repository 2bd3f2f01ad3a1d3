"""Population-side quantities: link conditions, oracle dimension, minimax rates.

The estimation target phi has coefficients c_j in an ellipsoid
sum_j gamma_j^-1 c_j^2 <= r^2; the conditional-expectation operator T acts
through its matrix [T]_{j,l} = E f_j(W) f_l(Z).  Two weight regimes are
supported, parameterized by (p, a):

    PP: gamma_j = j^(-2p), upsilon_j = j^(2a)         (mildly ill-posed)
    PE: gamma_j = j^(-2p), upsilon_j = exp(j^(2a)-1)  (severely ill-posed)

From the true operator the module computes the deterministic truncation pair
(M_minus, M_plus), the bias sequence b_m^2 = sup_{k>=m} ||phi_k - phi||^2, the
oracle dimension m_star minimizing b_m^2 v delta_m^T/n, and the rate-optimal
dimension m_diamond with its minimax rate (PP: n^(-2p/(2p+2a+1)); PE:
(log n)^(-p/a)).  Everything here is closed form or quadrature against known
densities; nothing touches data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import zeta as riemann_zeta

from .basis import BasisFamily, eval_matrix
from .galerkin import matrix_inv_norm_sq, spectral_norm
from .selection import candidate_cap, delta_triplet, truncation_index

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, types only
    from .dgp import JointDesign

CASE_PP = "PP"
CASE_PE = "PE"

# Relative slack for inequality checks that the constructions satisfy with
# equality (floating-point boundary cases).
_RTOL = 1e-9


@dataclass(frozen=True)
class SmoothnessCase:
    """Illustration parameterization: kind PP or PE with exponents (p, a)."""

    kind: str
    p: float
    a: float

    def __post_init__(self) -> None:
        if self.kind not in (CASE_PP, CASE_PE):
            raise ValueError(f"case kind must be PP or PE, got {self.kind!r}")
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if self.kind == CASE_PP and not self.a > 0.5:
            raise ValueError("PP requires a > 1/2")
        if self.kind == CASE_PE and not self.a > 0:
            raise ValueError("PE requires a > 0")

    def gamma(self, j) -> np.ndarray:
        return np.asarray(j, dtype=float) ** (-2.0 * self.p)

    def upsilon(self, j) -> np.ndarray:
        ja = np.asarray(j, dtype=float)
        if self.kind == CASE_PP:
            return ja ** (2.0 * self.a)
        return np.exp(ja ** (2.0 * self.a) - 1.0)


def zeta_sup_constant(case: SmoothnessCase) -> float:
    """zeta with ||sum_j gamma_j f_j^2||_inf <= zeta^2, certified for the full series.

    Uses sup f_1^2 = 1, sup f_j^2 <= 2 (j >= 2) and the Riemann zeta value of
    sum j^(-2p), so the bound covers the infinite sum, not a truncation.
    """
    total = 1.0 + 2.0 * (float(riemann_zeta(2.0 * case.p)) - 1.0)
    return math.sqrt(total)


@dataclass(frozen=True)
class WeightSequences:
    """Materialized weight sequences with their class constants.

    gamma and upsilon hold j = 1..len values; gamma_at/upsilon_at extend by
    the closed form of the case.  d and D are the link-condition constants,
    zeta_inf the sup-norm constant (its square bounds sum gamma_j f_j^2).
    """

    gamma: np.ndarray
    upsilon: np.ndarray
    r: float
    d: float
    D: float
    case: SmoothnessCase
    zeta_inf: float

    def __post_init__(self) -> None:
        g = np.asarray(self.gamma, dtype=float)
        u = np.asarray(self.upsilon, dtype=float)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "upsilon", u)
        if len(g) < 1 or len(u) < 1:
            raise ValueError("weight sequences must be nonempty")
        if abs(g[0] - 1.0) > _RTOL or abs(u[0] - 1.0) > _RTOL:
            raise ValueError("gamma_1 = upsilon_1 = 1 required")
        if np.any(g <= 0) or np.any(np.diff(g) > 0):
            raise ValueError("gamma must be positive nonincreasing")
        if np.any(u <= 0) or np.any(np.diff(u) < 0):
            raise ValueError("upsilon must be positive nondecreasing")
        if not self.r > 0:
            raise ValueError("radius must be positive")
        if self.d < 1.0 or self.D < self.d:
            raise ValueError("need D >= d >= 1")
        if self.zeta_inf < 1.0:
            raise ValueError("zeta_inf must be >= 1")

    def gamma_at(self, j: int) -> float:
        if j <= len(self.gamma):
            return float(self.gamma[j - 1])
        return float(self.case.gamma(j))

    def upsilon_at(self, j: int) -> float:
        if j <= len(self.upsilon):
            return float(self.upsilon[j - 1])
        return float(self.case.upsilon(j))


def _gauss_nodes(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    # Gauss-Legendre rule mapped from [-1, 1] to [0, 1].
    x, w = leggauss(n_nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def operator_matrix_quadrature(design: "JointDesign", m: int, n_nodes: int = 64) -> np.ndarray:
    """[T]_m by tensor Gauss-Legendre quadrature of the density against basis products."""
    nodes, wts = _gauss_nodes(n_nodes)
    fz = eval_matrix(design.basis, max(m, design.J), nodes)
    fw = fz  # shared basis and shared nodes for both axes
    lam_full = design.diag(design.J)
    # density on the tensor grid: rows w-index, columns z-index
    dens = (fw[:, : design.J] * lam_full) @ fz[:, : design.J].T
    weighted = (wts[:, None] * dens) * wts[None, :]
    return fw[:, :m].T @ weighted @ fz[:, :m]


def true_operator_matrix(design: "JointDesign", m: int, method: str = "closed-form") -> np.ndarray:
    """The population matrix [T]_m.

    Diagonal designs admit the exact closed form diag(1, lambda_2, ...);
    method="quadrature" integrates the density instead (agrees to 1e-8).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if method == "closed-form":
        return np.diag(design.diag(m))
    if method == "quadrature":
        return operator_matrix_quadrature(design, m)
    raise ValueError(f"unknown method: {method!r}")


def operator_inv_norm_sq_sequence(design: "JointDesign", m_max: int) -> list[float]:
    """a_m = ||[T]_m^-1||_S^2 for m = 1..m_max; +inf past the bandlimit."""
    diag = design.diag(m_max)
    out, running_min = [], math.inf
    for m in range(1, m_max + 1):
        running_min = min(running_min, abs(float(diag[m - 1])))
        out.append(math.inf if running_min == 0.0 else 1.0 / (running_min * running_min))
    return out


def small_delta_T_sequence(design: "JointDesign", m_max: int) -> list[float]:
    """delta_m^T for m = 1..m_max, from the true operator."""
    a = operator_inv_norm_sq_sequence(design, m_max)
    return [delta_triplet(a, m)[2] for m in range(1, m_max + 1)]


def theoretical_truncations(design: "JointDesign", n: int, cap: int | None = None) -> tuple[int, int]:
    """(M_minus, M_plus): the truncation rule applied to 4a and a/4."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if cap is None:
        cap = candidate_cap(n)
    a = operator_inv_norm_sq_sequence(design, cap)
    m_minus = truncation_index([4.0 * v for v in a], n, cap)
    m_plus = truncation_index([v / 4.0 for v in a], n, cap)
    return m_minus, m_plus


def _full_operator_block(design: "JointDesign", rows: int, cols: int) -> np.ndarray:
    d = design.diag(max(rows, cols))
    block = np.zeros((rows, cols))
    for j in range(min(rows, cols)):
        block[j, j] = d[j]
    return block


def bias_sq_from_operator(op: np.ndarray, phi_coeffs: np.ndarray, m: int, k_max: int) -> float:
    """sup over k in m..k_max of ||phi_k - phi||^2 from an explicit operator block.

    op must have shape (k_max, J): rows are W-basis indices, columns Z-basis
    indices; phi_k solves the k x k leading system against [T phi]_k.
    """
    c = np.asarray(phi_coeffs, dtype=float)
    j_lim = len(c)
    if op.shape[0] < k_max or op.shape[1] < j_lim:
        raise ValueError("operator block too small for requested dimensions")
    if not 1 <= m <= k_max:
        raise ValueError("need 1 <= m <= k_max")
    worst = 0.0
    for k in range(m, k_max + 1):
        tk = op[:k, :k]
        if matrix_inv_norm_sq(tk) == math.inf:
            raise ValueError(f"operator block of dimension {k} is singular")
        g_k = op[:k, :j_lim] @ c
        phi_k = np.linalg.solve(tk, g_k)
        diff = np.zeros(max(k, j_lim))
        diff[:k] = phi_k
        diff[:j_lim] -= c
        worst = max(worst, float(diff @ diff))
    return worst


def bias_sq(phi_coeffs: np.ndarray, design: "JointDesign", m: int, k_max: int) -> float:
    """b_m^2 truncated at k_max: max over k = m..k_max of ||phi_k - phi||^2.

    Exact for bandlimited phi once k_max reaches the bandlimit (phi_k = phi
    beyond it); for diagonal designs this is the tail sum past m.
    """
    c = np.asarray(phi_coeffs, dtype=float)
    if not 1 <= m <= k_max:
        raise ValueError("need 1 <= m <= k_max")
    if k_max > design.J:
        raise ValueError("k_max exceeds the design bandlimit")
    op = _full_operator_block(design, k_max, max(k_max, len(c)))
    return bias_sq_from_operator(op, c, m, k_max)


def oracle_dimension(bias_sq_seq: Sequence[float], small_delta_T: Sequence[float],
                     m_minus: int, n: int) -> tuple[int, float]:
    """Smallest minimizer over 1..M_minus of b_m^2 v delta_m^T/n, and its value."""
    if m_minus < 1:
        raise ValueError("M_minus must be >= 1")
    if len(bias_sq_seq) < m_minus or len(small_delta_T) < m_minus:
        raise ValueError("sequences must cover 1..M_minus")
    values = [max(bias_sq_seq[k], small_delta_T[k] / n) for k in range(m_minus)]
    best = min(range(m_minus), key=lambda k: (values[k], k))
    return best + 1, values[best]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def minimax_dimension_rate(n: int, case: SmoothnessCase) -> tuple[int, float]:
    """Rate-optimal dimension m_diamond and minimax rate for the case.

    PP: m = n^(1/(2p+2a+1)) rounded, rate n^(-2p/(2p+2a+1)).
    PE: m = (log n - ((2p+(2a-1)_+)/(2a)) loglog n)^(1/(2a)) rounded,
        rate (log n)^(-p/a).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    p, a = case.p, case.a
    if case.kind == CASE_PP:
        expo = 1.0 / (2.0 * p + 2.0 * a + 1.0)
        m = max(1, _round_half_up(n ** expo))
        rate = n ** (-2.0 * p * expo)
        return m, rate
    ln = math.log(n)
    correction = (2.0 * p + max(2.0 * a - 1.0, 0.0)) / (2.0 * a)
    inner = ln - correction * math.log(ln)
    m = max(1, _round_half_up(inner ** (1.0 / (2.0 * a)))) if inner > 0 else 1
    rate = ln ** (-p / a)
    return m, rate


def link_condition_from_matrix(op: np.ndarray, upsilon: np.ndarray,
                               d: float, D: float, m_max: int) -> bool:
    """Direct check of the sandwich and extended bounds on an operator block.

    Per column j <= m_max:  d^-2 <= upsilon_j ||T f_j||^2 <= d^2 with
    ||T f_j||^2 the column sum of squares; per m <= m_max:
    ||Diag(upsilon)_m^(-1/2) [T]_m^-1||_S <= D.  Equalities from exact
    constructions are accepted with relative slack 1e-9.
    """
    if op.shape[1] < m_max or len(upsilon) < m_max:
        raise ValueError("operator block or upsilon too small")
    col_sq = np.einsum("ij,ij->j", op[:, :m_max], op[:, :m_max])
    lo, hi = d ** (-2.0), d ** 2.0
    for j in range(m_max):
        v = float(upsilon[j]) * float(col_sq[j])
        if v < lo * (1.0 - _RTOL) or v > hi * (1.0 + _RTOL):
            return False
    for m in range(1, m_max + 1):
        tm = op[:m, :m]
        if matrix_inv_norm_sq(tm) == math.inf:
            return False
        scaled = np.diag(np.asarray(upsilon[:m], dtype=float) ** -0.5) @ np.linalg.inv(tm)
        if spectral_norm(scaled) > D * (1.0 + _RTOL):
            return False
    return True


def check_link_condition(design: "JointDesign", weights: WeightSequences, m_max: int) -> bool:
    """Link-condition certificate for a design, up to dimension m_max."""
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    if m_max > design.J:
        return False  # zero columns past the bandlimit violate the lower sandwich
    op = _full_operator_block(design, design.J, m_max)
    upsilon = np.array([weights.upsilon_at(j) for j in range(1, m_max + 1)])
    return link_condition_from_matrix(op, upsilon, weights.d, weights.D, m_max)


def approximation_bound_check(phi_coeffs: np.ndarray, design: "JointDesign",
                              weights: WeightSequences, m_max: int,
                              grid_points: int = 2001) -> bool:
    """Numeric check of the three approximation-error bounds for m <= m_max.

        gamma_m^-1 ||phi - phi_m||^2 <= 4 D^2 d^2 r^2
        ||phi_m||^2                  <= 4 D^2 d^2 r^2
        ||phi - phi_m||_inf^2        <= 4 zeta^2 D^2 d^2 r^2  (grid sup)

    Raises ValueError if phi lies outside the ellipsoid of radius r or the
    design fails its link condition (preconditions, not check results).
    """
    c = np.asarray(phi_coeffs, dtype=float)
    radius_sq = math.fsum(
        (c[j] * c[j]) / weights.gamma_at(j + 1) for j in range(len(c))
    )
    if radius_sq > weights.r ** 2 * (1.0 + _RTOL):
        raise ValueError(f"phi outside the ellipsoid: sum gamma^-1 c^2 = {radius_sq} > r^2")
    if not check_link_condition(design, weights, min(m_max, design.J)):
        raise ValueError("design fails its link condition")
    if m_max > design.J:
        raise ValueError("m_max exceeds the design bandlimit")

    bound = 4.0 * weights.D ** 2 * weights.d ** 2 * weights.r ** 2
    sup_bound = bound * weights.zeta_inf ** 2
    grid = np.linspace(0.0, 1.0, grid_points)
    fm = eval_matrix(design.basis, max(m_max, len(c)), grid)
    c_pad = np.zeros(fm.shape[1])
    c_pad[: len(c)] = c
    op = _full_operator_block(design, m_max, max(m_max, len(c)))
    for m in range(1, m_max + 1):
        tm = op[:m, :m]
        g_m = op[:m, : len(c)] @ c
        phi_m = np.linalg.solve(tm, g_m)
        diff = np.zeros(max(m, len(c)))
        diff[:m] = phi_m
        diff[: len(c)] -= c
        gap_sq = float(diff @ diff)
        if gap_sq / weights.gamma_at(m) > bound * (1.0 + _RTOL):
            return False
        if float(phi_m @ phi_m) > bound * (1.0 + _RTOL):
            return False
        pad = np.zeros(fm.shape[1])
        pad[:m] = phi_m
        gap_vals = fm @ (pad - c_pad)
        if float(np.max(gap_vals * gap_vals)) > sup_bound * (1.0 + _RTOL):
            return False
    return True


def mixing_admissibility(s: float, r_exp: float) -> bool:
    """Arithmetic-decay admissibility: 4 - r < r*s together with r < 1/6."""
    if not s > 0:
        raise ValueError("decay exponent s must be positive")
    if not 0 < r_exp < 1:
        raise ValueError("block exponent r must lie in (0, 1)")
    return (4.0 - r_exp < r_exp * s) and (r_exp < 1.0 / 6.0)


@dataclass(frozen=True)
class TheoreticalQuantities:
    """Deterministic benchmarks for one (design, phi, n) triple."""

    small_delta_T: tuple
    M_minus: int
    M_plus: int
    bias_sq: tuple
    m_star: int
    oracle_rate: float
    m_diamond: int
    minimax_rate: float
    growth_ratio: float  # log(n) (M_plus+1)^2 Delta^T_{M_plus+1} / n, finite-n transparency value


def compute_theoretical_quantities(design: "JointDesign", phi_coeffs: np.ndarray,
                                   weights: WeightSequences, n: int,
                                   cap: int | None = None) -> TheoreticalQuantities:
    """All population-side benchmarks for a design and truth at sample size n."""
    if cap is None:
        cap = candidate_cap(n)
    m_minus, m_plus = theoretical_truncations(design, n, cap)
    a = operator_inv_norm_sq_sequence(design, max(cap, m_plus + 1))
    sd = tuple(delta_triplet(a, m)[2] for m in range(1, m_minus + 1))
    k_max = min(design.J, len(np.asarray(phi_coeffs)))
    k_max = max(k_max, m_minus)
    bs = tuple(bias_sq(phi_coeffs, design, m, k_max) for m in range(1, m_minus + 1))
    m_star, oracle_rate = oracle_dimension(bs, sd, m_minus, n)
    m_diamond, minimax_rate = minimax_dimension_rate(n, weights.case)
    delta_up = delta_triplet(a, m_plus + 1)[0]
    growth = math.log(n) * (m_plus + 1) ** 2 * delta_up / n
    return TheoreticalQuantities(
        small_delta_T=sd, M_minus=m_minus, M_plus=m_plus, bias_sq=bs,
        m_star=m_star, oracle_rate=oracle_rate,
        m_diamond=m_diamond, minimax_rate=minimax_rate, growth_ratio=growth,
    )
