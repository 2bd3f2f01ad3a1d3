"""Simulation designs with analytically known operators, truths, and mixing rates.

The joint density of (Z, W) on [0, 1]^2 is the diagonal expansion

    p(z, w) = 1 + sum_{j >= 2} lambda_j f_j(z) f_j(w),

which has exactly uniform marginals (every f_j with j >= 2 integrates to
zero), stays bounded below by 1 - 2 sum lambda_j, and realizes the operator
matrix diag(1, lambda_2, ...).  Scales are chosen so the density floor is at
least 0.05.  Endogeneity enters through the j = 2 channel:
sigma(Z, W) = c_endo (f_2(Z) - lambda_2 f_2(W)) has E[sigma | W] = 0 exactly
because E[f_2(Z) | W] = lambda_2 f_2(W).

Sampling paths: iid rejection draws; a regeneration chain (redraw with
probability 1 - rho, else repeat: beta_k <= rho^k exactly); and a copula-type
chain driven by a latent Gaussian AR(1) (absolutely continuous pair laws,
beta_k <= rho^k via the latent chain).  Every generator consumes an explicit
random stream, so replications are order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtr

from .basis import CONSTANT_PLUS_COSINE, BasisFamily, antiderivative, eval_basis, eval_matrix
from .galerkin import Sample
from .theory import SmoothnessCase, WeightSequences, zeta_sup_constant

# Density floor: 2 sum lambda_j <= 1 - DENSITY_FLOOR keeps p >= DENSITY_FLOOR.
DENSITY_FLOOR = 0.05
_MASS_BUDGET = 1.0 - DENSITY_FLOOR

_DEP_KINDS = ("iid", "regeneration", "copula_ar")


@dataclass(frozen=True)
class JointDesign:
    """Diagonalized joint density; lam holds lambda_2..lambda_J."""

    lam: np.ndarray
    J: int
    basis: BasisFamily

    def __post_init__(self) -> None:
        lam = np.asarray(self.lam, dtype=float)
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        if self.J < 1 or len(lam) != self.J - 1:
            raise ValueError("need len(lam) == J - 1 with J >= 1")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("lambda coefficients must be finite and nonnegative")
        if 2.0 * float(np.sum(lam)) > _MASS_BUDGET + 1e-12:
            raise ValueError(f"2 sum lambda = {2 * float(np.sum(lam))} exceeds {_MASS_BUDGET}")

    def diag(self, m: int) -> np.ndarray:
        """Operator diagonal (1, lambda_2, ..., lambda_m), zero past the bandlimit."""
        out = np.zeros(m)
        out[0] = 1.0
        k = min(m, self.J)
        out[1:k] = self.lam[: k - 1]
        return out

    @property
    def envelope(self) -> float:
        """Upper bound 1 + 2 sum lambda_j for rejection sampling."""
        return 1.0 + 2.0 * float(np.sum(self.lam))

    def density(self, z, w):
        """p(z, w), broadcasting over arrays."""
        za, wa = np.asarray(z, dtype=float), np.asarray(w, dtype=float)
        out = np.ones(np.broadcast_shapes(za.shape, wa.shape))
        for j, lam_j in enumerate(self.lam, start=2):
            out = out + lam_j * np.asarray(eval_basis(self.basis, j, za)) \
                * np.asarray(eval_basis(self.basis, j, wa))
        if out.ndim == 0:
            return float(out)
        return out


@dataclass(frozen=True)
class ErrorModel:
    """Exogenous noise level and endogeneity scale."""

    sigma_eps: float
    c_endo: float = 0.0

    def __post_init__(self) -> None:
        if self.sigma_eps < 0:
            raise ValueError("sigma_eps must be nonnegative")


@dataclass(frozen=True)
class DependenceModel:
    """iid, regeneration(rho), or copula_ar(rho) with 0 <= rho < 1."""

    kind: str = "iid"
    rho: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in _DEP_KINDS:
            raise ValueError(f"unknown dependence kind: {self.kind!r}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.kind == "iid" and self.rho != 0.0:
            raise ValueError("iid requires rho = 0")


def _design_scale(case: SmoothnessCase, J: int) -> float:
    # Maximal s with 2 s sum_{j>=2} upsilon_j^(-1/2) <= mass budget, capped at
    # the budget itself so single-term designs stay below the floor too.
    weights_sum = float(np.sum(case.upsilon(np.arange(2, J + 1)) ** -0.5))
    if weights_sum == 0.0:
        return _MASS_BUDGET
    return min(_MASS_BUDGET, _MASS_BUDGET / (2.0 * weights_sum))


def build_design(case: SmoothnessCase, J: int, basis: BasisFamily | None = None) -> JointDesign:
    """Diagonal design lambda_j = s upsilon_j^(-1/2) at the maximal feasible scale."""
    if J < 2:
        raise ValueError("bandlimit J must be >= 2")
    if basis is None:
        basis = BasisFamily()
    s = _design_scale(case, J)
    if s < 1e-6:
        raise ValueError(f"infeasible design: scale {s} below 1e-6 for J = {J}")
    lam = s * case.upsilon(np.arange(2, J + 1)) ** -0.5
    return JointDesign(lam=lam, J=J, basis=basis)


def certified_weights(case: SmoothnessCase, design: JointDesign, r: float,
                      j_max: int | None = None) -> WeightSequences:
    """Weight sequences whose link constants d = D = max(1/s, 1) the design attains."""
    if j_max is None:
        j_max = max(design.J, 16)
    s = _design_scale(case, design.J)
    expected = s * case.upsilon(np.arange(2, design.J + 1)) ** -0.5
    if not np.allclose(design.lam, expected, rtol=1e-12, atol=0.0):
        raise ValueError("design does not match the construction for this case")
    js = np.arange(1, j_max + 1)
    d = max(1.0 / s, 1.0)
    return WeightSequences(
        gamma=case.gamma(js), upsilon=case.upsilon(js), r=r,
        d=d, D=d, case=case, zeta_inf=zeta_sup_constant(case),
    )


def sample_joint(design: JointDesign, rng: np.random.Generator, size: int | None = None):
    """Exact draws from the design density by rejection against the uniform envelope.

    Per round the proposal batch matches the remaining deficit, so the draw is
    deterministic given the generator state.  Returns a (z, w) pair of floats
    for size None, else two arrays of length size.
    """
    need = 1 if size is None else int(size)
    if need < 0:
        raise ValueError("size must be nonnegative")
    env = design.envelope
    z_out = np.empty(need)
    w_out = np.empty(need)
    filled = 0
    while filled < need:
        k = need - filled
        z = rng.random(k)
        w = rng.random(k)
        u = rng.random(k)
        accept = u * env <= design.density(z, w)
        hits = int(np.count_nonzero(accept))
        z_out[filled: filled + hits] = z[accept]
        w_out[filled: filled + hits] = w[accept]
        filled += hits
    if size is None:
        return float(z_out[0]), float(w_out[0])
    return z_out, w_out


def _conditional_quantile(design: JointDesign, w: np.ndarray, v: np.ndarray) -> np.ndarray:
    # Solve F(z | w) = v with F(z | w) = z + sum_j lambda_j f_j(w) F_j(z);
    # dF/dz = p(z | w) >= DENSITY_FLOOR, so bisection has a unique root.
    coef = np.empty((len(w), design.J - 1))
    for idx, j in enumerate(range(2, design.J + 1)):
        coef[:, idx] = design.lam[idx] * np.asarray(eval_basis(design.basis, j, w))
    lo = np.zeros_like(v)
    hi = np.ones_like(v)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        cdf = mid.copy()
        for idx, j in enumerate(range(2, design.J + 1)):
            cdf += coef[:, idx] * np.asarray(antiderivative(design.basis, j, mid))
        go_right = cdf < v
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
    return 0.5 * (lo + hi)


def sample_path(design: JointDesign, dep: DependenceModel, n: int,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """A stationary path of n pairs under the requested dependence model.

    Stream consumption contracts (documented so seeds reproduce):
    iid draws via sample_joint(size=n); regeneration draws the n-1 keep/redraw
    uniforms first, then the fresh pairs (rho = 0 delegates to the iid path
    bit for bit); copula_ar draws n standard normals, then n conditional
    quantile uniforms.
    """
    if n < 1:
        raise ValueError("path length must be >= 1")
    if dep.kind == "iid" or (dep.kind == "regeneration" and dep.rho == 0.0):
        z, w = sample_joint(design, rng, n)
        return z, w
    if dep.kind == "regeneration":
        keep = rng.random(n - 1) < dep.rho
        steps = np.empty(n, dtype=np.int64)
        steps[0] = 0
        steps[1:] = ~keep
        pos = np.cumsum(steps)
        fresh_z, fresh_w = sample_joint(design, rng, int(pos[-1]) + 1)
        return fresh_z[pos], fresh_w[pos]
    # copula_ar: latent stationary Gaussian AR(1), W by probability integral
    # transform, Z by conditional-quantile transform of p(z | w).
    rho = dep.rho
    eta = rng.standard_normal(n)
    if n > 1:
        eta[1:] *= math.sqrt(1.0 - rho * rho)
    x = lfilter([1.0], [1.0, -rho], eta)
    w = ndtr(x)
    v = rng.random(n)
    if design.J < 2:
        return v, w
    z = _conditional_quantile(design, w, v)
    return z, w


def structural_coeffs(p: float, r: float, J: int, signs=None) -> np.ndarray:
    """Coefficients c_j = s' sign_j j^(-p-1) with sum j^(2p) c_j^2 = (0.9 r)^2."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    if not r > 0:
        raise ValueError("r must be positive")
    if J < 1:
        raise ValueError("J must be >= 1")
    if signs is None:
        signs = np.ones(J)
    signs = np.asarray(signs, dtype=float)
    if len(signs) != J or not np.all(np.abs(signs) == 1.0):
        raise ValueError("signs must be a +-1 pattern of length J")
    scale = 0.9 * r / math.sqrt(math.fsum(1.0 / (j * j) for j in range(1, J + 1)))
    js = np.arange(1, J + 1, dtype=float)
    return scale * signs * js ** (-p - 1.0)


def phi_values(coeffs: np.ndarray, basis: BasisFamily, x) -> np.ndarray:
    """Evaluate phi = sum_j c_j f_j at x."""
    c = np.asarray(coeffs, dtype=float)
    return eval_matrix(basis, len(c), x) @ c


def generate_sample(design: JointDesign, phi_coeffs: np.ndarray, err: ErrorModel,
                    dep: DependenceModel, n: int, seed) -> Sample:
    """Draw a sample of size n: Y = phi(Z) + sigma(Z, W) + eps, deterministic in seed.

    seed may be an integer or a numpy SeedSequence; the path and the noise use
    independently spawned sub-streams.
    """
    c = np.asarray(phi_coeffs, dtype=float)
    if len(c) > design.J:
        raise ValueError("phi bandlimit exceeds the design bandlimit")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    path_ss, noise_ss = ss.spawn(2)
    z, w = sample_path(design, dep, n, np.random.default_rng(path_ss))
    eps = np.random.default_rng(noise_ss).standard_normal(n) * err.sigma_eps
    lam2 = float(design.lam[0]) if design.J >= 2 else 0.0
    endo = err.c_endo * (np.asarray(eval_basis(design.basis, 2, z))
                         - lam2 * np.asarray(eval_basis(design.basis, 2, w)))
    y = phi_values(c, design.basis, z) + endo + eps
    return Sample(y=y, z=z, w=w)


def beta_bound(dep: DependenceModel, k: int) -> float:
    """Certified upper bound on the mixing coefficient beta_k.

    iid: 0 for k >= 1.  regeneration: rho^k (renewal argument).  copula_ar:
    rho^k, inherited from the latent Gaussian AR(1) whose lag-k correlation is
    rho^k and whose beta coefficient is at most its correlation (numerically
    certified in the test suite); the observed pairs are measurable functions
    of the latent chain plus independent innovations, which cannot increase
    beta.
    """
    if k < 0:
        raise ValueError("lag must be nonnegative")
    if k == 0:
        return 1.0
    if dep.kind == "iid":
        return 0.0
    return dep.rho ** k


def gamma_b_bound(dep: DependenceModel) -> float:
    """Upper bound on sum_k (k+1)^2 beta_k: closed form (1+rho)/(1-rho)^3."""
    if dep.kind == "iid":
        return 1.0
    rho = dep.rho
    return (1.0 + rho) / (1.0 - rho) ** 3


@dataclass(frozen=True)
class DesignConfig:
    """Serializable description of one simulation scenario."""

    case: SmoothnessCase
    J: int
    r: float
    sigma_eps: float
    c_endo: float
    dependence: DependenceModel = DependenceModel()
    basis_kind: str = CONSTANT_PLUS_COSINE


@dataclass(frozen=True)
class RealizedDesign:
    """A DesignConfig expanded into concrete objects."""

    design: JointDesign
    weights: WeightSequences
    phi_coeffs: np.ndarray
    error: ErrorModel
    dependence: DependenceModel


def realize_design(cfg: DesignConfig) -> RealizedDesign:
    """Build the design, certified weights, truth, and error model for a scenario."""
    basis = BasisFamily(kind=cfg.basis_kind)
    design = build_design(cfg.case, cfg.J, basis)
    weights = certified_weights(cfg.case, design, cfg.r)
    phi = structural_coeffs(cfg.case.p, cfg.r, cfg.J)
    phi.setflags(write=False)
    return RealizedDesign(design=design, weights=weights, phi_coeffs=phi,
                          error=ErrorModel(cfg.sigma_eps, cfg.c_endo),
                          dependence=cfg.dependence)


def design_config_to_mapping(cfg: DesignConfig) -> dict[str, str]:
    """Flat key-value form of a scenario (the design block of config files)."""
    return {
        "case": cfg.case.kind,
        "p": repr(cfg.case.p),
        "a": repr(cfg.case.a),
        "J": str(cfg.J),
        "r": repr(cfg.r),
        "sigma_eps": repr(cfg.sigma_eps),
        "c_endo": repr(cfg.c_endo),
        "dependence": cfg.dependence.kind,
        "rho": repr(cfg.dependence.rho),
        "basis": cfg.basis_kind,
    }


def design_config_from_mapping(mapping) -> DesignConfig:
    """Parse the design block; unknown keys raise to catch typos early."""
    known = {"case", "p", "a", "J", "r", "sigma_eps", "c_endo", "dependence", "rho", "basis"}
    extra = set(mapping) - known
    if extra:
        raise ValueError(f"unknown design keys: {sorted(extra)}")
    try:
        case = SmoothnessCase(kind=mapping["case"].strip().upper(),
                              p=float(mapping["p"]), a=float(mapping["a"]))
        dep = DependenceModel(kind=mapping.get("dependence", "iid").strip(),
                              rho=float(mapping.get("rho", "0")))
        return DesignConfig(
            case=case, J=int(mapping["J"]), r=float(mapping["r"]),
            sigma_eps=float(mapping["sigma_eps"]), c_endo=float(mapping.get("c_endo", "0")),
            dependence=dep, basis_kind=mapping.get("basis", CONSTANT_PLUS_COSINE).strip(),
        )
    except KeyError as exc:
        raise ValueError(f"missing design key: {exc.args[0]}") from None
