"""Seeded Monte Carlo experiments: replication records, summaries, rate slopes.

An experiment is a pure function of its config: per replication the seed
stream is derived from (seed, n, rep), so any execution schedule - sequential
or process pool - produces byte-identical CSV output.  Errors are measured
exactly in coefficient space (the basis is orthonormal, so the squared L2
distance is the squared coefficient distance; no quadrature error enters the
rate estimates).

Per replication three estimators are evaluated against the known truth:
the adaptive estimator (data-driven dimension), the oracle estimator at the
deterministic m_star minimizing bias^2 v delta^T/n, and the fixed estimator
at the rate-optimal dimension m_diamond (whose MISE carries the minimax
slope; the adaptive slope is reported alongside).
"""

from __future__ import annotations

import configparser
import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .basis import BasisFamily
from .dgp import (
    DesignConfig,
    RealizedDesign,
    design_config_from_mapping,
    generate_sample,
    realize_design,
)
from .galerkin import assemble, l2_error, threshold_ls_estimate
from .selection import (
    KAPPA_DEPENDENT,
    KAPPA_IID,
    PenaltyConfig,
    adaptive_estimate,
)
from .theory import CASE_PP, TheoreticalQuantities, compute_theoretical_quantities

RECORD_COLUMNS = ("n", "rep", "m_hat", "M_cap", "mise_adaptive", "m_star",
                  "mise_oracle", "minimax_rate", "thresholded_frac")

SUMMARY_COLUMNS = ("n", "replications", "mean_mise_adaptive", "sd_mise_adaptive",
                   "mean_mise_oracle", "sd_mise_oracle", "oracle_ratio",
                   "theory_benchmark", "mean_mise_minimax", "mean_thresholded_frac",
                   "m_star", "m_diamond", "minimax_rate", "growth_ratio", "dependence")

_KAPPA_PRESETS = {"iid": KAPPA_IID, "dependent": KAPPA_DEPENDENT}


@dataclass(frozen=True)
class ExperimentConfig:
    design: DesignConfig
    penalty: PenaltyConfig
    n_grid: tuple
    replications: int
    seed: int
    outputs: str
    workers: int = 1

    def __post_init__(self) -> None:
        grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("n_grid must be nonempty and strictly increasing")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class ReplicationRecord:
    """One (n, rep) outcome.  mise_minimax is internal (not a CSV column)."""

    n: int
    rep: int
    m_hat: int
    m_cap: int
    mise_adaptive: float
    m_star: int
    mise_oracle: float
    minimax_rate: float
    thresholded_frac: float
    mise_minimax: float

    def __post_init__(self) -> None:
        if self.mise_adaptive < 0 or self.mise_oracle < 0:
            raise ValueError("mise values must be nonnegative")
        if not 1 <= self.m_hat <= self.m_cap:
            raise ValueError("need 1 <= m_hat <= M_cap")


@lru_cache(maxsize=32)
def _realized(design_cfg: DesignConfig) -> RealizedDesign:
    return realize_design(design_cfg)


@lru_cache(maxsize=256)
def _theory(design_cfg: DesignConfig, n: int) -> TheoreticalQuantities:
    real = _realized(design_cfg)
    return compute_theoretical_quantities(real.design, real.phi_coeffs, real.weights, n)


def _fixed_dimension_error(sample, basis: BasisFamily, m: int, threshold_form: str,
                           trace, phi_coeffs) -> float:
    if m <= trace.m_hat_cap:
        est = trace.estimates[m - 1]
    else:
        est = threshold_ls_estimate(assemble(sample, m, basis, basis), threshold_form)
    return l2_error(est, phi_coeffs)


def run_replication(config: ExperimentConfig, n: int, rep: int) -> ReplicationRecord:
    """One seeded replication; deterministic given (config.seed, n, rep)."""
    real = _realized(config.design)
    tq = _theory(config.design, n)
    seed = np.random.SeedSequence((config.seed, n, rep))
    sample = generate_sample(real.design, real.phi_coeffs, real.error,
                             real.dependence, n, seed)
    basis = real.design.basis
    est, trace = adaptive_estimate(sample, basis, basis, config.penalty)
    form = config.penalty.threshold_form
    mise_adaptive = l2_error(est, real.phi_coeffs)
    mise_oracle = _fixed_dimension_error(sample, basis, tq.m_star, form, trace, real.phi_coeffs)
    mise_minimax = _fixed_dimension_error(sample, basis, tq.m_diamond, form, trace, real.phi_coeffs)
    thresholded = sum(1 for e in trace.estimates if e.thresholded) / trace.m_hat_cap
    return ReplicationRecord(
        n=n, rep=rep, m_hat=trace.m_selected, m_cap=trace.m_hat_cap,
        mise_adaptive=mise_adaptive, m_star=tq.m_star, mise_oracle=mise_oracle,
        minimax_rate=tq.minimax_rate, thresholded_frac=thresholded,
        mise_minimax=mise_minimax,
    )


def _run_task(args) -> ReplicationRecord:
    config, n, rep = args
    return run_replication(config, n, rep)


@dataclass(frozen=True)
class RatioRow:
    """Per-n oracle comparison; guarded means the denominator hit the floor."""

    n: int
    mean_adaptive: float
    mean_oracle: float
    ratio: float
    guarded: bool
    theory_benchmark: float  # bias^2 v delta^T/n at m_star


def oracle_ratio_report(records, config: ExperimentConfig) -> list[RatioRow]:
    """Per-n mean adaptive MISE over mean oracle MISE, with a guarded denominator."""
    if not records:
        raise ValueError("no records")
    rows = []
    for n in sorted({rec.n for rec in records}):
        group = [rec for rec in records if rec.n == n]
        mean_a = float(np.mean([rec.mise_adaptive for rec in group]))
        mean_o = float(np.mean([rec.mise_oracle for rec in group]))
        guard = group[0].minimax_rate / n
        guarded = mean_o < guard
        ratio = mean_a / max(mean_o, guard)
        benchmark = _theory(config.design, n).oracle_rate
        rows.append(RatioRow(n=n, mean_adaptive=mean_a, mean_oracle=mean_o,
                             ratio=ratio, guarded=guarded, theory_benchmark=benchmark))
    return rows


@dataclass(frozen=True)
class ExperimentResult:
    records: tuple
    summary: tuple  # per-n dicts matching SUMMARY_COLUMNS
    records_path: str
    summary_path: str


def _write_csv(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"writing {path}: {exc}") from exc


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every (n, rep) task, write records/summary/histogram CSVs."""
    tasks = [(config, n, rep) for n in config.n_grid for rep in range(config.replications)]
    if config.workers > 1:
        chunk = max(1, len(tasks) // (config.workers * 8))
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=chunk))
    else:
        records = [_run_task(t) for t in tasks]
    records.sort(key=lambda rec: (rec.n, rec.rep))
    records = tuple(records)

    out_dir = Path(config.outputs)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"creating output directory {out_dir}: {exc}") from exc

    records_path = out_dir / "records.csv"
    _write_csv(records_path, RECORD_COLUMNS, (
        [rec.n, rec.rep, rec.m_hat, rec.m_cap, _fmt(rec.mise_adaptive), rec.m_star,
         _fmt(rec.mise_oracle), _fmt(rec.minimax_rate), _fmt(rec.thresholded_frac)]
        for rec in records
    ))

    ratios = {row.n: row for row in oracle_ratio_report(records, config)}
    summary = []
    for n in config.n_grid:
        group = [rec for rec in records if rec.n == n]
        tq = _theory(config.design, n)
        adaptive = np.array([rec.mise_adaptive for rec in group])
        oracle = np.array([rec.mise_oracle for rec in group])
        row = {
            "n": n,
            "replications": len(group),
            "mean_mise_adaptive": float(np.mean(adaptive)),
            "sd_mise_adaptive": float(np.std(adaptive, ddof=1)) if len(group) > 1 else 0.0,
            "mean_mise_oracle": float(np.mean(oracle)),
            "sd_mise_oracle": float(np.std(oracle, ddof=1)) if len(group) > 1 else 0.0,
            "oracle_ratio": ratios[n].ratio,
            "theory_benchmark": ratios[n].theory_benchmark,
            "mean_mise_minimax": float(np.mean([rec.mise_minimax for rec in group])),
            "mean_thresholded_frac": float(np.mean([rec.thresholded_frac for rec in group])),
            "m_star": tq.m_star,
            "m_diamond": tq.m_diamond,
            "minimax_rate": tq.minimax_rate,
            "growth_ratio": tq.growth_ratio,
            "dependence": config.design.dependence.kind,
        }
        summary.append(row)

    summary_path = out_dir / "summary.csv"
    _write_csv(summary_path, SUMMARY_COLUMNS,
               ([_fmt(row[c]) for c in SUMMARY_COLUMNS] for row in summary))

    hist_rows = []
    for n in config.n_grid:
        counts = {}
        for rec in records:
            if rec.n == n:
                counts[rec.m_hat] = counts.get(rec.m_hat, 0) + 1
        hist_rows.extend([n, m, counts[m]] for m in sorted(counts))
    _write_csv(out_dir / "m_hat_hist.csv", ("n", "m_hat", "count"), hist_rows)

    return ExperimentResult(records=records, summary=tuple(summary),
                            records_path=str(records_path), summary_path=str(summary_path))


def rate_slope(n_grid, mise_means) -> float:
    """OLS slope of log(mise) on log(n)."""
    ns = np.asarray(n_grid, dtype=float)
    ms = np.asarray(mise_means, dtype=float)
    if len(ns) != len(ms):
        raise ValueError("n_grid and mise_means must have equal length")
    if len(ns) < 3:
        raise ValueError("need at least 3 grid points for a slope")
    if np.any(ms <= 0):
        raise ValueError("mise means must be positive")
    return float(np.polyfit(np.log(ns), np.log(ms), 1)[0])


@dataclass(frozen=True)
class RateReport:
    n_grid: tuple
    mean_minimax: tuple  # per-n mean MISE of the fixed-m_diamond estimator
    mean_adaptive: tuple
    slope_minimax: float
    slope_adaptive: float
    expected_slope: float | None  # -2p/(2p+2a+1) for PP; None for PE


def run_rate_study(config: ExperimentConfig, result: ExperimentResult | None = None) -> RateReport:
    """Slopes of the fixed rate-optimal-dimension and adaptive estimators."""
    if result is None:
        result = run_experiment(config)
    means_mm, means_ad = [], []
    for n in config.n_grid:
        group = [rec for rec in result.records if rec.n == n]
        means_mm.append(float(np.mean([rec.mise_minimax for rec in group])))
        means_ad.append(float(np.mean([rec.mise_adaptive for rec in group])))
    case = config.design.case
    expected = None
    if case.kind == CASE_PP:
        expected = -2.0 * case.p / (2.0 * case.p + 2.0 * case.a + 1.0)
    report = RateReport(
        n_grid=tuple(config.n_grid), mean_minimax=tuple(means_mm),
        mean_adaptive=tuple(means_ad),
        slope_minimax=rate_slope(config.n_grid, means_mm),
        slope_adaptive=rate_slope(config.n_grid, means_ad),
        expected_slope=expected,
    )
    out_dir = Path(config.outputs)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"creating output directory {out_dir}: {exc}") from exc
    _write_csv(out_dir / "rates.csv", ("n", "mean_mise_minimax", "mean_mise_adaptive"),
               ([n, _fmt(mm), _fmt(ad)] for n, mm, ad in
                zip(config.n_grid, means_mm, means_ad)))
    return report


def _parse_bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def penalty_from_mapping(mapping) -> PenaltyConfig:
    """Parse the [penalty] block; kappa accepts numbers or preset names."""
    known = {"kappa", "sigma_multiplier", "threshold_form", "y_sq_normalized", "tau"}
    extra = set(mapping) - known
    if extra:
        raise ValueError(f"unknown penalty keys: {sorted(extra)}")
    kappa_text = mapping.get("kappa", "iid").strip().lower()
    if "tau" in mapping:
        from .selection import kappa_for_mixing
        kappa = kappa_for_mixing(float(mapping["tau"]))
    elif kappa_text in _KAPPA_PRESETS:
        kappa = _KAPPA_PRESETS[kappa_text]
    else:
        kappa = float(kappa_text)
    return PenaltyConfig(
        kappa=kappa,
        sigma_multiplier=float(mapping.get("sigma_multiplier", "2")),
        threshold_form=mapping.get("threshold_form", "squared").strip(),
        y_sq_normalized=_parse_bool(mapping.get("y_sq_normalized", "true")),
    )


def load_experiment_config(path) -> ExperimentConfig:
    """Read the INI-style config with [design], [penalty], [experiment] sections."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep keys (e.g. J) case-sensitive
    read = parser.read(path)
    if not read:
        raise OSError(f"cannot read config file {path}")
    if "design" not in parser or "experiment" not in parser:
        raise ValueError(f"{path}: config needs [design] and [experiment] sections")
    design = design_config_from_mapping(dict(parser["design"]))
    penalty = penalty_from_mapping(dict(parser["penalty"])) if "penalty" in parser else PenaltyConfig()
    exp = parser["experiment"]
    known = {"n_grid", "replications", "seed", "outputs", "workers"}
    extra = set(exp) - known
    if extra:
        raise ValueError(f"unknown experiment keys: {sorted(extra)}")
    try:
        n_grid = tuple(int(tok) for tok in exp["n_grid"].replace(",", " ").split())
        return ExperimentConfig(
            design=design, penalty=penalty, n_grid=n_grid,
            replications=int(exp["replications"]), seed=int(exp["seed"]),
            outputs=exp["outputs"].strip(), workers=int(exp.get("workers", "1")),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing experiment key {exc.args[0]}") from None
