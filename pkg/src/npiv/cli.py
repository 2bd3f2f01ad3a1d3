"""Command-line entry point: estimate, simulate, experiment, rates."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .basis import BasisFamily
from .dgp import generate_sample
from .galerkin import read_sample_csv, write_sample_csv
from .harness import (
    _KAPPA_PRESETS,
    _realized,
    load_experiment_config,
    run_experiment,
    run_rate_study,
)
from .selection import PenaltyConfig, adaptive_estimate, trace_to_csv


def _parse_kappa(text: str) -> float:
    key = text.strip().lower()
    if key in _KAPPA_PRESETS:
        return _KAPPA_PRESETS[key]
    return float(text)


def _cmd_estimate(args) -> int:
    sample = read_sample_csv(args.data)
    config = PenaltyConfig(kappa=_parse_kappa(args.kappa),
                           sigma_multiplier=args.sigma_multiplier,
                           threshold_form=args.threshold_form)
    basis = BasisFamily(kind=args.basis)
    est, trace = adaptive_estimate(sample, basis, basis, config, m_cap=args.m_cap)
    print(f"n = {sample.n}  candidate cap M_hat = {trace.m_hat_cap}  selected m_hat = {trace.m_selected}")
    print("theta_hat = [" + ", ".join(f"{v:.8g}" for v in est.theta) + "]")
    if est.thresholded:
        print("note: estimate was thresholded to zero (ill-conditioned system)")
    print("m  delta_hat  lambda_hat  small_delta_hat  sigma_hat_sq  pen_hat  contrast  selected")
    for rec in trace.per_m:
        flag = 1 if rec.m == trace.m_selected else 0
        print(f"{rec.m}  {rec.delta_hat:.6g}  {rec.lambda_hat:.6g}  {rec.small_delta_hat:.6g}  "
              f"{rec.sigma_hat_sq:.6g}  {rec.pen_hat:.6g}  {rec.contrast:.6g}  {flag}")
    if args.trace:
        trace_to_csv(trace, args.trace)
        print(f"trace written to {args.trace}")
    return 0


def _cmd_simulate(args) -> int:
    config = load_experiment_config(args.config)
    n = args.n if args.n is not None else config.n_grid[0]
    real = _realized(config.design)
    seed = np.random.SeedSequence((config.seed, n, 0))
    sample = generate_sample(real.design, real.phi_coeffs, real.error,
                             real.dependence, n, seed)
    write_sample_csv(sample, args.out)
    print(f"wrote {n} rows to {args.out} (dependence: {real.dependence.kind})")
    return 0


def _cmd_experiment(args) -> int:
    config = load_experiment_config(args.config)
    result = run_experiment(config)
    print(f"records: {result.records_path}")
    print(f"summary: {result.summary_path}")
    header = ("n", "mean_mise_adaptive", "mean_mise_oracle", "oracle_ratio", "theory_benchmark")
    print("  ".join(header))
    for row in result.summary:
        print("  ".join(f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c])
                        for c in header))
    return 0


def _cmd_rates(args) -> int:
    config = load_experiment_config(args.config)
    report = run_rate_study(config)
    print("n  mean_mise_minimax  mean_mise_adaptive")
    for n, mm, ad in zip(report.n_grid, report.mean_minimax, report.mean_adaptive):
        print(f"{n}  {mm:.6g}  {ad:.6g}")
    print(f"slope (rate-optimal fixed dimension): {report.slope_minimax:.4f}")
    print(f"slope (adaptive):                     {report.slope_adaptive:.4f}")
    if report.expected_slope is not None:
        print(f"expected minimax slope:               {report.expected_slope:.4f}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="npiv",
                                     description="Adaptive thresholded LS estimation for instrumental regression")
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="run the adaptive estimator on a y,z,w CSV file")
    p_est.add_argument("data", help="CSV file with header y,z,w")
    p_est.add_argument("--kappa", default="iid", help="penalty constant: number, 'iid' (144) or 'dependent' (2016)")
    p_est.add_argument("--sigma-multiplier", type=float, default=2.0)
    p_est.add_argument("--threshold-form", choices=["squared", "unsquared"], default="squared")
    p_est.add_argument("--basis", choices=["constant-plus-cosine", "full-trigonometric"],
                       default="constant-plus-cosine")
    p_est.add_argument("--m-cap", type=int, default=None, help="override the candidate cap")
    p_est.add_argument("--trace", default=None, help="write the selection trace CSV here")
    p_est.set_defaults(func=_cmd_estimate)

    p_sim = sub.add_parser("simulate", help="emit one synthetic sample as CSV")
    p_sim.add_argument("config", help="experiment config file")
    p_sim.add_argument("--out", default="sample.csv")
    p_sim.add_argument("--n", type=int, default=None, help="sample size (default: first n_grid entry)")
    p_sim.set_defaults(func=_cmd_simulate)

    p_exp = sub.add_parser("experiment", help="full Monte Carlo experiment")
    p_exp.add_argument("config", help="experiment config file")
    p_exp.set_defaults(func=_cmd_experiment)

    p_rates = sub.add_parser("rates", help="rate-slope report")
    p_rates.add_argument("config", help="experiment config file")
    p_rates.set_defaults(func=_cmd_rates)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
