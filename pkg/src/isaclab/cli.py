"""Command line interface.

Subcommands:

* ``isaclab run``   — execute a sweep experiment, write CSV/JSON (optionally a
                      figure next to it), print a short summary.
* ``isaclab bound`` — print the MSE lower bounds and water-filling allocations
                      for a configuration.
* ``isaclab solve`` — run one design instance and print the verification report.

Exit codes: 0 success, 2 when every solved instance was infeasible, 1 on error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .bounds import lower_bound_full, lower_bound_rank_def, water_fill
from .design import solve_mmse_sinr, verify_solution
from .harness import (
    ExperimentSpec,
    emit_results,
    empirical_checks,
    load_config,
    preset_spec,
    run_sinr_sweep,
    run_user_sweep,
)
from .hermitian import eigh_desc
from .model import coherence_factor, gen_channels, target_covariance


def _build_spec(args) -> ExperimentSpec:
    if args.config:
        spec = load_config(args.config)
        if args.seed is not None:
            spec = replace(spec, base=spec.base.with_(rng_seed=args.seed))
    elif args.preset:
        spec = preset_spec(args.preset, seed=args.seed if args.seed is not None else 0)
    else:
        raise SystemExit("one of --config or --preset is required")
    if args.trials is not None:
        spec = replace(spec, trials=args.trials)
    return spec


def _cmd_run(args) -> int:
    spec = _build_spec(args)
    if spec.sweep_kind == "users":
        rows = run_user_sweep(spec, workers=args.workers)
    else:
        rows = run_sinr_sweep(spec, workers=args.workers)
    fmt = args.format or spec.output_format
    out = args.out or spec.output_path or f"results.{fmt}"
    emit_results(rows, format=fmt, path=out)
    print(f"wrote {len(rows)} rows to {out}")

    if args.figures:
        from .figures import render_sweep_figure

        stem = out.rsplit(".", 1)[0]
        png = render_sweep_figure(rows, spec.sweep_kind, stem + ".png")
        print(f"wrote figure to {png}")

    if args.empirical:
        for check in empirical_checks(spec):
            print(
                "empirical-check sweep={sweep_value:g}: analytic(physical)={analytic_physical:.6e} "
                "empirical={empirical:.6e} rel={rel_deviation:.3%}".format(**check)
            )

    n_opt = sum(r.solver_status_counts.get("Optimal", 0) for r in rows)
    n_inf = sum(r.solver_status_counts.get("Infeasible", 0) for r in rows)
    if n_opt == 0 and n_inf > 0:
        return 2
    return 0


def _cmd_bound(args) -> int:
    spec = _build_spec(args)
    cfg = spec.base
    r_gt = target_covariance(spec.scene, cfg.n_tx)
    sig_gt = eigh_desc(r_gt).eigenvalues
    c = coherence_factor(cfg)
    d_eff = (cfg.noise_sense_w / c) ** 0.5
    wf = water_fill(sig_gt, d_eff, cfg.power_budget_w)
    print(f"target spectrum      : {np.array2string(sig_gt, precision=6)}")
    print(f"water-fill allocation: {np.array2string(wf.allocations, precision=6)}")
    print(f"water level (1/sqrt(lambda)): {wf.water_level:.6e}  active: {wf.active_count}")
    full = lower_bound_full(wf.allocations, sig_gt, cfg.noise_sense_w, cfg.n_rx, c=c)
    print(f"full-rank MSE lower bound ({cfg.normalization_mode} mode): {full:.9e}")
    if cfg.n_users < cfg.n_tx:
        wf_k = water_fill(sig_gt[: cfg.n_users], d_eff, cfg.power_budget_w)
        rank_k = lower_bound_rank_def(
            wf_k.allocations, sig_gt, cfg.noise_sense_w, cfg.n_rx, c=c
        )
        print(f"rank-{cfg.n_users} MSE lower bound: {rank_k:.9e}")
    return 0


def _cmd_solve(args) -> int:
    spec = _build_spec(args)
    cfg = spec.base
    r_gt = target_covariance(spec.scene, cfg.n_tx)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.rng_seed])))
    h = gen_channels(cfg, rng)
    sol = solve_mmse_sinr(h, r_gt, cfg, with_augmentation=not args.no_dof)
    report = verify_solution(sol, h, r_gt, cfg)
    print(f"objective: {sol.objective:.9e}  dual gap: {sol.dual_gap:.3e}  "
          f"iters: {sol.solver_iters}")
    print(report)
    return 2 if sol.status == "Infeasible" else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="isaclab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--preset", choices=["fig2", "fig3", "desk"], help="built-in preset")
    common.add_argument("--seed", type=int, default=None, help="RNG seed")
    common.add_argument("--trials", type=int, default=None, help="channel realizations per point")

    p_run = sub.add_parser("run", parents=[common], help="run a sweep experiment")
    p_run.add_argument("--out", help="output file path")
    p_run.add_argument("--format", choices=["csv", "json"], default=None)
    p_run.add_argument("--empirical", action="store_true",
                       help="cross-check points with the Monte-Carlo estimator")
    p_run.add_argument("--figures", action="store_true",
                       help="render a PNG figure next to the output file")
    p_run.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p_run.set_defaults(func=_cmd_run)

    p_bound = sub.add_parser("bound", parents=[common], help="print bounds and allocations")
    p_bound.set_defaults(func=_cmd_bound)

    p_solve = sub.add_parser("solve", parents=[common], help="solve one design instance")
    p_solve.add_argument("--no-dof", action="store_true", help="disable the augmentation block")
    p_solve.set_defaults(func=_cmd_solve)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:  # CLI boundary: report and signal failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
