"""Batch Monte-Carlo experiments: user sweeps, SINR sweeps, result emission.

Each sweep point is averaged over independent channel realizations.  Two
variants are produced per point:

* ``with_dof``: the full relaxed design including the augmentation block; the
  reported MSE is the certified relaxed optimum, which the extracted precoder
  attains exactly.
* ``no_dof``: the design restricted to the K communication streams.  Its
  reported MSE comes from an actually realizable rank-K precoder, chosen as
  the best feasible candidate among the eigenvalue-aligned closed form, the
  rank-one extraction of the augmentation-free relaxation, and (inside an SINR
  sweep) the design carried over from the next-higher threshold.  The carry
  makes the reported curve non-decreasing in the threshold by construction.

When the SINR threshold is zero the design problem does not depend on the
channel draw, so each point is solved once and the per-trial work reduces to
channel-dependent metrics; the emitted rows are identical to the naive
per-trial loop.

Everything is a deterministic function of (spec, seed): channel seeds are
derived per trial index, aggregation runs in trial order, and trials may be
farmed out to a process pool without changing any output bit.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bounds import aligned_precoder, lower_bound_full, lower_bound_rank_def, water_fill
from .design import Precoder, rank_one_extract, solve_mmse_sinr
from .hermitian import eigh_desc
from .model import (
    ChannelSet,
    SystemConfig,
    TargetScene,
    coherence_factor,
    gen_channels,
    target_covariance,
)
from .sensing import achievable_rate, mse_empirical, mse_of_precoder, per_user_sinr

__all__ = [
    "ExperimentSpec",
    "ResultRow",
    "run_user_sweep",
    "run_sinr_sweep",
    "emit_results",
    "default_scene",
    "preset_spec",
    "load_config",
    "empirical_checks",
    "CSV_HEADER",
]

CSV_HEADER = (
    "sweep_value,variant,mse_mean,mse_lower_bound,sinr_min_db,rate_sum,"
    "status_optimal,status_infeasible,trials"
)

VARIANT_NO_DOF = "no_dof"
VARIANT_WITH_DOF = "with_dof"

_SEED_CHANNELS = 0x1517


@dataclass(frozen=True)
class ExperimentSpec:
    """One batch experiment: base config, scene, sweep axis, trial count."""

    base: SystemConfig
    scene: TargetScene
    sweep_kind: str  # "users" | "sinr_db"
    sweep_values: tuple
    trials: int
    variants: tuple = (VARIANT_NO_DOF, VARIANT_WITH_DOF)
    output_path: str | None = None
    output_format: str = "csv"

    def __post_init__(self):
        if self.sweep_kind not in ("users", "sinr_db"):
            raise ValueError(f"unknown sweep kind {self.sweep_kind!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.sweep_kind == "users":
            for k in self.sweep_values:
                if not (1 <= int(k) <= self.base.n_tx):
                    raise ValueError(f"swept user count {k} outside [1, N_T]")
        for v in self.variants:
            if v not in (VARIANT_NO_DOF, VARIANT_WITH_DOF):
                raise ValueError(f"unknown variant {v!r}")
        if self.output_format not in ("csv", "json"):
            raise ValueError(f"unknown output format {self.output_format!r}")


@dataclass(frozen=True)
class ResultRow:
    sweep_value: float
    variant: str
    mse_mean: float
    mse_lower_bound: float
    sinr_min_achieved_db: float
    rate_sum: float
    solver_status_counts: dict
    trials_used: int


def default_scene(n_tx: int, seed: int) -> TargetScene:
    """Default full-rank scene: one scatterer per TX antenna, spread spectrum.

    Angles are evenly spaced over [-60, 60] degrees; RCS amplitudes are drawn
    log-uniformly from [0.5, 2] by the experiment seed and frozen.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x5CE, n_tx])))
    angles = np.deg2rad(np.linspace(-60.0, 60.0, n_tx))
    rcs = np.exp(rng.uniform(math.log(0.5), math.log(2.0), size=n_tx))
    return TargetScene(scatterers=tuple(zip(angles.tolist(), rcs.tolist())))


def _channel_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([seed, _SEED_CHANNELS, *key]))
    )


def _delta_eff(cfg: SystemConfig) -> float:
    return math.sqrt(cfg.noise_sense_w / coherence_factor(cfg))


def _bounds_for(cfg: SystemConfig, sig_gt: np.ndarray, n_users: int):
    """(full-rank bound, rank-K bound) at the water-filled optimum of each."""
    p_t = cfg.power_budget_w
    c = coherence_factor(cfg)
    d_eff = _delta_eff(cfg)
    wf_full = water_fill(sig_gt, d_eff, p_t)
    bound_full = lower_bound_full(
        wf_full.allocations, sig_gt, cfg.noise_sense_w, cfg.n_rx, c=c
    )
    if n_users >= sig_gt.size:
        return bound_full, bound_full
    wf_k = water_fill(sig_gt[:n_users], d_eff, p_t)
    bound_k = lower_bound_rank_def(
        wf_k.allocations, sig_gt, cfg.noise_sense_w, cfg.n_rx, c=c
    )
    return bound_full, bound_k


def _aligned_rank_k(cfg: SystemConfig, r_gt, sig_gt: np.ndarray) -> Precoder:
    """Corollary-form optimum: water-filled beams on the top-K eigendirections."""
    wf = water_fill(sig_gt[: cfg.n_users], _delta_eff(cfg), cfg.power_budget_w)
    return aligned_precoder(r_gt, wf.allocations, cfg.n_users)


def _metrics(h: ChannelSet, precoder: Precoder, cfg: SystemConfig):
    """(constraint-form min SINR, physical-rate sum) of a realized design."""
    sinr_constraint = per_user_sinr(
        h, precoder, cfg.noise_comm_w, include_augmentation=False
    )
    sinr_rate = per_user_sinr(
        h, precoder, cfg.noise_comm_w, include_augmentation=not cfg.assume_sic
    )
    return float(np.min(sinr_constraint)), float(np.sum(achievable_rate(sinr_rate)))


def _realize_rank_k(sol, h: ChannelSet, r_gt, sig_gt, cfg: SystemConfig, carry):
    """Best feasible rank-K precoder among aligned/extraction/carry candidates.

    Returns (record, carry') where record is (status, mse, sinr_min, rate_sum)
    and carry' feeds the next-lower threshold of the same trial.
    """
    gamma = cfg.sinr_threshold_lin
    cands = []

    pal = _aligned_rank_k(cfg, r_gt, sig_gt)
    s_min, rate = _metrics(h, pal, cfg)
    if gamma == 0.0 or s_min >= gamma:
        cands.append((mse_of_precoder(pal, r_gt, cfg), pal, s_min, rate))

    if sol is not None and sol.status != "Infeasible" and sol.precoder is not None:
        pex = Precoder(p_comm=sol.precoder.p_comm, p_aug=None)
        s_min, rate = _metrics(h, pex, cfg)
        if gamma == 0.0 or s_min >= gamma * (1.0 - 1e-9):
            cands.append((mse_of_precoder(pex, r_gt, cfg), pex, s_min, rate))

    if carry is not None:
        cands.append(carry)

    if gamma == 0.0:
        status = "Optimal"  # aligned candidate is the certified closed form
    elif sol is not None:
        status = sol.status
    else:
        status = "MaxIter"

    if not cands:
        return ("Infeasible", None, None, None), None

    best = cands[0]
    for c in cands[1:]:
        if c[0] < best[0]:
            best = c
    record = (status, best[0], best[2], best[3])
    return record, best


def _solve_with_dof_record(h, r_gt, cfg):
    sol = solve_mmse_sinr(h, r_gt, cfg, with_augmentation=True)
    if sol.status == "Infeasible" or sol.precoder is None:
        return (sol.status, None, None, None)
    s_min, rate = _metrics(h, sol.precoder, cfg)
    return (sol.status, sol.objective, s_min, rate)


def _user_point(spec: ExperimentSpec, k_value: int) -> dict:
    """All trial records for one user-count point, keyed by variant."""
    cfg = spec.base.with_(n_users=int(k_value))
    r_gt = target_covariance(spec.scene, cfg.n_tx)
    sig_gt = eigh_desc(r_gt).eigenvalues
    gamma = cfg.sinr_threshold_lin
    channels = [
        gen_channels(cfg, _channel_rng(cfg.rng_seed, int(k_value), t))
        for t in range(spec.trials)
    ]
    records = {v: [] for v in spec.variants}

    if VARIANT_WITH_DOF in spec.variants:
        if gamma == 0.0:
            # the design problem has no channel dependence: solve once
            sol0 = solve_mmse_sinr(channels[0], r_gt, cfg, with_augmentation=True)
            for h in channels:
                pre = rank_one_extract(sol0.q_relaxed, h)
                s_min, rate = _metrics(h, pre, cfg)
                records[VARIANT_WITH_DOF].append((sol0.status, sol0.objective, s_min, rate))
        else:
            for h in channels:
                records[VARIANT_WITH_DOF].append(_solve_with_dof_record(h, r_gt, cfg))

    if VARIANT_NO_DOF in spec.variants:
        if gamma == 0.0:
            pal = _aligned_rank_k(cfg, r_gt, sig_gt)
            mse = mse_of_precoder(pal, r_gt, cfg)
            for h in channels:
                s_min, rate = _metrics(h, pal, cfg)
                records[VARIANT_NO_DOF].append(("Optimal", mse, s_min, rate))
        else:
            for h in channels:
                sol = solve_mmse_sinr(h, r_gt, cfg, with_augmentation=False)
                rec, _ = _realize_rank_k(sol, h, r_gt, sig_gt, cfg, carry=None)
                records[VARIANT_NO_DOF].append(rec)
    return records


def _sinr_trial(spec: ExperimentSpec, trial: int) -> dict:
    """Records for one trial across all thresholds, keyed by (gamma_db, variant).

    Thresholds are processed from the highest down so each lower point can
    inherit the previous feasible rank-K design.
    """
    cfg0 = spec.base
    r_gt = target_covariance(spec.scene, cfg0.n_tx)
    sig_gt = eigh_desc(r_gt).eigenvalues
    h = gen_channels(cfg0, _channel_rng(cfg0.rng_seed, trial))
    records = {}
    carry = None
    for gamma_db in sorted(spec.sweep_values, reverse=True):
        cfg = cfg0.with_(sinr_threshold_db=float(gamma_db))
        if VARIANT_WITH_DOF in spec.variants:
            records[(gamma_db, VARIANT_WITH_DOF)] = _solve_with_dof_record(h, r_gt, cfg)
        if VARIANT_NO_DOF in spec.variants:
            sol = solve_mmse_sinr(h, r_gt, cfg, with_augmentation=False)
            rec, carry = _realize_rank_k(sol, h, r_gt, sig_gt, cfg, carry)
            records[(gamma_db, VARIANT_NO_DOF)] = rec
    return records


def _aggregate(sweep_value, variant, recs, bound) -> ResultRow:
    counts = Counter(status for status, _, _, _ in recs)
    mses = [m for status, m, _, _ in recs if m is not None]
    optimal = [(s, m, g, r) for (s, m, g, r) in recs if s == "Optimal"]
    sinr_min = min((g for _, _, g, _ in optimal), default=math.nan)
    rate = float(np.mean([r for _, _, _, r in optimal])) if optimal else math.nan
    sinr_min_db = 10.0 * math.log10(sinr_min) if sinr_min > 0 else -math.inf
    if math.isnan(sinr_min):
        sinr_min_db = math.nan
    return ResultRow(
        sweep_value=float(sweep_value),
        variant=variant,
        mse_mean=float(np.mean(mses)) if mses else math.nan,
        mse_lower_bound=float(bound),
        sinr_min_achieved_db=sinr_min_db,
        rate_sum=rate,
        solver_status_counts=dict(counts),
        trials_used=len(recs),
    )


def run_user_sweep(spec: ExperimentSpec, workers: int = 1) -> list:
    """MSE versus the number of served users, averaged over channel draws."""
    if spec.sweep_kind != "users":
        raise ValueError("spec.sweep_kind must be 'users'")
    points = [int(k) for k in spec.sweep_values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_point = list(pool.map(_user_point_task, [(spec, k) for k in points]))
    else:
        per_point = [_user_point(spec, k) for k in points]

    sig_gt = eigh_desc(target_covariance(spec.scene, spec.base.n_tx)).eigenvalues
    rows = []
    for k, records in zip(points, per_point):
        bound_full, bound_k = _bounds_for(spec.base, sig_gt, k)
        for variant in spec.variants:
            bound = bound_full if variant == VARIANT_WITH_DOF else bound_k
            rows.append(_aggregate(k, variant, records[variant], bound))
    return rows


def run_sinr_sweep(spec: ExperimentSpec, workers: int = 1) -> list:
    """MSE versus the per-user SINR threshold, averaged over channel draws."""
    if spec.sweep_kind != "sinr_db":
        raise ValueError("spec.sweep_kind must be 'sinr_db'")
    trials = list(range(spec.trials))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_trial = list(pool.map(_sinr_trial_task, [(spec, t) for t in trials]))
    else:
        per_trial = [_sinr_trial(spec, t) for t in trials]

    cfg = spec.base
    sig_gt = eigh_desc(target_covariance(spec.scene, cfg.n_tx)).eigenvalues
    bound_full, bound_k = _bounds_for(cfg, sig_gt, cfg.n_users)
    rows = []
    for gamma_db in spec.sweep_values:
        for variant in spec.variants:
            recs = [per_trial[t][(gamma_db, variant)] for t in trials]
            bound = bound_full if variant == VARIANT_WITH_DOF else bound_k
            rows.append(_aggregate(gamma_db, variant, recs, bound))
    return rows


def _user_point_task(args):
    return _user_point(*args)


def _sinr_trial_task(args):
    return _sinr_trial(*args)


def _fmt(value) -> str:
    return format(float(value), ".12g")


def emit_results(rows, format: str = "csv", path: str = "results.csv") -> None:
    """Write result rows as CSV (fixed header) or JSON with identical fields.

    Output is byte-stable: same rows produce the same file.
    """
    if format == "csv":
        lines = [CSV_HEADER]
        for r in rows:
            lines.append(
                ",".join(
                    [
                        _fmt(r.sweep_value),
                        r.variant,
                        _fmt(r.mse_mean),
                        _fmt(r.mse_lower_bound),
                        _fmt(r.sinr_min_achieved_db),
                        _fmt(r.rate_sum),
                        str(r.solver_status_counts.get("Optimal", 0)),
                        str(r.solver_status_counts.get("Infeasible", 0)),
                        str(r.trials_used),
                    ]
                )
            )
        text = "\n".join(lines) + "\n"
    elif format == "json":
        objs = [
            {
                "sweep_value": float(r.sweep_value),
                "variant": r.variant,
                "mse_mean": float(r.mse_mean),
                "mse_lower_bound": float(r.mse_lower_bound),
                "sinr_min_db": float(r.sinr_min_achieved_db),
                "rate_sum": float(r.rate_sum),
                "status_optimal": int(r.solver_status_counts.get("Optimal", 0)),
                "status_infeasible": int(r.solver_status_counts.get("Infeasible", 0)),
                "trials": int(r.trials_used),
            }
            for r in rows
        ]
        text = json.dumps(objs, indent=2) + "\n"
    else:
        raise ValueError(f"unknown format {format!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def parse_results_csv(path: str) -> list:
    """Read back a CSV written by emit_results (round-trip helper)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if lines[0] != CSV_HEADER:
        raise ValueError("unexpected CSV header")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        rows.append(
            ResultRow(
                sweep_value=float(parts[0]),
                variant=parts[1],
                mse_mean=float(parts[2]),
                mse_lower_bound=float(parts[3]),
                sinr_min_achieved_db=float(parts[4]),
                rate_sum=float(parts[5]),
                solver_status_counts={
                    "Optimal": int(parts[6]),
                    "Infeasible": int(parts[7]),
                },
                trials_used=int(parts[8]),
            )
        )
    return rows


def preset_spec(name: str, seed: int = 0, trials: int | None = None) -> ExperimentSpec:
    """Built-in experiment presets.

    ``fig2``/``fig3`` use the full-scale system (N_T=16, N_R=10, L=30); ``desk``
    is the reduced configuration for fast runs (N_T=8, N_R=4, L=16).
    """
    if name == "desk":
        base = SystemConfig(
            n_tx=8, n_rx=4, n_users=4, frame_len=16, rng_seed=seed,
            sinr_threshold_db=None,
        )
        spec = ExperimentSpec(
            base=base,
            scene=default_scene(8, seed),
            sweep_kind="users",
            sweep_values=(1, 2, 4, 6, 8),
            trials=trials or 100,
        )
    elif name == "fig2":
        base = SystemConfig(
            n_tx=16, n_rx=10, n_users=4, frame_len=30, rng_seed=seed,
            sinr_threshold_db=None,
        )
        spec = ExperimentSpec(
            base=base,
            scene=default_scene(16, seed),
            sweep_kind="users",
            sweep_values=(4, 8, 12, 16),
            trials=trials or 20,
        )
    elif name == "fig3":
        base = SystemConfig(
            n_tx=16, n_rx=10, n_users=8, frame_len=30, rng_seed=seed,
            sinr_threshold_db=0.0,
        )
        spec = ExperimentSpec(
            base=base,
            scene=default_scene(16, seed),
            sweep_kind="sinr_db",
            sweep_values=(0.0, 4.0, 8.0, 12.0),
            trials=trials or 20,
        )
    else:
        raise ValueError(f"unknown preset {name!r}")
    return spec


def load_config(path: str) -> ExperimentSpec:
    """Build an ExperimentSpec from a JSON config document.

    Schema: top-level objects ``system`` (SystemConfig fields), ``scene``
    (scatterers with ``angle_deg``/``rcs`` plus optional ``diag_load``) and
    ``experiment`` (``sweep.kind``, ``sweep.values``, ``trials``, optional
    ``variants``, ``output``).  Angles are degrees in the file; powers dBm.
    """
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    sysd = dict(data.get("system", {}))
    center = sysd.pop("user_center_m", None)
    if center is not None:
        sysd["user_center_m"] = tuple(center)
    base = SystemConfig(**sysd)

    scened = data.get("scene")
    if scened is None:
        scene = default_scene(base.n_tx, base.rng_seed)
    else:
        scatterers = tuple(
            (math.radians(s["angle_deg"]), float(s["rcs"]))
            for s in scened["scatterers"]
        )
        scene = TargetScene(scatterers=scatterers, diag_load=float(scened.get("diag_load", 0.0)))

    expd = data.get("experiment", {})
    sweep = expd.get("sweep", {"kind": "users", "values": [base.n_users]})
    out = expd.get("output", {})
    return ExperimentSpec(
        base=base,
        scene=scene,
        sweep_kind=sweep["kind"],
        sweep_values=tuple(sweep["values"]),
        trials=int(expd.get("trials", 10)),
        variants=tuple(expd.get("variants", (VARIANT_NO_DOF, VARIANT_WITH_DOF))),
        output_path=out.get("path"),
        output_format=out.get("format", "csv"),
    )


def empirical_checks(spec: ExperimentSpec, trials: int = 2000) -> list:
    """Cross-check analytic row values against the Monte-Carlo estimator.

    For each sweep point the full-variant design is rebuilt, its physical-mode
    analytic MSE computed, and the empirical pipeline run; returns one dict per
    point with the relative deviation.
    """
    cfg_phys = spec.base.with_(normalization_mode="physical")
    r_gt = target_covariance(spec.scene, spec.base.n_tx)
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([spec.base.rng_seed, 0xE3]))
    )
    out = []
    for value in spec.sweep_values:
        if spec.sweep_kind == "users":
            cfg = cfg_phys.with_(n_users=int(value))
        else:
            cfg = cfg_phys.with_(sinr_threshold_db=float(value))
        h = gen_channels(cfg, _channel_rng(cfg.rng_seed, 0xE3, int(value)))
        sol = solve_mmse_sinr(h, r_gt, cfg, with_augmentation=True)
        if sol.status == "Infeasible":
            continue
        analytic = mse_of_precoder(sol.precoder, r_gt, cfg)
        empirical = mse_empirical(sol.precoder, spec.scene, cfg, trials, rng)
        out.append(
            {
                "sweep_value": float(value),
                "analytic_physical": analytic,
                "empirical": empirical,
                "rel_deviation": abs(empirical - analytic) / analytic,
            }
        )
    return out
