"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Desk scale is N_T=8, N_R=4, L=16 with 100 channel realizations per
sweep point; the full-scale smoke uses N_T=16, N_R=10, L=30.
"""

import math

import numpy as np

from isaclab.bounds import (
    aligned_precoder,
    asymptotic_floor,
    lower_bound_full,
    lower_bound_rank_def,
    water_fill,
)
from isaclab.design import Precoder, solve_mmse_sinr
from isaclab.harness import (
    ExperimentSpec,
    default_scene,
    emit_results,
    preset_spec,
    run_sinr_sweep,
    run_user_sweep,
)
from isaclab.hermitian import eigh_desc
from isaclab.model import (
    ChannelSet,
    SystemConfig,
    coherence_factor,
    target_covariance,
)
from isaclab.sensing import (
    mse_analytic,
    mse_empirical,
    mse_of_precoder,
    per_user_sinr,
)


def random_pd(rng, n, spread=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    m = a @ a.conj().T + 0.1 * np.eye(n)
    return m * spread


def random_psd(rng, n, rank):
    a = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return a @ a.conj().T


def random_channels(rng, k, n):
    hm = (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))) / np.sqrt(2)
    return ChannelSet(h=hm, user_positions=np.zeros((k, 2)))


def test_criterion_01_theorem1_ordering_and_equality():
    rng = np.random.default_rng(101)
    n = 6
    cfg = SystemConfig(n_tx=n, n_rx=3, n_users=2, frame_len=8, noise_sense_dbm=30.0)
    worst_slack = np.inf
    for _ in range(1000):
        r_p = random_psd(rng, n, rank=int(rng.integers(1, n + 1)))
        r_gt = random_pd(rng, n)
        mse = mse_analytic(r_p, r_gt, cfg)
        bound = lower_bound_full(
            np.clip(eigh_desc(r_p).eigenvalues, 0.0, None),
            eigh_desc(r_gt).eigenvalues,
            cfg.noise_sense_w,
            cfg.n_rx,
        )
        slack = mse - bound
        worst_slack = min(worst_slack, slack / max(1.0, bound))
        assert slack >= -1e-10 * max(1.0, bound)

    worst_eq = 0.0
    for _ in range(200):
        r_gt = random_pd(rng, n)
        sig = eigh_desc(r_gt).eigenvalues
        wf = water_fill(sig, 1.0, float(rng.uniform(0.5, 20.0)))
        pre = aligned_precoder(r_gt, wf.allocations, n)
        mse = mse_of_precoder(pre, r_gt, cfg)
        bound = lower_bound_full(wf.allocations, sig, cfg.noise_sense_w, cfg.n_rx)
        worst_eq = max(worst_eq, abs(mse - bound) / bound)
        assert abs(mse - bound) <= 1e-10 * bound
    print(
        f"\nACCEPTANCE 1 Theorem-1 ordering/equality: PASS "
        f"(worst slack {worst_slack:.2e}, worst aligned mismatch {worst_eq:.2e})"
    )


def test_criterion_02_corollary1_and_floor():
    rng = np.random.default_rng(102)
    n = 6
    cfg = SystemConfig(n_tx=n, n_rx=3, n_users=2, frame_len=8, noise_sense_dbm=30.0)
    worst_eq, worst_floor = 0.0, 0.0
    for _ in range(200):
        k = int(rng.integers(1, n))
        r_gt = random_pd(rng, n)
        sig = eigh_desc(r_gt).eigenvalues
        wf = water_fill(sig[:k], 1.0, float(rng.uniform(0.5, 20.0)))
        pre = aligned_precoder(r_gt, wf.allocations, k)
        mse = mse_of_precoder(pre, r_gt, cfg)
        bound = lower_bound_rank_def(wf.allocations, sig, cfg.noise_sense_w, cfg.n_rx)
        worst_eq = max(worst_eq, abs(mse - bound) / bound)
        assert abs(mse - bound) <= 1e-10 * bound

        # the unlimited-power limit needs every one of the K channels active
        budget = float(rng.uniform(0.5, 20.0))
        wf_act = water_fill(sig[:k], 1.0, budget)
        while wf_act.active_count < k:
            budget *= 4.0
            wf_act = water_fill(sig[:k], 1.0, budget)
        boosted = aligned_precoder(r_gt, wf_act.allocations * 1e6, k)
        mse_hi = mse_of_precoder(boosted, r_gt, cfg)
        floor = asymptotic_floor(sig, k, n_rx=cfg.n_rx)
        worst_floor = max(worst_floor, abs(mse_hi - floor) / floor)
        assert abs(mse_hi - floor) <= 0.01 * floor
    print(
        f"\nACCEPTANCE 2 Corollary-1 equality/floor: PASS "
        f"(worst equality {worst_eq:.2e}, worst floor gap {worst_floor:.2e})"
    )


def test_criterion_03_water_filling_optimality():
    rng = np.random.default_rng(103)

    # exhaustive grid at resolution P/2000 for N_T in {2, 3}
    for n, seeds in ((2, 3), (3, 3)):
        for s in range(seeds):
            sig = np.sort(rng.uniform(0.1, 10.0, n))[::-1]
            delta = float(rng.uniform(0.3, 2.0))
            p_total = float(rng.uniform(0.5, 10.0))
            wf = water_fill(sig, delta, p_total)

            def objective(alloc):
                return np.sum(1.0 / (alloc / delta**2 + 1.0 / sig), axis=-1)

            f_opt = float(objective(wf.allocations))
            steps = 2000
            h = p_total / steps
            if n == 2:
                i = np.arange(steps + 1)
                alloc = np.stack([i * h, (steps - i) * h], axis=-1)
            else:
                i, j = np.meshgrid(np.arange(steps + 1), np.arange(steps + 1),
                                   indexing="ij")
                k = steps - i - j
                ok = k >= 0
                alloc = np.stack([i[ok] * h, j[ok] * h, k[ok] * h], axis=-1)
            grid_best = float(objective(alloc).min())

            # largest objective change caused by moving two grid steps of power
            step_change = 0.0
            for a in range(n):
                for b in range(n):
                    if a == b:
                        continue
                    moved = wf.allocations.copy()
                    shift = min(2 * h, moved[a])
                    moved[a] -= shift
                    moved[b] += shift
                    step_change = max(step_change, abs(float(objective(moved)) - f_opt))
            assert f_opt <= grid_best + step_change + 1e-12

    worst_kkt = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        sig = np.sort(rng.uniform(0.05, 20.0, n))[::-1]
        delta = float(rng.uniform(0.1, 3.0))
        wf = water_fill(sig, delta, float(rng.uniform(0.01, 50.0)))
        lam = 1.0 / wf.water_level**2
        expr = delta**-2 / (delta**-2 * wf.allocations + 1.0 / sig) ** 2
        active = wf.allocations > 0
        resid = np.abs(expr[active] - lam).max() / lam
        worst_kkt = max(worst_kkt, resid)
        assert resid <= 1e-8
        assert np.all(expr[~active] <= lam * (1 + 1e-12))
    print(
        f"\nACCEPTANCE 3 water-filling grid/KKT: PASS (worst KKT residual {worst_kkt:.2e})"
    )


def test_criterion_04_estimator_consistency():
    rng = np.random.default_rng(104)
    worst = 0.0
    for i in range(10):
        n_tx = int(rng.integers(4, 7))
        n_rx = int(rng.integers(2, 5))
        frame = int(rng.integers(n_tx, 2 * n_tx + 1))
        cfg = SystemConfig(
            n_tx=n_tx, n_rx=n_rx, n_users=2, frame_len=frame,
            noise_sense_dbm=30.0, normalization_mode="physical", rng_seed=i,
        )
        angles = np.sort(rng.uniform(-1.2, 1.2, n_tx))
        scene_rcs = rng.uniform(0.5, 2.0, n_tx)
        from isaclab.model import TargetScene

        scene = TargetScene(tuple(zip(angles.tolist(), scene_rcs.tolist())))
        m = int(rng.integers(2, n_tx + 1))
        p = rng.standard_normal((n_tx, m)) + 1j * rng.standard_normal((n_tx, m))
        pre = Precoder(p_comm=p)
        r_gt = target_covariance(scene, n_tx)
        analytic = mse_of_precoder(pre, r_gt, cfg)
        empirical = mse_empirical(pre, scene, cfg, 10_000, rng)
        rel = abs(empirical - analytic) / analytic
        worst = max(worst, rel)
        assert rel <= 0.02
    print(f"\nACCEPTANCE 4 estimator consistency (1e4 trials x 10): PASS (worst {worst:.3%})")


def test_criterion_05_sdr_tightness():
    rng = np.random.default_rng(105)
    solved = 0
    attempts = 0
    worst_obj, worst_sinr = 0.0, 0.0
    while solved < 200 and attempts < 400:
        attempts += 1
        n = int(rng.integers(4, 7))
        k = int(rng.integers(2, min(4, n) + 1))
        cfg = SystemConfig(
            n_tx=n, n_rx=2, n_users=k, frame_len=2 * n,
            power_budget_dbm=30.0, noise_comm_dbm=float(rng.uniform(5.0, 20.0)),
            noise_sense_dbm=30.0, sinr_threshold_db=float(rng.uniform(0.0, 12.0)),
        )
        r_gt = random_pd(rng, n)
        h = random_channels(rng, k, n)
        sol = solve_mmse_sinr(h, r_gt, cfg)
        if sol.status != "Optimal":
            continue
        solved += 1
        extracted = mse_of_precoder(sol.precoder, r_gt, cfg)
        rel = abs(extracted - sol.objective) / abs(sol.objective)
        worst_obj = max(worst_obj, rel)
        assert rel <= 1e-6
        sinr = per_user_sinr(h, sol.precoder, cfg.noise_comm_w, include_augmentation=False)
        slack = float(np.min(sinr) - cfg.sinr_threshold_lin)
        worst_sinr = min(worst_sinr, slack) if solved > 1 else slack
        assert np.all(sinr >= cfg.sinr_threshold_lin - 1e-6)
    assert solved == 200, f"only {solved} feasible instances in {attempts} attempts"
    print(
        f"\nACCEPTANCE 5 SDR tightness (200 instances): PASS "
        f"(worst objective delta {worst_obj:.2e}, worst SINR slack {worst_sinr:.2e})"
    )


def test_criterion_06_solver_matches_closed_form():
    rng = np.random.default_rng(106)
    worst = 0.0
    for i in range(50):
        paper_scale = i % 2 == 0
        cfg = SystemConfig(
            n_tx=8, n_rx=4, n_users=4, frame_len=16,
            power_budget_dbm=40.0 if paper_scale else 30.0,
            noise_sense_dbm=-100.0 if paper_scale else 30.0,
            sinr_threshold_db=None, rng_seed=i,
        )
        scene = default_scene(8, 1000 + i)
        r_gt = target_covariance(scene, 8)
        sig = eigh_desc(r_gt).eigenvalues
        c = coherence_factor(cfg)
        wf = water_fill(sig, math.sqrt(cfg.noise_sense_w / c), cfg.power_budget_w)
        bound = lower_bound_full(wf.allocations, sig, cfg.noise_sense_w, cfg.n_rx, c=c)
        h = random_channels(rng, cfg.n_users, cfg.n_tx)
        sol = solve_mmse_sinr(h, r_gt, cfg)
        assert sol.status == "Optimal"
        rel = abs(sol.objective - bound) / bound
        worst = max(worst, rel)
        assert rel <= 1e-6
    print(f"\nACCEPTANCE 6 solver vs closed form (50 scenes): PASS (worst {worst:.2e})")


def _desk_user_spec():
    base = SystemConfig(
        n_tx=8, n_rx=4, n_users=4, frame_len=16, rng_seed=2026,
        sinr_threshold_db=None,
    )
    return ExperimentSpec(
        base=base, scene=default_scene(8, 2026),
        sweep_kind="users", sweep_values=(1, 2, 4, 6, 8), trials=100,
    )


def test_criterion_07_fig2_trends():
    rows = run_user_sweep(_desk_user_spec())
    nodof = {r.sweep_value: r for r in rows if r.variant == "no_dof"}
    withdof = {r.sweep_value: r for r in rows if r.variant == "with_dof"}

    ks = sorted(nodof)
    for a, b in zip(ks, ks[1:]):
        decrease = nodof[a].mse_mean - nodof[b].mse_mean
        assert decrease >= -1e-9

    vals = np.array([withdof[k].mse_mean for k in ks])
    cov = vals.std() / vals.mean()
    assert cov <= 0.01

    a, b = nodof[8.0].mse_mean, withdof[8.0].mse_mean
    assert abs(a - b) <= 1e-4 * max(a, b)
    print(
        f"\nACCEPTANCE 7 Fig2 trends (desk, 100 trials): PASS "
        f"(WithDoF CoV {cov:.2e}, K=N_T mismatch {abs(a - b) / max(a, b):.2e})"
    )


def test_criterion_08_fig3_trends():
    base = SystemConfig(
        n_tx=8, n_rx=4, n_users=4, frame_len=16, rng_seed=2027,
        sinr_threshold_db=0.0,
    )
    spec = ExperimentSpec(
        base=base, scene=default_scene(8, 2027),
        sweep_kind="sinr_db", sweep_values=(0.0, 4.0, 8.0, 12.0), trials=100,
    )
    rows = run_sinr_sweep(spec)
    by = {(r.sweep_value, r.variant): r for r in rows}
    gammas = sorted(spec.sweep_values)
    for g in gammas:
        assert by[(g, "with_dof")].mse_mean <= by[(g, "no_dof")].mse_mean
    for a, b in zip(gammas, gammas[1:]):
        assert by[(a, "no_dof")].mse_mean <= by[(b, "no_dof")].mse_mean
    for (g, variant), row in by.items():
        if row.solver_status_counts.get("Optimal", 0):
            assert row.sinr_min_achieved_db >= g - 0.01
    print("\nACCEPTANCE 8 Fig3 trends (desk, 100 trials): PASS")


def test_criterion_09_determinism(tmp_path):
    spec = preset_spec("desk", seed=11)
    for fmt in ("csv", "json"):
        p1 = tmp_path / f"run1.{fmt}"
        p2 = tmp_path / f"run2.{fmt}"
        emit_results(run_user_sweep(spec), format=fmt, path=str(p1))
        emit_results(run_user_sweep(spec), format=fmt, path=str(p2))
        assert p1.read_bytes() == p2.read_bytes()
    print("\nACCEPTANCE 9 determinism (desk preset, csv+json): PASS")


def test_criterion_10_full_scale_smoke():
    spec = preset_spec("fig2", seed=5)
    assert spec.base.n_tx == 16 and spec.sweep_values == (4, 8, 12, 16)
    rows = run_user_sweep(spec)
    total = sum(r.trials_used for r in rows)
    optimal = sum(r.solver_status_counts.get("Optimal", 0) for r in rows)
    frac = optimal / total
    assert frac >= 0.95
    print(f"\nACCEPTANCE 10 full-scale smoke (N_T=16): PASS ({frac:.1%} Optimal)")
