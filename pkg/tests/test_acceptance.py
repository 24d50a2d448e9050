"""Acceptance checks, one per criterion; each records a PASS/FAIL line in the summary."""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from longfair import metrics, optimize
from longfair.baselines import run_retraining_loop
from longfair.estimation import end_to_end_sensitivity, probe_policy
from longfair.markov import (
    check_aperiodic,
    check_irreducible,
    evolve,
    kernel_power,
    stationary_distribution,
    total_variation,
)
from longfair.models import PRESET_NAMES, GenerativeModel, build_group_kernel, load_dynamics_preset
from longfair.simulate import multi_start_convergence, random_initial_distributions, simulate

from conftest import random_feature_model, random_kernel, record_criterion

TESTS = Path(__file__).resolve().parent


def _stationary_ctx(model, policy, c):
    from longfair.models import group_kernels
    mu = np.stack([stationary_distribution(K) for K in group_kernels(model, policy)])
    return metrics.MetricContext(policy=policy, model=model, mu=mu, c=c)


def test_criterion_1_unique_convergence(model):
    t0 = time.perf_counter()
    rep = optimize.solve(optimize.preset_utilmax_eop(0.8, 0.01), model)
    starts = random_initial_distributions(0, 10, model.n)
    conv = multi_start_convergence(model, rep.policy, starts, T=200)
    from longfair.models import group_kernels
    eig = np.stack([stationary_distribution(K, method="eig") for K in group_kernels(model, rep.policy)])
    eig_tv = max(total_variation(f[s], eig[s]) for f in conv.finals for s in (0, 1))
    elapsed = time.perf_counter() - t0
    ok = rep.feasible and conv.max_pairwise_tv <= 1e-6 and eig_tv <= 1e-6 and elapsed < 10
    record_criterion(1, ok, f"pairwise TV={conv.max_pairwise_tv:.2e} eig TV={eig_tv:.2e} time={elapsed:.2f}s")
    assert ok


def test_criterion_2_constraint_satisfaction(model):
    eps_values = (0.0001, 0.01, 0.026, 0.05)
    utilities, gaps = [], []
    for eps in eps_values:
        rep = optimize.solve(optimize.preset_utilmax_eop(0.8, eps), model)
        ctx = _stationary_ctx(model, rep.policy, 0.8)
        gaps.append(metrics.eop_unfairness(ctx) - eps)
        utilities.append(metrics.utility(ctx))
    satisfied = max(gaps) <= 1e-6
    monotone = all(b >= a - 1e-6 for a, b in zip(utilities, utilities[1:]))
    ok = satisfied and monotone
    record_criterion(2, ok, f"max(eop-eps)={max(gaps):.2e} utilities={np.round(utilities, 6).tolist()}")
    assert ok


def test_criterion_3_maxqual(model):
    mq = optimize.solve(optimize.preset_maxqual(0.8), model)
    ue = optimize.solve(optimize.preset_utilmax_eop(0.8, 0.01), model)
    ctx_mq = _stationary_ctx(model, mq.policy, 0.8)
    ctx_ue = _stationary_ctx(model, ue.policy, 0.8)
    u = metrics.utility(ctx_mq)
    q_mq, q_ue = metrics.total_qualification(ctx_mq), metrics.total_qualification(ctx_ue)
    ok = u >= -1e-6 and q_mq >= q_ue - 1e-6
    record_criterion(3, ok, f"utility={u:.2e} Q(maxqual)={q_mq:.6f} Q(utilmax-eop)={q_ue:.6f}")
    assert ok


def test_criterion_4_markov_oracles():
    rng = np.random.default_rng(0)
    worst_resid = worst_tv = 0.0
    count = 0
    while count < 1000:
        n = int(rng.integers(2, 5))
        K = random_kernel(rng, n, zero_prob=rng.choice([0.0, 0.4]))
        if not (check_irreducible(K) and check_aperiodic(K)):
            continue
        count += 1
        mu = stationary_distribution(K)
        worst_resid = max(worst_resid, np.abs(mu @ K - mu).sum())
        power = np.full(n, 1 / n) @ kernel_power(K, 10_000)
        worst_tv = max(worst_tv, total_variation(mu, power))
    contraction = True
    for _ in range(1000):
        n = int(rng.integers(2, 5))
        K = random_kernel(rng, n)
        p, q = rng.dirichlet(np.ones(n), size=2)
        contraction &= total_variation(evolve(p, K), evolve(q, K)) <= total_variation(p, q) + 1e-15
    ok = worst_resid <= 1e-10 and worst_tv <= 1e-8 and contraction
    record_criterion(4, ok, f"residual={worst_resid:.2e} power TV={worst_tv:.2e} contraction={contraction}")
    assert ok


def _brute_kernel(model, pi, s):
    n = model.n
    K = np.zeros((n, n))
    for x in range(n):
        for k in range(n):
            for d in (0, 1):
                for y in (0, 1):
                    pd = pi[s, x] if d else 1 - pi[s, x]
                    py = model.ell[s, x] if y else 1 - model.ell[s, x]
                    K[x, k] += model.dynamics[s, d, y, x, k] * pd * py
    return K


def test_criterion_5_kernel_oracle():
    rng = np.random.default_rng(0)
    worst_brute = worst_affine = 0.0
    for _ in range(100):
        model = random_feature_model(rng, n=int(rng.integers(2, 5)))
        p1, p2 = rng.random((2, 2, model.n))
        a = rng.random()
        for s in (0, 1):
            worst_brute = max(worst_brute, np.abs(build_group_kernel(model, p1, s) - _brute_kernel(model, p1, s)).max())
            mix = build_group_kernel(model, a * p1 + (1 - a) * p2, s)
            lin = a * build_group_kernel(model, p1, s) + (1 - a) * build_group_kernel(model, p2, s)
            worst_affine = max(worst_affine, np.abs(mix - lin).max())
    ok = worst_brute <= 1e-12 and worst_affine <= 1e-12
    record_criterion(5, ok, f"brute-force diff={worst_brute:.1e} affinity diff={worst_affine:.1e}")
    assert ok


# rows quoted from the printed (column-stochastic) matrices; printed column j
# is row j of the loaded kernel. Keys are (s, d, y); the two-sided tables are
# printed with subscripts in (y, d, s) order, so (0, 0, 1) there is T_100.
QUOTED = [
    ("one-sided-general", (1, 1, 1), 0, [0.53333, 0.4, 0.03333, 0.03333]),
    ("one-sided-general", (0, 1, 1), 2, [0.03333, 0.03333, 0.33333, 0.6]),
    ("one-sided-general", (0, 1, 0), 3, [0.9, 0.03333, 0.03333, 0.03333]),
    ("one-sided-fast", (0, 1, 1), 0, [0.13333, 0.8, 0.03333, 0.033335]),
    ("recourse", (0, 0, 1), 1, [0.03333, 0.5, 0.43333, 0.03333]),
    ("recourse", (1, 0, 0), 1, [0.03333, 0.7, 0.23333, 0.03333]),
    ("recourse", (1, 1, 1), 3, [0.03333, 0.03333, 0.03333, 0.9]),
    ("discouraged", (0, 0, 0), 1, [0.63333, 0.3, 0.03333, 0.03333]),
    ("discouraged", (1, 0, 1), 3, [0.03333, 0.23333, 0.23333, 0.5]),
]


def test_criterion_6_preset_fidelity(model):
    worst = 0.0
    for name, (s, d, y), row, quoted in QUOTED:
        worst = max(worst, np.abs(load_dynamics_preset(name)[s, d, y, row] - quoted).max())
    rng = np.random.default_rng(0)
    positive = True
    for name in PRESET_NAMES:
        m = GenerativeModel(gamma=model.gamma, ell=model.ell, dynamics=load_dynamics_preset(name))
        for _ in range(20):
            pi = rng.uniform(0.01, 0.99, (2, 4))
            positive &= all(np.all(build_group_kernel(m, pi, s) > 0) for s in (0, 1))
    ok = worst <= 1e-3 and positive
    record_criterion(6, ok, f"max quoted-row diff={worst:.1e} all-positive={positive}")
    assert ok


@pytest.mark.slow
def test_criterion_7_baseline_ordering(model, mu0):
    T, m, seeds = 100, 5000, range(10)
    rep = optimize.solve(optimize.preset_utilmax_eop(0.8, 0.026), model)
    long_term = simulate(model, rep.policy, mu0, T=T, c=0.8)
    maxutil = run_retraining_loop(model, mu0, T=T, lam=0, m=m, seeds=seeds, c=0.8)
    short_eop = run_retraining_loop(model, mu0, T=T, lam=2, m=m, seeds=seeds, c=0.8)

    def mean(trajs, key):
        return float(np.mean([t.metrics[key] for t in trajs]))

    u_long, u_short = float(long_term.metrics["utility"].mean()), mean(short_eop, "utility")
    e_long, e_short = float(long_term.metrics["eop"].mean()), mean(maxutil, "eop")
    var_short = float(np.mean(np.var([t.metrics["utility"] for t in maxutil + short_eop], axis=0)))
    ok = u_long > u_short and e_long < e_short and var_short > 0.0
    record_criterion(7, ok, f"utility long={u_long:.4f} > short-eop={u_short:.4f}; "
                            f"eop long={e_long:.4f} < short-maxutil={e_short:.4f}; short var={var_short:.2e}")
    assert ok


def test_criterion_8_estimation(model, mu0):
    spec = optimize.preset_utilmax_eop(0.9, 5e-5)
    probes = {"random": probe_policy("random"), "bias": probe_policy("bias")}

    def run(seed):
        return {r["probe"]: r for r in end_to_end_sensitivity(model, mu0, probes, spec, m=50_000, seed=seed)}

    rows = run(0)
    close = abs(rows["random"]["eop"] - rows["true"]["eop"]) <= 0.05
    ordered = rows["bias"]["eop"] >= rows["random"]["eop"]
    # the verdict uses the configured seed 0; other seeds are reported, not judged
    extra = [run(seed) for seed in (1, 2, 3, 4)]
    n_ordered = sum(r["bias"]["eop"] >= r["random"]["eop"] for r in [rows] + extra)
    n_close = sum(abs(r["random"]["eop"] - r["true"]["eop"]) <= 0.05 for r in [rows] + extra)
    ok = close and ordered
    record_criterion(8, ok, f"seed 0: eop true={rows['true']['eop']:.5f} random={rows['random']['eop']:.5f} "
                            f"bias={rows['bias']['eop']:.5f}; seeds 0-4: within 0.05 {n_close}/5, "
                            f"bias>=random {n_ordered}/5")
    assert ok


def test_criterion_9_invariant_suite():
    files = sorted(str(p) for p in TESTS.glob("test_*.py") if p.name != "test_acceptance.py")
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *files],
                          capture_output=True, text=True, cwd=TESTS.parent)
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0
    record_criterion(9, ok, tail)
    assert ok, proc.stdout[-3000:]
