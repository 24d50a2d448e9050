"""Exact distribution-level evolution under a fixed policy."""

import csv
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import metrics
from .errors import InvariantViolation
from .markov import certificates, evolve, stationary_distribution, total_variation, validate_distribution
from .models import FEATURE_STATE, group_kernels

METRIC_NAMES = (
    "utility", "eop", "dp", "inequity",
    "q0", "q1", "loan0", "loan1", "payback0", "payback1",
)
CUMULATIVE = {"cum_utility": "utility", "cum_inequity": "inequity", "cum_eop": "eop"}
CSV_HEADER = (
    ["t", "s", "state", "mu"] + list(METRIC_NAMES) + list(CUMULATIVE)
    + ["policy_kind", "seed", "lambda"]
)


def step_metrics(model, policy, mu, c):
    ctx = metrics.MetricContext(policy=policy, model=model, mu=mu, c=c)
    loan, payback = metrics.loan_and_payback_rates(ctx)
    q = metrics.qualifications(ctx)
    return {
        "utility": metrics.utility(ctx),
        "eop": metrics.eop_unfairness(ctx),
        "dp": metrics.dp_unfairness(ctx),
        "inequity": metrics.inequity(ctx),
        "q0": q[0], "q1": q[1],
        "loan0": loan[0], "loan1": loan[1],
        "payback0": payback[0], "payback1": payback[1],
    }


@dataclass
class Trajectory:
    mus: np.ndarray                      # (T+1, 2, n)
    metrics: dict = field(default_factory=dict)
    policy_kind: str = "long-term"
    seed: object = None
    lam: object = None
    policies: np.ndarray = None          # (T+1, 2, n) when the policy changes per step

    @property
    def T(self):
        return len(self.mus) - 1

    @property
    def cumulative(self):
        return {name: metrics.cumulative_series(self.metrics[src]) for name, src in CUMULATIVE.items()}

    def rows(self):
        cum = self.cumulative if self.metrics else {}
        n = self.mus.shape[2]
        for t, mu in enumerate(self.mus):
            tail = [self.policy_kind, "" if self.seed is None else self.seed, "" if self.lam is None else self.lam]
            per_step = [self.metrics[k][t] for k in METRIC_NAMES] if self.metrics else [""] * len(METRIC_NAMES)
            cums = [cum[k][t] for k in CUMULATIVE] if cum else [""] * len(CUMULATIVE)
            for s in (0, 1):
                for x in range(n):
                    yield [t, s, x, mu[s, x]] + per_step + cums + tail


def record_metrics(model, policies, mus, c):
    """Per-step metric arrays; ``policies`` is one policy or one per step."""
    if model.variant != FEATURE_STATE:
        return {}
    policies = np.asarray(policies, dtype=float)
    if policies.ndim == 2:
        policies = np.broadcast_to(policies, (len(mus),) + policies.shape)
    steps = [step_metrics(model, p, mu, c) for p, mu in zip(policies, mus)]
    return {k: np.array([st[k] for st in steps]) for k in METRIC_NAMES}


def simulate(model, policy, mu0, T=200, c=0.8, kernels=None):
    """Evolve both group distributions ``T`` steps under a time-independent policy."""
    if T < 1:
        raise InvariantViolation("T", "horizon must be >= 1")
    mu0 = np.asarray(mu0, dtype=float)
    for s in (0, 1):
        validate_distribution(mu0[s], model.n)
    K = group_kernels(model, policy) if kernels is None else kernels
    mus = np.empty((T + 1, 2, model.n))
    mus[0] = mu0
    for t in range(T):
        for s in (0, 1):
            mus[t + 1, s] = evolve(mus[t, s], K[s])
    return Trajectory(mus=mus, metrics=record_metrics(model, policy, mus, c))


def step_distances(traj):
    """max over groups of TV(mu_t, mu_{t+1}) for t = 0..T-1."""
    diffs = 0.5 * np.abs(np.diff(traj.mus, axis=0)).sum(axis=2)
    return diffs.max(axis=1)


def detect_convergence(traj, tol=1e-9):
    """First step after which every recorded one-step change is within ``tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    d = step_distances(traj)
    above = np.flatnonzero(d > tol)
    if len(above) == 0:
        return 0
    t = int(above[-1]) + 1
    return t if t < len(d) else None


def random_initial_distributions(seed, count, n):
    """``count`` pairs of group distributions, each a normalised vector of Exp(1) draws."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    e = rng.exponential(1.0, size=(count, 2, n))
    return e / e.sum(axis=2, keepdims=True)


@dataclass
class ConvergenceReport:
    stationary: np.ndarray               # (2, n) or None when uncertified
    convergence_steps: list
    max_pairwise_tv: float
    max_stationary_tv: float             # nan when no stationary point
    converged: bool
    finals: np.ndarray = None


def multi_start_convergence(model, policy, starts, T=200, tol=1e-9, agreement_tol=1e-6):
    """Simulate every start and check they share one limit."""
    starts = np.asarray(starts, dtype=float)
    if len(starts) == 0:
        raise ValueError("starts must be nonempty")
    K = group_kernels(model, policy)
    certified = all(a and b for a, b in (certificates(k) for k in K))
    stationary = np.stack([stationary_distribution(k) for k in K]) if certified else None
    finals, steps = [], []
    for mu0 in starts:
        mus = np.empty((T + 1, 2, model.n))
        mus[0] = mu0
        for t in range(T):
            mus[t + 1] = np.stack([evolve(mus[t, s], K[s]) for s in (0, 1)])
        traj = Trajectory(mus=mus)
        steps.append(detect_convergence(traj, tol))
        finals.append(mus[-1])
    finals = np.array(finals)
    pair_tv = max(
        (max(total_variation(a[s], b[s]) for s in (0, 1)) for a, b in combinations(finals, 2)),
        default=0.0,
    )
    if stationary is None:
        stat_tv = float("nan")
    else:
        stat_tv = max(total_variation(f[s], stationary[s]) for f in finals for s in (0, 1))
    converged = (
        stationary is not None
        and pair_tv <= agreement_tol
        and stat_tv <= agreement_tol
    )
    return ConvergenceReport(stationary, steps, float(pair_tv), float(stat_tv), bool(converged), finals)


def write_csv(path, trajectories):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for traj in trajectories:
            w.writerows(traj.rows())


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
