"""Long-term objectives and constraint quantities.

Every metric is evaluated at a supplied pair of group-conditional
distributions ``mu`` (shape ``(2, n)``), which may be a stationary
distribution or any step of a trajectory.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGroup, InvariantViolation
from .markov import validate_distribution
from .models import FEATURE_STATE, validate_policy

DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class MetricContext:
    policy: np.ndarray
    model: object
    mu: np.ndarray
    c: float = 0.8

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (2, self.model.n):
            raise InvariantViolation("mu", f"expected shape (2, {self.model.n}), got {mu.shape}")
        for s in (0, 1):
            validate_distribution(mu[s])
        if not 0.0 <= self.c <= 1.0:
            raise InvariantViolation("c", f"cost must lie in [0, 1], got {self.c}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "policy", validate_policy(self.policy, self.model.n_features))


def _feature(ctx):
    ctx.model.require(FEATURE_STATE)
    return ctx.policy, ctx.model.ell, ctx.mu, ctx.model.gamma


def utility(ctx):
    pi, ell, mu, gamma = _feature(ctx)
    return float(np.sum(pi * (ell - ctx.c) * mu * gamma[:, None]))


def qualifications(ctx):
    """Q(pi | s) for both groups."""
    _, ell, mu, _ = _feature(ctx)
    return np.sum(ell * mu, axis=1)


def group_qualification(ctx, s):
    return float(qualifications(ctx)[s])


def inequity(ctx):
    q = qualifications(ctx)
    return float(abs(q[0] - q[1]))


def total_qualification(ctx):
    return float(qualifications(ctx) @ ctx.model.gamma)


def average_score(ctx):
    """Population mean of the bin index rescaled to (0, 1]: bin x counts as (x+1)/n."""
    n = ctx.model.n
    scores = np.arange(1, n + 1) / n
    return float(ctx.model.gamma @ (ctx.mu @ scores))


def eop_rates(ctx):
    """P(D=1 | Y=1, S=s) for both groups."""
    pi, ell, mu, _ = _feature(ctx)
    num = np.sum(pi * ell * mu, axis=1)
    den = np.sum(ell * mu, axis=1)
    for s in (0, 1):
        if den[s] <= DEGENERATE_TOL:
            raise DegenerateGroup(s, float(den[s]))
    return num / den


def eop_unfairness(ctx):
    r = eop_rates(ctx)
    return float(abs(r[0] - r[1]))


def loan_rates(ctx):
    """P(D=1 | S=s) for both groups."""
    pi, _, mu, _ = _feature(ctx)
    return np.sum(pi * mu, axis=1)


def dp_unfairness(ctx):
    r = loan_rates(ctx)
    return float(abs(r[0] - r[1]))


def minimax_risk(ctx):
    return float(np.max(1.0 - qualifications(ctx)))


def loan_and_payback_rates(ctx):
    """``(P(D=1|s), P(Y=1|s))`` as two length-2 arrays."""
    return loan_rates(ctx), qualifications(ctx)


def feature_gap(ctx):
    """Per-state absolute difference between the group distributions."""
    return np.abs(ctx.mu[0] - ctx.mu[1])


def cumulative_series(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cumulative_series needs at least one value")
    return np.cumsum(values)
