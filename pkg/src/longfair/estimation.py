"""Estimating labels and dynamics from two-step data with partially observed labels.

Labels are only revealed for individuals who received a positive decision.
For rejected individuals the next-state transition is attributed to both
label values in proportion to the estimated label probability of their cell,
i.e. transitions after a rejection are assumed not to depend on the label.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import metrics
from .errors import EmptyDataset, SchemaError
from .markov import stationary_distribution
from .models import FEATURE_STATE, GenerativeModel, group_kernels, validate_policy
from .optimize import solve

SUPPORT_FLOOR = 5
MASKED = -1


def probe_policy(kind, n=4, theta=None, cutoff=2):
    """Decision rule used only to collect data.

    ``random``: 0.5 everywhere. ``bias``: 0.1 on states ``x <= cutoff``, above
    it 0.3 for group 0 and 0.9 for group 1. ``threshold``: 1 on states
    ``x >= theta`` and 0 below.
    """
    if kind == "random":
        return np.full((2, n), 0.5)
    if kind == "bias":
        pi = np.full((2, n), 0.1)
        pi[0, cutoff + 1:] = 0.3
        pi[1, cutoff + 1:] = 0.9
        return pi
    if kind == "threshold":
        if theta is None:
            raise ValueError("threshold probe needs theta")
        return np.tile((np.arange(n) >= theta).astype(float), (2, 1))
    raise ValueError(f"unknown probe {kind!r}")


@dataclass(frozen=True)
class TemporalDataset:
    x0: np.ndarray
    s: np.ndarray
    d0: np.ndarray
    y0: np.ndarray      # MASKED where d0 == 0
    x1: np.ndarray
    n: int

    def __len__(self):
        return len(self.x0)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x0", "s", "d0", "y0", "x1"])
            for row in zip(self.x0, self.s, self.d0, self.y0, self.x1):
                x0, s, d0, y0, x1 = map(int, row)
                w.writerow([x0, s, d0, "" if d0 == 0 else y0, x1])

    @classmethod
    def from_csv(cls, path, n):
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["x0", "s", "d0", "y0", "x1"]:
                raise SchemaError(f"unexpected columns {reader.fieldnames}")
            rows = list(reader)
        cols = {k: np.array([int(r[k]) for r in rows], dtype=int) for k in ("x0", "s", "d0", "x1")}
        y0 = np.array([MASKED if r["y0"] == "" else int(r["y0"]) for r in rows], dtype=int)
        return cls(cols["x0"], cols["s"], cols["d0"], y0, cols["x1"], n)


def _categorical(rng, probs):
    """One draw per row of ``probs``."""
    u = rng.random(len(probs))
    idx = (u[:, None] >= np.cumsum(probs, axis=1)).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def generate_temporal_dataset(model, mu0, probe, m, seed):
    model.require(FEATURE_STATE)
    if m < 1:
        raise ValueError("m must be >= 1")
    probe = validate_policy(probe, model.n)
    rng = np.random.default_rng(seed)
    s = (rng.random(m) < model.gamma[1]).astype(int)
    x0 = _categorical(rng, np.asarray(mu0)[s])
    d0 = (rng.random(m) < probe[s, x0]).astype(int)
    y = (rng.random(m) < model.ell[s, x0]).astype(int)
    x1 = _categorical(rng, model.dynamics[s, d0, y, x0])
    y0 = np.where(d0 == 1, y, MASKED)
    return TemporalDataset(x0, s, d0, y0, x1, model.n)


@dataclass(frozen=True)
class EstimatedModel:
    gamma_hat: np.ndarray
    ell_hat: np.ndarray         # (2, n)
    g_hat: np.ndarray           # (2, 2, 2, n, n)
    ell_support: np.ndarray     # observed labels per (s, x)
    g_support: np.ndarray       # (weighted) transitions per (s, d, y, x)
    ell_smoothed: np.ndarray
    g_smoothed: np.ndarray

    def to_model(self):
        return GenerativeModel(gamma=self.gamma_hat, ell=self.ell_hat, dynamics=self.g_hat)


def estimate_distributions(data, support_floor=SUPPORT_FLOOR):
    if len(data) == 0:
        raise EmptyDataset("no samples")
    n = data.n
    s, x0, d0, x1 = data.s, data.x0, data.d0, data.x1
    seen = d0 == 1
    # labels are read only where d0 == 1; masked fields are never touched
    y_seen = data.y0[seen]

    gamma1 = s.mean()
    gamma_hat = np.array([1.0 - gamma1, gamma1])

    n_lab = np.zeros((2, n))
    n_pos = np.zeros((2, n))
    np.add.at(n_lab, (s[seen], x0[seen]), 1.0)
    np.add.at(n_pos, (s[seen], x0[seen]), y_seen)
    ell_smoothed = n_lab < support_floor
    ell_hat = np.where(ell_smoothed, (n_pos + 1.0) / (n_lab + 2.0), n_pos / np.maximum(n_lab, 1.0))

    counts = np.zeros((2, 2, 2, n, n))
    np.add.at(counts, (s[seen], 1, y_seen, x0[seen], x1[seen]), 1.0)
    rejected = np.zeros((2, n, n))
    np.add.at(rejected, (s[~seen], x0[~seen], x1[~seen]), 1.0)
    counts[:, 0, 1] = rejected * ell_hat[:, :, None]
    counts[:, 0, 0] = rejected * (1.0 - ell_hat)[:, :, None]

    g_support = counts.sum(axis=-1)
    g_smoothed = g_support < support_floor
    counts = counts + g_smoothed[..., None]
    g_hat = counts / counts.sum(axis=-1, keepdims=True)
    return EstimatedModel(gamma_hat, ell_hat, g_hat, n_lab, g_support, ell_smoothed, g_smoothed)


def stationary_report(model, policy, c):
    """Metrics of ``policy`` at the stationary state of ``model``."""
    mu = np.stack([stationary_distribution(K) for K in group_kernels(model, policy)])
    ctx = metrics.MetricContext(policy=policy, model=model, mu=mu, c=c)
    loan, payback = metrics.loan_and_payback_rates(ctx)
    return {
        "utility": metrics.utility(ctx),
        "eop": metrics.eop_unfairness(ctx),
        "dp": metrics.dp_unfairness(ctx),
        "inequity": metrics.inequity(ctx),
        "loan": loan.tolist(),
        "payback": payback.tolist(),
        "stationary": mu.tolist(),
    }


def end_to_end_sensitivity(model_true, mu0, probes, spec, m=50000, seed=0):
    """Estimate, solve on the estimate, and score the result on the true model.

    ``probes`` maps a name to a probe policy, or to ``None`` to skip estimation
    and solve on the true model directly. A ``"true"`` reference row solved on
    the true model is always included first.
    """
    reference = solve(spec, model_true)
    rows = [{"probe": "true", "feasible": reference.feasible, "policy": reference.policy.tolist(),
             **stationary_report(model_true, reference.policy, spec.c)}]
    for name, probe in probes.items():
        if probe is None:
            report = solve(spec, model_true)
            est = None
        else:
            data = generate_temporal_dataset(model_true, mu0, probe, m, seed)
            est = estimate_distributions(data)
            report = solve(spec, est.to_model())
        row = {"probe": name, "feasible": report.feasible, "policy": report.policy.tolist(),
               **stationary_report(model_true, report.policy, spec.c)}
        if est is not None:
            row["labels_observed"] = int(est.ell_support.sum())
            row["smoothed_cells"] = int(est.ell_smoothed.sum() + est.g_smoothed.sum())
        rows.append(row)
    return rows
