"""Short-term baselines: logistic-regression policies retrained at every step.

Features are a one-hot encoding of the state, the raw group bit and a bias.
Because every record falls into one of ``n * 2`` feature cells, full-batch
gradient descent is carried out on per-cell label counts, which gives the
same loss and gradients as iterating over the records.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDataset, EmptyQualifiedGroup
from .models import group_kernels
from .simulate import Trajectory, record_metrics
from .markov import evolve


@dataclass(frozen=True)
class SampleSet:
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    n: int

    def __len__(self):
        return len(self.x)

    def counts(self):
        """Array ``[x, s, y]`` of record counts."""
        c = np.zeros((self.n, 2, 2))
        np.add.at(c, (self.x, self.s, self.y), 1.0)
        return c


@dataclass(frozen=True)
class LogisticPolicy:
    state_weights: np.ndarray   # (n,)
    group_weight: float
    bias: float
    lr: float = 0.05
    losses: tuple = ()

    def logits(self):
        """Logit table ``[s, x]``."""
        return self.state_weights[None, :] + self.group_weight * np.arange(2)[:, None] + self.bias

    def probabilities(self):
        return _sigmoid(self.logits())


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sample_population(model, mu, m, seed):
    """``m`` i.i.d. records: s ~ gamma, x ~ mu(.|s), y ~ Bernoulli(ell(x, s))."""
    if m < 1:
        raise ValueError("sample size must be >= 1")
    rng = np.random.default_rng(seed)
    mu = np.asarray(mu, dtype=float)
    s = (rng.random(m) < model.gamma[1]).astype(int)
    cdf = np.cumsum(mu, axis=1)
    u = rng.random(m)
    x = np.minimum((u[:, None] >= cdf[s]).sum(axis=1), model.n - 1)
    y = (rng.random(m) < model.ell[s, x]).astype(int)
    return SampleSet(x=x, s=s, y=y, n=model.n)


def _loss_and_grad(theta, counts, lam, use_penalty):
    n = counts.shape[0]
    w, ws, b = theta[:n], theta[n], theta[n + 1]
    z = w[:, None] + ws * np.arange(2)[None, :] + b           # [x, s]
    p = _sigmoid(z)
    pos, neg = counts[..., 1], counts[..., 0]
    m = counts.sum()
    eps = 1e-12
    loss = -(pos * np.log(p + eps) + neg * np.log(1.0 - p + eps)).sum() / m
    dz = ((pos + neg) * p - pos) / m
    if use_penalty:
        qualified = pos.sum(axis=0)                              # per group
        rate = (pos * p).sum(axis=0) / qualified
        gap = rate[0] - rate[1]
        loss += lam * gap**2
        sign = np.array([1.0, -1.0])
        dz = dz + 2.0 * lam * gap * sign[None, :] * pos * p * (1.0 - p) / qualified[None, :]
    grad = np.concatenate([dz.sum(axis=1), [dz[:, 1].sum()], [dz.sum()]])
    return loss, grad


def train_short_term(data, lam=0.0, epochs=2000, lr=0.05, seed=0):
    """Full-batch gradient descent on BCE + lam * (soft EOP gap)^2.

    The soft gap is the between-group difference in mean predicted probability
    over records with y=1. If the loss ever increases the run restarts with
    half the learning rate.
    """
    if len(data) == 0:
        raise EmptyDataset("no training records")
    counts = data.counts()
    use_penalty = lam > 0
    if use_penalty and np.any(counts[..., 1].sum(axis=0) == 0):
        warnings.warn("a group has no positive labels; fairness penalty skipped", EmptyQualifiedGroup)
        use_penalty = False
    rng = np.random.default_rng(seed)
    theta0 = rng.normal(0.0, 0.01, data.n + 2)
    while True:
        theta = theta0.copy()
        losses = []
        ok = True
        for _ in range(epochs):
            loss, grad = _loss_and_grad(theta, counts, lam, use_penalty)
            if losses and loss > losses[-1] + 1e-12:
                ok = False
                break
            losses.append(loss)
            theta -= lr * grad
        if ok or lr < 1e-6:
            break
        warnings.warn(f"training loss increased at lr={lr}; retrying with lr={lr / 2}", RuntimeWarning)
        lr /= 2
    n = data.n
    return LogisticPolicy(theta[:n].copy(), float(theta[n]), float(theta[n + 1]), lr, tuple(losses))


def policy_from_logistic(lp, mode="threshold"):
    """Decision table ``[s, x]``; threshold mode maps a probability of exactly 0.5 to 1."""
    p = lp.probabilities()
    if mode == "threshold":
        return (lp.logits() >= 0.0).astype(float)
    if mode == "probabilistic":
        return p
    raise ValueError(f"unknown mode {mode!r}")


def run_retraining_loop(model, mu0, T=100, lam=0.0, m=5000, seeds=(0,), c=0.8,
                        epochs=2000, lr=0.05, mode="threshold"):
    """Retrain a fresh short-term policy on a sample of the current population at every step."""
    if m < 1:
        raise ValueError("per-step sample size must be >= 1")
    if T < 1:
        raise ValueError("horizon must be >= 1")
    kind = "short-maxutil" if lam == 0 else "short-eop"
    out = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        step_seeds = rng.integers(0, 2**63 - 1, size=(T + 1, 2))
        mus = np.empty((T + 1, 2, model.n))
        mus[0] = mu0
        policies = np.empty((T + 1, 2, model.n))
        for t in range(T + 1):
            data = sample_population(model, mus[t], m, int(step_seeds[t, 0]))
            lp = train_short_term(data, lam, epochs, lr, int(step_seeds[t, 1]))
            policies[t] = policy_from_logistic(lp, mode)
            if t < T:
                K = group_kernels(model, policies[t])
                mus[t + 1] = np.stack([evolve(mus[t, s], K[s]) for s in (0, 1)])
        out.append(Trajectory(mus=mus, metrics=record_metrics(model, policies, mus, c),
                              policy_kind=kind, seed=seed, lam=lam, policies=policies))
    return out
