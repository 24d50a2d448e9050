"""Search for time-independent policies with a fair, certified stationary state.

The stationary distribution of every group's kernel is an implicit function of
the policy, so the objective and constraints are evaluated by building the
kernels, solving for their stationary distributions and applying the metrics
there. The resulting small nonlinear program (``2 * n`` box-bounded
variables) is handed to SLSQP with finite-difference gradients.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import metrics
from .errors import InvariantViolation, LongFairError
from .markov import certificates, stationary_distribution
from .models import group_kernels, validate_policy

OBJECTIVES = (
    "max-utility",
    "max-qualification",
    "min-eop",
    "min-default",
    "max-average-score",
    "min-minimax-risk",
)
CONSTRAINT_KINDS = ("eop", "dp", "inequity", "feature-gap", "utility", "monotone")

CLAMP = 1e-9
PENALTY = 1e3
DEFAULT_FD_STEP = 1.49e-10


@dataclass(frozen=True)
class Constraint:
    kind: str
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise InvariantViolation("constraint.kind", f"unknown constraint {self.kind!r}")
        if self.kind in ("eop", "dp", "inequity", "feature-gap") and not self.epsilon >= 0:
            raise InvariantViolation(f"constraint.{self.kind}", f"threshold must be >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 200
    fd_step: float = DEFAULT_FD_STEP
    warm_start: np.ndarray = None
    feasibility_tol: float = 1e-8
    restarts: int = 1
    seed: int = 0
    ftol: float = 1e-10

    def __post_init__(self):
        if self.max_iterations < 1 or self.restarts < 1:
            raise InvariantViolation("solver", "max_iterations and restarts must be >= 1")
        if not (self.fd_step > 0 and self.feasibility_tol > 0 and self.ftol > 0):
            raise InvariantViolation("solver", "fd_step, feasibility_tol and ftol must be positive")


@dataclass(frozen=True)
class OptimizationSpec:
    objective: str
    constraints: tuple = ()
    c: float = 0.8
    enforce_convergence: bool = True
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise InvariantViolation("objective", f"unknown objective {self.objective!r}")
        if not 0.0 <= self.c <= 1.0:
            raise InvariantViolation("c", f"cost must lie in [0, 1], got {self.c}")
        object.__setattr__(self, "constraints", tuple(self.constraints))


def preset_utilmax_eop(c=0.8, epsilon=0.01, solver=None):
    """Maximise utility subject to equal-opportunity unfairness <= epsilon."""
    return OptimizationSpec(
        objective="max-utility",
        constraints=(Constraint("eop", epsilon),),
        c=c,
        solver=solver or SolverConfig(),
    )


def preset_maxqual(c=0.8, solver=None):
    """Maximise population qualification subject to non-negative utility."""
    return OptimizationSpec(
        objective="max-qualification",
        constraints=(Constraint("utility", 0.0),),
        c=c,
        solver=solver or SolverConfig(),
    )


PRESETS = {"utilmax-eop": preset_utilmax_eop, "maxqual": preset_maxqual}


def residual_names(spec, n):
    names = []
    for con in spec.constraints:
        if con.kind == "feature-gap":
            names += [f"feature-gap[{x}]" for x in range(n)]
        elif con.kind == "monotone":
            names += [f"monotone[s={s},x={x}]" for s in (0, 1) for x in range(n - 1)]
        else:
            names.append(con.kind)
    if spec.enforce_convergence:
        names += [f"{c}[s={s}]" for s in (0, 1) for c in ("irreducible", "aperiodic")]
    return names


@dataclass
class _Point:
    """Everything derived from one policy evaluation."""

    objective: float
    residuals: np.ndarray
    smooth: np.ndarray
    certificates: list
    ok: bool


def _objective(spec, ctx):
    o = spec.objective
    if o == "max-utility":
        return -metrics.utility(ctx)
    if o in ("max-qualification", "min-default"):
        return -metrics.total_qualification(ctx)
    if o == "min-eop":
        return metrics.eop_unfairness(ctx)
    if o == "max-average-score":
        return -metrics.average_score(ctx)
    return metrics.minimax_risk(ctx)


def _gap_pair(eps, gap):
    return [eps - gap, eps + gap]


def _constraint_values(spec, ctx, pi):
    """Canonical residuals (>= 0 means satisfied) and a smooth split for the solver."""
    canon, smooth = [], []
    for con in spec.constraints:
        eps = con.epsilon
        if con.kind == "eop":
            r = metrics.eop_rates(ctx)
            canon.append(eps - abs(r[0] - r[1]))
            smooth += _gap_pair(eps, r[0] - r[1])
        elif con.kind == "dp":
            r = metrics.loan_rates(ctx)
            canon.append(eps - abs(r[0] - r[1]))
            smooth += _gap_pair(eps, r[0] - r[1])
        elif con.kind == "inequity":
            q = metrics.qualifications(ctx)
            canon.append(eps - abs(q[0] - q[1]))
            smooth += _gap_pair(eps, q[0] - q[1])
        elif con.kind == "feature-gap":
            diff = ctx.mu[0] - ctx.mu[1]
            canon += list(eps - np.abs(diff))
            smooth += list(eps - diff) + list(eps + diff)
        elif con.kind == "utility":
            u = metrics.utility(ctx) - eps
            canon.append(u)
            smooth.append(u)
        else:
            steps = np.diff(pi, axis=1).ravel()
            canon += list(steps)
            smooth += list(steps)
    return canon, smooth


def _evaluate_point(policy, spec, model):
    pi = validate_policy(np.clip(policy, 0.0, 1.0), model.n_features)
    names = residual_names(spec, model.n)
    kernels = group_kernels(model, np.clip(pi, CLAMP, 1.0 - CLAMP))
    certs = [certificates(K) for K in kernels]
    certified = all(a and b for a, b in certs)
    if spec.enforce_convergence and not certified:
        resid = -np.ones(len(names))
        return _Point(PENALTY, resid, resid.copy(), certs, False)
    mu = np.stack([stationary_distribution(K, check=spec.enforce_convergence) for K in kernels])
    ctx = metrics.MetricContext(policy=pi, model=model, mu=mu, c=spec.c)
    canon, smooth = _constraint_values(spec, ctx, pi)
    if spec.enforce_convergence:
        canon += [0.0 if flag else -1.0 for pair in certs for flag in pair]
    return _Point(_objective(spec, ctx), np.array(canon, dtype=float), np.array(smooth, dtype=float), certs, True)


def evaluate(policy, spec, model):
    """Objective value and constraint residuals of ``policy`` at its stationary state.

    Residuals follow :func:`residual_names`; a residual >= 0 is satisfied and
    certificate failures show up as -1.
    """
    p = _evaluate_point(policy, spec, model)
    return p.objective, p.residuals


@dataclass
class SolveReport:
    policy: np.ndarray
    feasible: bool
    objective_value: float
    constraint_residuals: np.ndarray
    residual_names: list
    iterations: int
    certificate_status: list
    fd_step: float
    message: str = ""
    starts: int = 1

    def to_dict(self):
        d = asdict(self)
        d["policy"] = np.asarray(self.policy).tolist()
        d["constraint_residuals"] = np.asarray(self.constraint_residuals).tolist()
        d["certificate_status"] = [
            {"irreducible": bool(a), "aperiodic": bool(b)} for a, b in self.certificate_status
        ]
        d["fd_step_is_default"] = bool(self.fd_step == DEFAULT_FD_STEP)
        return d


def _violation(residuals):
    return float(np.max(np.concatenate([[0.0], -residuals])))


def _start_points(spec, model):
    cfg = spec.solver
    size = 2 * model.n_features
    if cfg.warm_start is None:
        first = np.full(size, 0.5)
    else:
        first = validate_policy(cfg.warm_start, model.n_features).ravel().astype(float)
    starts = [first]
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.restarts - 1):
        starts.append(rng.uniform(0.0, 1.0, size))
    return starts


def solve(spec, model):
    """Best policy found over the configured starts; never raises on infeasibility."""
    cfg = spec.solver
    shape = (2, model.n_features)
    cache = {}

    def point(x):
        key = x.tobytes()
        if key not in cache:
            if len(cache) > 4096:
                cache.clear()
            try:
                cache[key] = _evaluate_point(x.reshape(shape), spec, model)
            except LongFairError:
                size = len(residual_names(spec, model.n))
                cache[key] = _Point(PENALTY, -np.ones(size), None, [(False, False)] * 2, False)
        return cache[key]

    n_smooth = len(_evaluate_point(np.full(shape, 0.5), spec, model).smooth)

    def fun(x):
        return point(x).objective

    def cons(x):
        p = point(x)
        return p.smooth if p.ok else -np.ones(n_smooth)

    constraints = [{"type": "ineq", "fun": cons}] if n_smooth else []
    best = None
    total_iterations = 0
    messages = []
    starts = _start_points(spec, model)
    for x0 in starts:
        res = minimize(
            fun, x0, method="SLSQP",
            bounds=[(0.0, 1.0)] * x0.size,
            constraints=constraints,
            options={"maxiter": cfg.max_iterations, "eps": cfg.fd_step, "ftol": cfg.ftol},
        )
        total_iterations += int(res.nit)
        messages.append(str(res.message))
        x = np.clip(res.x, 0.0, 1.0)
        p = _evaluate_point(x.reshape(shape), spec, model)
        feasible = p.ok and _violation(p.residuals) <= cfg.feasibility_tol
        # feasible beats infeasible; then lower objective / lower violation
        rank = (0, p.objective) if feasible else (1, _violation(p.residuals))
        if best is None or rank < best[0]:
            best = (rank, x, p, feasible)
    _, x, p, feasible = best
    return SolveReport(
        policy=x.reshape(shape),
        feasible=bool(feasible),
        objective_value=float(p.objective),
        constraint_residuals=p.residuals,
        residual_names=residual_names(spec, model.n),
        iterations=total_iterations,
        certificate_status=[tuple(c) for c in p.certificates],
        fd_step=cfg.fd_step,
        message="; ".join(dict.fromkeys(messages)),
        starts=len(starts),
    )
