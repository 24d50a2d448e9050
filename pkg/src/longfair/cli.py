"""Command-line entry point: ``longfair {solve,simulate,compare,estimate,presets}``.

Exit codes: 0 success, 1 error, 2 solve finished without a feasible policy.
The output directory comes from ``--out``, else ``$LONGFAIR_OUTPUT_DIR``,
else the config's ``output_dir``, else ``./results``.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import models, optimize
from .baselines import run_retraining_loop
from .errors import LongFairError, SchemaError
from .estimation import end_to_end_sensitivity, probe_policy
from .simulate import multi_start_convergence, random_initial_distributions, simulate, write_csv

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2
OUTPUT_ENV = "LONGFAIR_OUTPUT_DIR"

_SECTIONS = {
    "top": {"model", "output_dir", "seed", "solve", "solver", "simulate", "compare", "estimate", "description"},
    "solve": {"preset", "objective", "constraints", "c", "epsilon", "enforce_convergence"},
    "solver": {"max_iterations", "fd_step", "feasibility_tol", "restarts", "ftol", "warm_start"},
    "simulate": {"policy", "T", "tol", "starts"},
    "compare": {"lambdas", "seeds", "m", "T", "epochs", "lr", "epsilon", "mode"},
    "estimate": {"probes", "m", "epsilon", "c"},
}


def _check_keys(section, block):
    if not isinstance(block, dict):
        raise SchemaError(f"{section}: expected an object")
    unknown = set(block) - _SECTIONS[section]
    if unknown:
        raise SchemaError(f"{section}: unknown keys {sorted(unknown)}")


def load_config(path):
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read config {path}: {exc}") from exc
    _check_keys("top", cfg)
    for section in _SECTIONS:
        if section != "top" and section in cfg:
            _check_keys(section, cfg[section])
    cfg["_base"] = path.parent
    return cfg


def _resolve(cfg, p):
    p = Path(p)
    return p if p.is_absolute() else cfg["_base"] / p


def _model(cfg):
    if "model" not in cfg:
        return models.load_model()
    return models.load_model(_resolve(cfg, cfg["model"]))


def _solver_config(cfg, seed):
    block = dict(cfg.get("solver", {}))
    if "warm_start" in block:
        block["warm_start"] = np.array(block["warm_start"], dtype=float)
    return optimize.SolverConfig(seed=seed, **block)


def build_spec(cfg, seed, overrides=None):
    block = {**cfg.get("solve", {}), **(overrides or {})}
    solver = _solver_config(cfg, seed)
    c = block.get("c", 0.8)
    preset = block.get("preset")
    if preset is not None:
        if preset not in optimize.PRESETS:
            raise SchemaError(f"unknown optimisation preset {preset!r}")
        if "objective" in block or "constraints" in block:
            raise SchemaError("give either a preset or objective/constraints, not both")
        if preset == "utilmax-eop":
            return optimize.preset_utilmax_eop(c, block.get("epsilon", 0.01), solver)
        return optimize.preset_maxqual(c, solver)
    if "objective" not in block:
        raise SchemaError("solve block needs a preset or an objective")
    constraints = []
    for con in block.get("constraints", []):
        if not isinstance(con, dict) or set(con) - {"kind", "epsilon"}:
            raise SchemaError(f"bad constraint entry {con!r}")
        constraints.append(optimize.Constraint(con["kind"], con.get("epsilon", 0.0)))
    return optimize.OptimizationSpec(
        objective=block["objective"],
        constraints=tuple(constraints),
        c=c,
        enforce_convergence=block.get("enforce_convergence", True),
        solver=solver,
    )


def write_policy(path, policy):
    Path(path).write_text(json.dumps({"n": int(np.shape(policy)[1]), "pi": np.asarray(policy).tolist()}, indent=2))


def read_policy(path, n):
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"policy file {path} does not exist")
    doc = json.loads(path.read_text())
    return models.validate_policy(doc["pi"], n)


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, default=_jsonable))


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serialisable: {type(o)}")


def cmd_solve(cfg, out, seed):
    model, _ = _model(cfg)
    report = optimize.solve(build_spec(cfg, seed), model)
    _dump(out / "report.json", report.to_dict())
    write_policy(out / "policy.json", report.policy)
    print(f"feasible={report.feasible} objective={report.objective_value:.6g} -> {out}")
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def cmd_simulate(cfg, out, seed):
    model, mu0 = _model(cfg)
    block = cfg.get("simulate", {})
    policy_path = _resolve(cfg, block["policy"]) if "policy" in block else out / "policy.json"
    policy = read_policy(policy_path, model.n_features)
    T = block.get("T", 200)
    c = cfg.get("solve", {}).get("c", 0.8)
    traj = simulate(model, policy, mu0, T=T, c=c)
    write_csv(out / "trajectory.csv", [traj])
    summary = {"T": T}
    if block.get("starts", 0):
        starts = random_initial_distributions(seed, block["starts"], model.n)
        rep = multi_start_convergence(model, policy, starts, T=T, tol=block.get("tol", 1e-9))
        summary.update(
            converged=rep.converged, max_pairwise_tv=rep.max_pairwise_tv,
            max_stationary_tv=rep.max_stationary_tv, convergence_steps=rep.convergence_steps,
            stationary=rep.stationary,
        )
    _dump(out / "simulate_summary.json", summary)
    print(f"wrote {out / 'trajectory.csv'}")
    return EXIT_OK


def cmd_compare(cfg, out, seed):
    model, mu0 = _model(cfg)
    block = cfg.get("compare", {})
    overrides = {"epsilon": block["epsilon"]} if "epsilon" in block else None
    spec = build_spec(cfg, seed, overrides)
    report = optimize.solve(spec, model)
    T = block.get("T", 100)
    long_term = simulate(model, report.policy, mu0, T=T, c=spec.c)
    long_term.policy_kind = "long-eop"
    seeds = block.get("seeds", 10)
    seeds = list(range(seed, seed + seeds)) if isinstance(seeds, int) else list(seeds)
    trajs = [long_term]
    for lam in [0] + [x for x in block.get("lambdas", [2]) if x != 0]:
        trajs += run_retraining_loop(
            model, mu0, T=T, lam=lam, m=block.get("m", 5000), seeds=seeds, c=spec.c,
            epochs=block.get("epochs", 2000), lr=block.get("lr", 0.05), mode=block.get("mode", "threshold"),
        )
    write_csv(out / "compare.csv", trajs)
    print(f"wrote {out / 'compare.csv'} ({len(trajs)} trajectories)")
    return EXIT_OK


def _probes(entries, n):
    probes = {}
    for entry in entries:
        if entry == "true":
            probes["true-shortcut"] = None
        elif isinstance(entry, str):
            probes[entry] = probe_policy(entry, n)
        elif isinstance(entry, dict) and set(entry) == {"threshold"}:
            probes[f"threshold-{entry['threshold']}"] = probe_policy("threshold", n, theta=entry["threshold"])
        else:
            raise SchemaError(f"bad probe entry {entry!r}")
    return probes


def cmd_estimate(cfg, out, seed):
    model, mu0 = _model(cfg)
    block = cfg.get("estimate", {})
    overrides = {k: block[k] for k in ("epsilon", "c") if k in block}
    spec = build_spec(cfg, seed, overrides)
    probes = _probes(block.get("probes", ["random", "bias"]), model.n)
    rows = end_to_end_sensitivity(model, mu0, probes, spec, m=block.get("m", 50000), seed=seed)
    _dump(out / "sensitivity.json", {"c": spec.c, "rows": rows})
    for r in rows:
        print(f"{r['probe']:>16}  utility={r['utility']:.5f}  eop={r['eop']:.5f}")
    return EXIT_OK


def presets_listing():
    return {"dynamics": list(models.PRESET_NAMES), "optimization": list(optimize.PRESETS)}


def cmd_presets(cfg=None, out=None, seed=None):
    listing = presets_listing()
    print("dynamics presets:")
    for name in listing["dynamics"]:
        print(f"  {name}")
    print("optimization presets:")
    for name in listing["optimization"]:
        print(f"  {name}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "estimate": cmd_estimate,
    "presets": cmd_presets,
}


def main(argv=None):
    parser = argparse.ArgumentParser(prog="longfair", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="experiment config (JSON)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="override the config seed")
    args = parser.parse_args(argv)

    if args.command == "presets":
        return cmd_presets()
    try:
        cfg = load_config(args.config) if args.config else {"_base": Path.cwd()}
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        out = Path(args.out or os.environ.get(OUTPUT_ENV) or cfg.get("output_dir") or "results")
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, seed)
    except (LongFairError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
