"""Generative models of the lending population and their induced kernels.

Array conventions (``n`` feature states, groups ``s`` in {0, 1}):

* ``gamma``     shape ``(2,)``            P(S=s)
* ``ell``       shape ``(2, n)``          P(Y=1 | X=x, S=s)
* ``dynamics``  shape ``(2, 2, 2, n, n)`` indexed ``[s, d, y, x, k]`` =
  P(X'=k | X=x, D=d, Y=y, S=s), rows stochastic
* policies      shape ``(2, n)``          P(D=1 | X=x, S=s)

The qualification-state variant keeps the same container: the chain runs over
the binary qualification ``y`` (``n == 2``), ``ell`` holds the feature
distribution f(x | y, s) with shape ``(2, 2, m)`` indexed ``[s, y, x]``,
``dynamics`` has shape ``(2, 2, 2, 2)`` indexed ``[s, d, y, k]``, and policies
have shape ``(2, m)`` over the feature alphabet.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InvariantViolation, SchemaError, UnknownPreset, WrongVariant
from .markov import ROW_SUM_TOL, validate_kernel

FEATURE_STATE = "feature-state"
QUALIFICATION_STATE = "qualification-state"
VARIANTS = (FEATURE_STATE, QUALIFICATION_STATE)

DATA_DIR = Path(__file__).parent / "data"
SYNTHETIC_MODEL = DATA_DIR / "synthetic_fico4.json"


# Matrices as printed for the 4-bin lending example. Printed columns index the
# current state, so every matrix is transposed on load.
_a, _o = 0.03333, 0.9
_STAY = [[_o, _a, _a, _a], [_a, _o, _a, _a], [_a, _a, _o, _a], [_a, _a, _a, _o]]
_DROP = [[_o, _o, _o, _o], [_a, _a, _a, _a], [_a, _a, _a, _a], [_a, _a, _a, _a]]


def _climb(stay, up, corner=_a):
    return [
        [stay, _a, _a, _a],
        [up, stay, _a, _a],
        [_a, up, stay, _a],
        [corner, _a, up, _o],
    ]


_UP_SLOW = _climb(0.53333, 0.4)
_UP_MEDIUM = _climb(0.33333, 0.6)
_UP_FAST = _climb(0.13333, 0.8, corner=0.033335)
_RECOURSE_LOW = _climb(0.7, 0.23333)
_RECOURSE_HIGH = _climb(0.5, 0.43333)
_DISCOURAGED_LOW = [
    [0.9, 0.63333, 0.13333, _a],
    [_a, 0.3, 0.53333, 0.23333],
    [_a, _a, 0.3, 0.43333],
    [_a, _a, _a, 0.3],
]
_DISCOURAGED_HIGH = [
    [0.9, 0.43333, 0.13333, _a],
    [_a, 0.5, 0.33333, 0.23333],
    [_a, _a, 0.5, 0.23333],
    [_a, _a, _a, 0.5],
]

_ONE_SIDED_BASE = {"000": _STAY, "001": _STAY, "100": _STAY, "101": _STAY, "010": _DROP, "110": _DROP}


def _two_sided(low, high):
    return {
        "000": low, "001": low,
        "100": high, "101": high,
        "010": _DROP, "011": _DROP,
        "110": _UP_MEDIUM, "111": _UP_MEDIUM,
    }


# name -> (subscript order of the printed keys, printed matrices)
# The two-sided tables are printed with the group as the last subscript (the
# text states they are group-independent), i.e. keyed (y, d, s).
PRINTED_PRESETS = {
    "one-sided-general": ("sdy", {**_ONE_SIDED_BASE, "111": _UP_SLOW, "011": _UP_MEDIUM}),
    "one-sided-slow": ("sdy", {**_ONE_SIDED_BASE, "111": _UP_SLOW, "011": _UP_SLOW}),
    "one-sided-medium": ("sdy", {**_ONE_SIDED_BASE, "111": _UP_MEDIUM, "011": _UP_MEDIUM}),
    "one-sided-fast": ("sdy", {**_ONE_SIDED_BASE, "111": _UP_FAST, "011": _UP_FAST}),
    "recourse": ("yds", _two_sided(_RECOURSE_LOW, _RECOURSE_HIGH)),
    "discouraged": ("yds", _two_sided(_DISCOURAGED_LOW, _DISCOURAGED_HIGH)),
}

PRESET_NAMES = tuple(PRINTED_PRESETS)


def printed_matrix(name, s, d, y):
    """The matrix exactly as printed for group ``s``, decision ``d``, label ``y``."""
    if name not in PRINTED_PRESETS:
        raise UnknownPreset(name)
    order, table = PRINTED_PRESETS[name]
    idx = {"s": s, "d": d, "y": y}
    key = "".join(str(idx[c]) for c in order)
    return np.array(table[key], dtype=float)


def renormalize_rows(T):
    T = np.asarray(T, dtype=float)
    return T / T.sum(axis=-1, keepdims=True)


def load_dynamics_preset(name):
    """Dynamics array ``[s, d, y, x, k]`` for a named preset.

    Printed matrices are column-stochastic to within rounding; they are
    transposed and each row divided by its sum.
    """
    if name not in PRINTED_PRESETS:
        raise UnknownPreset(name)
    g = np.empty((2, 2, 2, 4, 4))
    for s in (0, 1):
        for d in (0, 1):
            for y in (0, 1):
                T = printed_matrix(name, s, d, y).T
                if np.any(np.abs(T.sum(axis=1) - 1.0) > 1e-3):
                    raise InvariantViolation(f"{name}.T_{s}{d}{y}", "printed matrix is not stochastic within 1e-3")
                g[s, d, y] = renormalize_rows(T)
    g.setflags(write=False)
    return g


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_probabilities(path, a):
    if not np.all(np.isfinite(a)):
        raise InvariantViolation(path, "non-finite value")
    if np.any(a < 0) or np.any(a > 1):
        raise InvariantViolation(path, f"entries must lie in [0, 1], got min {a.min():.6g} max {a.max():.6g}")


def _check_simplex(path, a, axis=-1):
    _check_probabilities(path, a)
    if np.any(np.abs(a.sum(axis=axis) - 1.0) > ROW_SUM_TOL):
        raise InvariantViolation(path, "probabilities must sum to 1")


@dataclass(frozen=True)
class GenerativeModel:
    gamma: np.ndarray
    ell: np.ndarray
    dynamics: np.ndarray
    variant: str = FEATURE_STATE
    groups: tuple = ("0", "1")
    preset: str = field(default=None, compare=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvariantViolation("variant", f"unknown variant {self.variant!r}")
        object.__setattr__(self, "gamma", _frozen(self.gamma))
        object.__setattr__(self, "ell", _frozen(self.ell))
        object.__setattr__(self, "dynamics", _frozen(self.dynamics))
        object.__setattr__(self, "groups", tuple(self.groups))
        if self.gamma.shape != (2,):
            raise InvariantViolation("gamma", f"expected 2 group probabilities, got shape {self.gamma.shape}")
        _check_simplex("gamma", self.gamma)
        if len(self.groups) != 2:
            raise InvariantViolation("groups", "exactly two groups are supported")
        if self.variant == FEATURE_STATE:
            n = self.ell.shape[-1]
            if self.ell.shape != (2, n) or n < 2:
                raise InvariantViolation("ell", f"expected shape (2, n) with n >= 2, got {self.ell.shape}")
            _check_probabilities("ell", self.ell)
            if self.dynamics.shape != (2, 2, 2, n, n):
                raise InvariantViolation("dynamics", f"expected shape (2, 2, 2, {n}, {n}), got {self.dynamics.shape}")
            names = [(s, d, y) for s in (0, 1) for d in (0, 1) for y in (0, 1)]
        else:
            if self.ell.ndim != 3 or self.ell.shape[:2] != (2, 2):
                raise InvariantViolation("ell", f"expected feature table of shape (2, 2, m), got {self.ell.shape}")
            _check_simplex("ell", self.ell)
            if self.dynamics.shape != (2, 2, 2, 2):
                raise InvariantViolation("dynamics", f"expected shape (2, 2, 2, 2), got {self.dynamics.shape}")
            names = [(s, d) for s in (0, 1) for d in (0, 1)]
        for idx in names:
            try:
                validate_kernel(self.dynamics[idx])
            except ValueError as exc:
                raise InvariantViolation("dynamics.T_" + "".join(map(str, idx)), str(exc)) from exc

    @property
    def n(self):
        """Number of chain states."""
        return self.dynamics.shape[-1]

    @property
    def n_features(self):
        """Length of a policy row."""
        return self.ell.shape[-1]

    def require(self, variant):
        if self.variant != variant:
            raise WrongVariant(f"operation needs a {variant} model, got {self.variant}")


def validate_policy(policy, n):
    pi = np.asarray(policy, dtype=float)
    if pi.shape != (2, n):
        raise DimensionMismatch(f"policy must have shape (2, {n}), got {pi.shape}")
    if not np.all(np.isfinite(pi)) or np.any(pi < 0) or np.any(pi > 1):
        raise InvariantViolation("policy", "entries must lie in [0, 1]")
    return pi


def build_group_kernel(model, policy, s):
    """K_s(x, k) = sum over d, y of g(k|x,d,y,s) pi(d|x,s) ell(y|x,s)."""
    model.require(FEATURE_STATE)
    pi = validate_policy(policy, model.n)[s]
    ell = model.ell[s]
    p_d = np.stack([1.0 - pi, pi])          # [d, x]
    p_y = np.stack([1.0 - ell, ell])        # [y, x]
    w = p_d[:, None, :] * p_y[None, :, :]   # [d, y, x]
    return np.einsum("dyx,dyxk->xk", w, model.dynamics[s])


def build_group_kernel_qualification(model, policy, s):
    """K_s(y, k) = sum over x, d of g(k|y,d,s) pi(d|x,s) f(x|y,s)."""
    model.require(QUALIFICATION_STATE)
    pi = validate_policy(policy, model.n_features)[s]
    f = model.ell[s]                        # [y, x]
    accept = f @ pi                         # P(D=1 | Y=y, S=s)
    w = np.stack([1.0 - accept, accept])    # [d, y]
    return np.einsum("dy,dyk->yk", w, model.dynamics[s])


def group_kernels(model, policy):
    """Both groups' kernels stacked as ``(2, n, n)``."""
    build = build_group_kernel if model.variant == FEATURE_STATE else build_group_kernel_qualification
    return np.stack([build(model, policy, s) for s in (0, 1)])


# --- model files -----------------------------------------------------------

_MODEL_KEYS = {"n", "groups", "gamma", "mu0", "ell", "dynamics", "variant", "description"}


def _dynamics_from_file(spec, n, variant):
    if not isinstance(spec, dict):
        raise SchemaError("dynamics must be an object")
    if "preset" in spec:
        if set(spec) != {"preset"}:
            raise SchemaError("dynamics with a preset take no other keys")
        if variant != FEATURE_STATE or n != 4:
            raise SchemaError("presets describe the 4-state feature model")
        return load_dynamics_preset(spec["preset"]), spec["preset"]
    if variant == FEATURE_STATE:
        keys = [f"T_{s}{d}{y}" for s in (0, 1) for d in (0, 1) for y in (0, 1)]
        shape = (2, 2, 2, n, n)
    else:
        keys = [f"T_{s}{d}" for s in (0, 1) for d in (0, 1)]
        shape = (2, 2, n, n)
    if set(spec) != set(keys):
        raise SchemaError(f"explicit dynamics need exactly the keys {keys}")
    try:
        g = np.array([spec[k] for k in keys], dtype=float).reshape(shape)
    except ValueError as exc:
        raise SchemaError(f"dynamics matrices must be {n}x{n}") from exc
    return g, None


def model_from_dict(raw):
    """Validate a model document; returns ``(model, mu0)``."""
    if not isinstance(raw, dict):
        raise SchemaError("model file must hold an object")
    unknown = set(raw) - _MODEL_KEYS
    if unknown:
        raise SchemaError(f"unknown keys: {sorted(unknown)}")
    missing = {"n", "gamma", "mu0", "ell", "dynamics"} - set(raw)
    if missing:
        raise SchemaError(f"missing keys: {sorted(missing)}")
    variant = raw.get("variant", FEATURE_STATE)
    n = raw["n"]
    if not isinstance(n, int) or n < 2:
        raise InvariantViolation("n", "must be an integer >= 2")
    try:
        mu0 = np.array(raw["mu0"], dtype=float)
        ell = np.array(raw["ell"], dtype=float)
        gamma = np.array(raw["gamma"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"probability arrays must be numeric: {exc}") from exc
    if mu0.shape != (2, n):
        raise InvariantViolation("mu0", f"expected shape (2, {n}), got {mu0.shape}")
    _check_simplex("mu0", mu0)
    g, preset = _dynamics_from_file(raw["dynamics"], n, variant)
    model = GenerativeModel(
        gamma=gamma, ell=ell, dynamics=g, variant=variant,
        groups=raw.get("groups", ("0", "1")), preset=preset,
    )
    if model.n != n:
        raise InvariantViolation("n", f"declared {n} states but tables have {model.n}")
    mu0.setflags(write=False)
    return model, mu0


def load_model(path=SYNTHETIC_MODEL):
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    return model_from_dict(raw)


def model_to_dict(model, mu0):
    doc = {
        "n": model.n,
        "groups": list(model.groups),
        "gamma": model.gamma.tolist(),
        "mu0": np.asarray(mu0).tolist(),
        "ell": model.ell.tolist(),
        "variant": model.variant,
    }
    if model.preset is not None:
        doc["dynamics"] = {"preset": model.preset}
    elif model.variant == FEATURE_STATE:
        doc["dynamics"] = {
            f"T_{s}{d}{y}": model.dynamics[s, d, y].tolist()
            for s in (0, 1) for d in (0, 1) for y in (0, 1)
        }
    else:
        doc["dynamics"] = {f"T_{s}{d}": model.dynamics[s, d].tolist() for s in (0, 1) for d in (0, 1)}
    return doc
