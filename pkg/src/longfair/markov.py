"""Finite-state Markov chain primitives.

Kernels are row-stochastic ``(n, n)`` arrays (row = current state) and
distributions are length-``n`` probability vectors.
"""

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidDistribution,
    NegativeEntry,
    NotConvergent,
    NumericalFailure,
    RowSumViolation,
)

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-10
POSITIVE_TOL = 1e-15


def validate_kernel(K, tol=ROW_SUM_TOL):
    """Raise if ``K`` is not a square row-stochastic matrix; return it as an array."""
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DimensionMismatch(f"kernel must be square, got shape {K.shape}")
    neg = np.argwhere(K < 0)
    if len(neg):
        z, w = neg[0]
        raise NegativeEntry(int(z), int(w), float(K[z, w]))
    sums = K.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if len(bad):
        raise RowSumViolation(int(bad[0]), float(sums[bad[0]]))
    return K


def validate_distribution(mu, n=None, tol=ROW_SUM_TOL):
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1:
        raise DimensionMismatch(f"distribution must be a vector, got shape {mu.shape}")
    if n is not None and mu.shape[0] != n:
        raise DimensionMismatch(f"expected length {n}, got {mu.shape[0]}")
    if np.any(mu < 0):
        raise InvalidDistribution(f"negative probability in {mu}")
    if abs(mu.sum() - 1.0) > tol:
        raise InvalidDistribution(f"probabilities sum to {mu.sum()!r}")
    return mu


def evolve(mu, K):
    """One step of the chain: returns ``mu @ K``."""
    mu = np.asarray(mu, dtype=float)
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or mu.shape[-1] != K.shape[0]:
        raise DimensionMismatch(f"cannot evolve distribution of shape {mu.shape} with kernel {K.shape}")
    return mu @ K


def kernel_power(K, t):
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DimensionMismatch(f"kernel must be square, got shape {K.shape}")
    if int(t) != t or t < 1:
        raise ValueError(f"t must be a positive integer, got {t!r}")
    return np.linalg.matrix_power(K, int(t))


def check_irreducible(K):
    """Sufficient certificate: every entry of ``K + K^2 + ... + K^n`` is positive.

    Kernels failing this may still be irreducible; they are treated as
    uncertified.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    acc = np.zeros_like(K)
    P = np.eye(n)
    for _ in range(n):
        P = P @ K
        acc += P
    return bool(np.all(acc > POSITIVE_TOL))


def check_aperiodic(K):
    """Sufficient certificate: strictly positive diagonal."""
    return bool(np.all(np.diag(np.asarray(K, dtype=float)) > POSITIVE_TOL))


def certificates(K):
    return check_irreducible(K), check_aperiodic(K)


def _stationary_linear(K):
    n = K.shape[0]
    A = K.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    return np.linalg.solve(A, b)


def _stationary_eig(K):
    vals, vecs = np.linalg.eig(K.T)
    i = int(np.argmin(np.abs(vals - 1.0)))
    v = np.real(vecs[:, i])
    return v / v.sum()


def stationary_distribution(K, method="linear", check=True):
    """Unique stationary distribution of a certified kernel.

    ``method`` is ``"linear"`` (balance equations with one row replaced by the
    normalisation constraint) or ``"eig"`` (left eigenvector for eigenvalue 1).
    """
    K = validate_kernel(K)
    if check:
        irr, aper = certificates(K)
        if not (irr and aper):
            raise NotConvergent(f"certificates failed: irreducible={irr}, aperiodic={aper}")
    try:
        if method == "linear":
            mu = _stationary_linear(K)
        elif method == "eig":
            mu = _stationary_eig(K)
        else:
            raise ValueError(f"unknown method {method!r}")
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc
    # round-off can leave entries at -1e-17
    mu = np.clip(mu, 0.0, None)
    mu = mu / mu.sum()
    residual = np.abs(mu @ K - mu).sum()
    if not np.isfinite(residual) or residual > STATIONARY_TOL:
        raise NumericalFailure(f"stationary residual {residual:.3e} exceeds {STATIONARY_TOL}")
    return mu


def total_variation(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatch(f"shapes differ: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())
