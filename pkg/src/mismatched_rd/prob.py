"""Finite-alphabet probability primitives.

All information quantities are in bits.  Couplings are stored in the
conditional form ``p[u, w] = P(U=u | W=w)``; the joint is ``lam[w] * p[u, w]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, DimensionError, DomainError

STRUCT_TOL = 1e-12
MARGINAL_TOL = 1e-9


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_simplex(probs, what="distribution"):
    if probs.ndim != 1 or probs.size == 0:
        raise DimensionError(f"{what} must be a non-empty vector")
    if not np.all(np.isfinite(probs)):
        raise DomainError(f"{what} has non-finite entries")
    if np.any(probs < 0):
        raise DomainError(f"{what} has negative entries (min {probs.min():.3e})")
    total = probs.sum()
    if abs(total - 1.0) > STRUCT_TOL:
        raise DomainError(f"{what} sums to {total!r}, not 1")


@dataclass(frozen=True)
class Distribution:
    """Probability vector over a finite alphabet."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _readonly(self.probs)
        _check_simplex(probs)
        object.__setattr__(self, "probs", probs)

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def __len__(self):
        return self.probs.size

    @property
    def support(self):
        return tuple(int(i) for i in np.flatnonzero(self.probs > 0))


@dataclass(frozen=True)
class Kernel:
    """Row-stochastic table; row ``i`` is the distribution given symbol ``i``."""

    rows: np.ndarray

    def __post_init__(self):
        rows = _readonly(self.rows)
        if rows.ndim != 2:
            raise DimensionError("kernel must be a 2-d table")
        for i, row in enumerate(rows):
            _check_simplex(row, f"kernel row {i}")
        object.__setattr__(self, "rows", rows)

    def __array__(self, dtype=None, copy=None):
        return self.rows if dtype is None else self.rows.astype(dtype)

    @property
    def shape(self):
        return self.rows.shape


@dataclass(frozen=True)
class Coupling:
    """Conditional table ``p[u, w] = P(U=u | W=w)`` on the active columns."""

    p: np.ndarray
    support: tuple

    def __post_init__(self):
        p = _readonly(self.p)
        if p.ndim != 2:
            raise DimensionError("coupling must be a 2-d table")
        support = tuple(int(w) for w in self.support)
        if np.any(p < -STRUCT_TOL):
            raise DomainError("coupling has negative entries")
        sums = p[:, list(support)].sum(axis=0) if support else np.array([])
        if sums.size and np.max(np.abs(sums - 1.0)) > 1e-10:
            raise DomainError(
                f"coupling columns do not sum to 1 (max dev {np.max(np.abs(sums - 1.0)):.3e})"
            )
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "support", support)

    def __array__(self, dtype=None, copy=None):
        return self.p if dtype is None else self.p.astype(dtype)


def as_cost_matrix(c, name="cost"):
    c = np.asarray(c, dtype=float)
    if c.ndim != 2:
        raise DimensionError(f"{name} must be a 2-d table")
    if not np.all(np.isfinite(c)):
        raise DomainError(f"{name} has non-finite entries")
    return c


def h(x):
    """``x * log2(x)`` with ``h(0) = 0``.

    Accepts scalars or arrays.  Negative inputs and inputs above 1 are
    rejected since every use is a probability.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1 + STRUCT_TOL):
        raise DomainError("h is defined on [0, 1]")
    out = np.zeros_like(arr)
    pos = arr > 0
    out[pos] = arr[pos] * np.log2(arr[pos])
    return float(out) if out.ndim == 0 else out


def entropy(d):
    probs = np.asarray(d, dtype=float)
    return float(-np.sum(h(probs)))


def _joint_check(pu, lam, p):
    pu = np.asarray(pu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    p = np.asarray(p, dtype=float)
    if p.shape != (pu.size, lam.size):
        raise DimensionError(f"coupling shape {p.shape} != ({pu.size}, {lam.size})")
    active = lam > 0
    marg = p[:, active] @ lam[active]
    dev = float(np.max(np.abs(marg - pu)))
    if dev > MARGINAL_TOL:
        raise ConsistencyError("coupling does not reproduce the source marginal", dev)
    return pu, lam, p, active


def info_term(lam, p):
    """``sum_w lam_w sum_u h(p_uw)``, the entropy part of the rate constraint."""
    lam = np.asarray(lam, dtype=float)
    p = np.asarray(p, dtype=float)
    active = lam > 0
    return float(lam[active] @ np.sum(h(np.clip(p[:, active], 0.0, 1.0)), axis=0))


def mutual_information(pu, lam, p):
    """I(U;W) in bits for the joint ``lam[w] * p[u, w]``.

    Evaluated in relative-entropy form, which equals ``H(U) + info_term``
    whenever the coupling is consistent but avoids the cancellation.
    """
    pu, lam, p, active = _joint_check(pu, lam, p)
    pa = p[:, active]
    pos = pa > 0
    ratio = np.ones_like(pa)
    ratio[pos] = pa[pos] / np.broadcast_to(pu[:, None], pa.shape)[pos]
    terms = np.where(pos, pa * np.log2(ratio), 0.0)
    return float(lam[active] @ terms.sum(axis=0))


def reduce_cost(kernel, c):
    """Average a (u, v) cost through a (w -> v) kernel: ``out[u, w] = sum_v k[w, v] c[u, v]``."""
    k = np.asarray(kernel, dtype=float)
    c = as_cost_matrix(c)
    if k.ndim != 2 or k.shape[1] != c.shape[1]:
        raise DimensionError(f"kernel {k.shape} does not match cost {c.shape}")
    return c @ k.T


def coupling_to_forward(pu, lam, p):
    """Bayes inversion of ``P(U|W)`` into the forward kernel ``P(W|U)`` (rows indexed by u)."""
    pu, lam, p, _ = _joint_check(pu, lam, p)
    if np.any(pu <= 0):
        raise DomainError("source must have full support for Bayes inversion")
    joint = p * lam[None, :]
    return joint / pu[:, None]


def joint_from_forward(pu, forward):
    """``P(u, w) = pu[u] * forward[u, w]``."""
    return np.asarray(pu, dtype=float)[:, None] * np.asarray(forward, dtype=float)


def product_coupling(pu, n_w):
    pu = np.asarray(pu, dtype=float)
    return np.repeat(pu[:, None], n_w, axis=1)
