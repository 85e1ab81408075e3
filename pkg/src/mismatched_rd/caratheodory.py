"""Support reduction of the auxiliary distribution.

Each active symbol ``w`` contributes the moment vector

    x_w = (p_{.w}, sum_u h(p_uw), sum_u p_uw ce_uw, sum_u p_uw cd_uw, 1)

and every quantity the outer problem depends on is a ``lam``-average of
these vectors.  The first |U| coordinates sum to the last one, so the family
spans at most |U|+3 dimensions; any larger support carries a null direction
``mu`` along which ``lam`` can slide until a coordinate hits zero without
changing a single aggregate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, DimensionError, InputError
from .prob import h

NULL_TOL = 1e-10
CLAMP_TOL = 1e-14
AGGREGATE_TOL = 1e-9


@dataclass(frozen=True)
class FamilyVector:
    w: int
    column: np.ndarray


@dataclass(frozen=True)
class ReductionCertificate:
    lambda_out: np.ndarray
    removed: list
    preserved: dict  # name -> (before, after)
    max_deviation: float
    steps: list = field(default_factory=list)  # (zeroed w, gamma) per iteration

    @property
    def ok(self):
        return self.max_deviation <= AGGREGATE_TOL

    def as_dict(self):
        def plain(x):
            return np.asarray(x).tolist()

        return {
            "lambda_out": plain(self.lambda_out),
            "removed": list(self.removed),
            "preserved": {k: [plain(b), plain(a)] for k, (b, a) in self.preserved.items()},
            "max_deviation": self.max_deviation,
            "steps": [[int(w), float(g)] for w, g in self.steps],
        }


def _table(p_star):
    p = np.asarray(getattr(p_star, "p", p_star), dtype=float)
    if p.ndim != 2:
        raise DimensionError("coupling must be a 2-d table")
    return p


def build_family(p_star, ce_bar, cd_bar, support=None):
    """Moment vectors for the active columns of ``p_star``."""
    p = _table(p_star)
    if support is None:
        support = getattr(p_star, "support", range(p.shape[1]))
    ce_bar = np.asarray(ce_bar, dtype=float)
    cd_bar = np.asarray(cd_bar, dtype=float)
    if ce_bar.shape != p.shape or cd_bar.shape != p.shape:
        raise DimensionError("cost tables must match the coupling shape")
    family = []
    for w in support:
        col = np.clip(p[:, w], 0.0, 1.0)
        vec = np.concatenate([
            col,
            [float(np.sum(h(col))), float(col @ ce_bar[:, w]), float(col @ cd_bar[:, w]), 1.0],
        ])
        family.append(FamilyVector(int(w), vec))
    return family


def _matrix(F):
    return np.column_stack([f.column for f in F]) if F else np.zeros((0, 0))


def find_null_direction(F):
    """Non-zero ``mu`` with ``sum_w mu_w x_w = 0``, or ``None`` if the family is independent.

    ``mu`` is scaled to unit max-norm with its first non-zero entry positive.
    """
    if len(F) < 2:
        return None
    X = _matrix(F)
    n = X.shape[1]
    _, sv, vt = np.linalg.svd(X, full_matrices=True)
    scale = sv[0] if sv.size else 1.0
    rank = int(np.sum(sv > 1e-12 * max(X.shape) * scale))
    if rank >= n:
        return None
    mu = vt[-1].copy()
    mu /= np.max(np.abs(mu))
    first = np.flatnonzero(np.abs(mu) > 1e-12)[0]
    if mu[first] < 0:
        mu = -mu
    mu[np.abs(mu) < 1e-15] = 0.0
    resid = float(np.max(np.abs(X @ mu)))
    if resid > NULL_TOL:
        raise DegeneracyError(f"null direction residual {resid:.3e} exceeds {NULL_TOL:.0e}")
    return mu


def _interval_end(lam, mu):
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if lam.shape != mu.shape:
        raise DimensionError("lambda and mu differ in length")
    plus = np.flatnonzero(mu > 0)
    minus = np.flatnonzero(mu < 0)
    if plus.size == 0 and minus.size == 0:
        raise InputError("mu is the zero vector")
    if abs(mu.sum()) > 1e-9 * np.max(np.abs(mu)):
        raise InputError(f"mu must sum to zero (sum {mu.sum():.3e})")
    if np.any(lam[mu != 0] <= 0):
        raise InputError("support of mu must lie inside the support of lambda")
    hi_ratios = lam[plus] / mu[plus]
    lo_ratios = lam[minus] / mu[minus]
    w_hi = plus[int(np.argmin(hi_ratios))]
    w_lo = minus[int(np.argmax(lo_ratios))]
    g_hi = float(hi_ratios.min())
    g_lo = float(lo_ratios.max())
    # the end with the smaller |gamma| zeroes the larger |mu_w| / lam_w
    if g_hi <= -g_lo:
        return g_hi, int(w_hi)
    return g_lo, int(w_lo)


def reduce_step(lam, mu):
    """Slide ``lam`` along ``-mu`` to the boundary of the non-negative range."""
    return _reduce_step(lam, mu)[0]


def _reduce_step(lam, mu):
    gamma, w0 = _interval_end(lam, mu)
    out = np.asarray(lam, dtype=float) - gamma * np.asarray(mu, dtype=float)
    out[w0] = 0.0
    low = float(out.min())
    if low < -CLAMP_TOL:
        raise DegeneracyError(f"reduced lambda has entry {low:.3e} below -{CLAMP_TOL:.0e}")
    out[out < 0] = 0.0
    out /= out.sum()
    return out, gamma, w0


def aggregates(lam, p, ce_bar, cd_bar):
    lam = np.asarray(lam, dtype=float)
    p = _table(p)
    act = lam > 0
    pa, la = np.clip(p[:, act], 0.0, 1.0), lam[act]
    return {
        "source_marginal": pa @ la,
        "entropy_term": float(la @ np.sum(h(pa), axis=0)),
        "encoder_cost": float(la @ np.sum(pa * np.asarray(ce_bar)[:, act], axis=0)),
        "decoder_cost": float(la @ np.sum(pa * np.asarray(cd_bar)[:, act], axis=0)),
        "total_mass": float(la.sum()),
    }


def reduce_support(lam, p_star, ce_bar, cd_bar, pu=None, R=None):
    """Shrink the support of ``lam`` to at most |U|+3 preserving all five aggregates.

    ``pu`` and ``R`` are only used to validate the input (``p_star`` must
    reproduce ``pu``); the reduction itself never touches ``p_star``.
    """
    p = _table(p_star)
    lam = np.asarray(lam, dtype=float).copy()
    U, W = p.shape
    if lam.size != W:
        raise DimensionError("lambda length does not match the coupling")
    before = aggregates(lam, p, ce_bar, cd_bar)
    if pu is not None:
        dev = float(np.max(np.abs(before["source_marginal"] - np.asarray(pu, dtype=float))))
        if dev > 1e-8:
            raise InputError(f"coupling does not reproduce the source (deviation {dev:.3e})")
    removed, steps = [], []
    while np.count_nonzero(lam) > U + 3:
        support = np.flatnonzero(lam > 0)
        F = build_family(p, ce_bar, cd_bar, support=support)
        mu_s = find_null_direction(F)
        if mu_s is None:
            raise DegeneracyError("no null direction although the support exceeds |U|+3")
        mu = np.zeros(W)
        mu[support] = mu_s
        lam, gamma, w0 = _reduce_step(lam, mu)
        gone = [int(w) for w in support if lam[w] == 0.0]
        removed.extend(gone)
        steps.append((w0, gamma))
    after = aggregates(lam, p, ce_bar, cd_bar)
    preserved = {k: (before[k], after[k]) for k in before}
    dev = max(float(np.max(np.abs(np.asarray(b) - np.asarray(a)))) for b, a in preserved.values())
    return ReductionCertificate(lam, removed, preserved, dev, steps)
