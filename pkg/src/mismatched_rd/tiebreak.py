"""Pessimistic selection among the encoder's optimal couplings.

When the encoder program has a unique solution (zero rate, or a binding rate
constraint with ``nu3 > 0`` where the objective is strictly convex along the
feasible set) the selection is trivial.  Otherwise the optimal set is the
optimal face of the transport LP intersected with the rate ball.  Entries
whose encoder reduced cost is at most ``delta`` span a face on which every
coupling costs the encoder at most ``ce_star + delta``; the decoder's cost
is maximised over that face with the same entropy-constrained solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, InputError
from .inner import (
    InnerSolution,
    SolverOptions,
    Status,
    _joint_info,
    _solve_core,
    _validate,
    grid_search_couplings,
    solve_inner,
)
from .prob import Coupling, as_cost_matrix


@dataclass(frozen=True)
class TiebreakSolution:
    p_tilde: Coupling
    decoder_value: float
    encoder_slack: float
    info: float
    delta: float
    method: str  # "unique" or "face"


PENALTY = 100.0
# relative slack levels reported to show how the selection depends on delta
DELTA_LEVELS = (1e-6, 1e-4, 1e-2)


def default_delta(ce_bar):
    ce_bar = np.asarray(ce_bar, dtype=float)
    span = float(ce_bar.max() - ce_bar.min())
    return 1e-6 * span if span > 0 else 1e-12


def _values(p, lam_s, c):
    return float(lam_s @ np.sum(p * c, axis=0))


def solve_tiebreak(pu, lam, ce_bar, cd_bar, R, ce_star, delta=None, opts=None, inner=None):
    """Maximise the decoder's expected cost over the delta-optimal encoder couplings.

    ``inner`` may carry the encoder solution already computed for the same
    inputs; otherwise it is recomputed.
    """
    opts = opts or SolverOptions()
    pu, lam, ce_bar = _validate(pu, lam, ce_bar, R)
    cd_bar = as_cost_matrix(cd_bar, "cd_bar")
    if cd_bar.shape != ce_bar.shape:
        raise DimensionError("cd_bar and ce_bar differ in shape")
    if delta is None:
        delta = default_delta(ce_bar)
    if not delta > 0:
        raise DomainError("delta must be > 0")
    if inner is None:
        inner = solve_inner(pu, lam, ce_bar, R, opts)
    if not isinstance(inner, InnerSolution):
        raise InputError("inner must be an InnerSolution")
    if abs(inner.encoder_value - ce_star) > delta + 1e-9:
        raise InputError(
            f"ce_star {ce_star!r} is not the encoder optimum {inner.encoder_value!r} within delta"
        )

    s = np.flatnonzero(lam > 0)
    lam_s, ce, cd = lam[s], ce_bar[:, s], cd_bar[:, s]
    p_in = np.asarray(inner.p_star.p)[:, s]

    if R == 0 or inner.status is Status.RATE_ACTIVE:
        p, info, method = p_in, inner.info, "unique"
    else:
        reduced = ce + inner.nu1[:, None] + inner.nu2[s][None, :]
        mask = reduced <= delta
        if inner.face is not None:
            mask |= inner.face[:, s]
        core = _solve_core(pu, lam_s, -cd, float(R), mask, opts)
        p, info, method = core.p, core.info, "face"
        if _values(p, lam_s, cd) < _values(p_in, lam_s, cd):
            p, info = p_in, inner.info

    p_full = np.array(inner.p_star.p, dtype=float)
    p_full[:, s] = p
    return TiebreakSolution(
        p_tilde=Coupling(p_full, tuple(s)),
        decoder_value=_values(p, lam_s, cd),
        encoder_slack=_values(p, lam_s, ce) - ce_star,
        info=float(info),
        delta=float(delta),
        method=method,
    )


def delta_sweep(pu, lam, ce_bar, cd_bar, R, inner, levels=DELTA_LEVELS, opts=None):
    """Pessimistic value at several slacks, each a multiple of the range of ``ce_bar``.

    Returns ``[(delta, decoder_value), ...]``; the values are non-decreasing.
    """
    ce_bar = np.asarray(ce_bar, dtype=float)
    span = float(ce_bar.max() - ce_bar.min()) or 1.0
    out = []
    for level in levels:
        d = level * span
        tb = solve_tiebreak(pu, lam, ce_bar, cd_bar, R, inner.encoder_value, d, opts, inner)
        out.append((d, tb.decoder_value))
    return out


def brute_force_tiebreak(pu, lam, ce_bar, cd_bar, R, ce_star, delta, grid_resolution=1e-3):
    """Grid oracle for the pessimistic selection (|U| <= 3 and |supp lam| <= 3).

    The encoder-cost cap is enforced as an exact penalty: grid points pay
    ``PENALTY * excess`` for exceeding ``ce_star + delta``.  Filtering on the
    cap instead leaves too few grid points inside thin optimal sets for the
    zoom levels to track; with a penalty above the cap's multiplier the
    penalised maximum equals the constrained one.
    """
    pu, lam, ce_bar = _validate(pu, lam, ce_bar, R)
    cd_bar = as_cost_matrix(cd_bar, "cd_bar")
    s = np.flatnonzero(lam > 0)
    lam_s, ce, cd = lam[s], ce_bar[:, s], cd_bar[:, s]
    if pu.size > 3 or s.size > 3:
        raise DimensionError("brute_force_tiebreak supports |U|, |supp lam| <= 3")
    if R == 0:
        return float(pu @ cd @ lam_s)
    span_e = float(ce.max() - ce.min())
    span_d = float(cd.max() - cd.min())
    weight = PENALTY * (1.0 + span_d) / (span_e if span_e > 0 else 1.0)
    cap = ce_star + delta

    def score(J):
        excess = np.maximum(0.0, np.einsum("nuw,uw->n", J, ce) - cap)
        return -np.einsum("nuw,uw->n", J, cd) + weight * excess

    value, _ = grid_search_couplings(
        pu, lam_s,
        score=score,
        feasible=lambda J: _joint_info(J, pu, lam_s) <= R + 1e-12,
        resolution=grid_resolution,
        polish=4,
    )
    return -value
