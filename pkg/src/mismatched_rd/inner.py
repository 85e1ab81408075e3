"""Encoder best response: entropy-constrained transport with a KKT certificate.

The program is

    minimise   sum_w lam_w sum_u p_uw ce_uw
    subject to sum_w lam_w p_uw = pu_u,  sum_u p_uw = 1,
               H(U) + sum_w lam_w sum_u h(p_uw) <= R.

Stationarity forces the Gibbs form ``p_uw ∝ exp2(-(ce_uw + nu1_u)/nu3)`` per
column.  For a fixed temperature the scaling potentials are found by the
kernel in :mod:`mismatched_rd.kernels`; the temperature is then tuned until
the rate constraint binds.  When even the zero-temperature limit satisfies
the rate budget the constraint is inactive, ``nu3 = 0`` and the solution is
the maximum-entropy point of the optimal face of the transport LP.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import linprog

from . import kernels
from .errors import ConvergenceError, DimensionError, DomainError
from .prob import Coupling, as_cost_matrix, entropy, info_term

log = logging.getLogger(__name__)

LN2 = float(np.log(2.0))
P_FLOOR = 1e-12
# multiplier reported at R = 0, where no finite nu3 exists (see kkt_residual)
ZERO_RATE_NU3 = 1e8
ANNEAL_FACTOR = 0.1
CONVERGED = 1e-10
MAX_SPLIT = 6


class Status(str, Enum):
    RATE_ACTIVE = "RateActive"
    RATE_INACTIVE = "RateInactive"


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 300
    fixed_point_tol: float = 1e-13
    bisection_tol: float = 1e-11
    temperature_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be positive")
        for name in ("fixed_point_tol", "bisection_tol", "temperature_floor"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0")


@dataclass(frozen=True)
class InnerSolution:
    p_star: Coupling
    nu1: np.ndarray
    nu2: np.ndarray  # full width; NaN off the support of lam
    nu3: float
    encoder_value: float
    info: float
    status: Status
    temperature: float = 0.0
    face: np.ndarray | None = field(default=None, repr=False)
    iterations: int = 0

    @property
    def support(self):
        return self.p_star.support


@dataclass(frozen=True)
class KKTReport:
    stationarity: float
    zero_entries: float
    marginal: float
    normalization: float
    rate_feasibility: float
    slackness: float

    @property
    def max_residual(self):
        return max(
            self.stationarity,
            self.zero_entries,
            self.marginal,
            self.normalization,
            self.rate_feasibility,
            self.slackness,
        )

    def ok(self, kkt_tol=1e-6, feas_tol=1e-8):
        return (
            self.max_residual <= kkt_tol
            and max(self.marginal, self.normalization, self.rate_feasibility) <= feas_tol
        )

    def as_dict(self):
        return {
            "stationarity": self.stationarity,
            "zero_entries": self.zero_entries,
            "marginal": self.marginal,
            "normalization": self.normalization,
            "rate_feasibility": self.rate_feasibility,
            "slackness": self.slackness,
            "max_residual": self.max_residual,
        }


@dataclass
class _Core:
    p: np.ndarray
    nu1: np.ndarray
    nu2: np.ndarray
    nu3: float
    info: float
    status: Status
    temperature: float
    face: np.ndarray | None
    iterations: int


def _validate(pu, lam, cost, R):
    pu = np.asarray(pu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    cost = as_cost_matrix(cost)
    if cost.shape != (pu.size, lam.size):
        raise DimensionError(f"cost shape {cost.shape} != ({pu.size}, {lam.size})")
    if np.any(pu <= 0):
        raise DomainError("source distribution must have full support")
    if np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-12:
        raise DomainError("lambda must be a distribution")
    if abs(pu.sum() - 1.0) > 1e-12:
        raise DomainError("source must sum to 1")
    if not R >= 0:
        raise DomainError("rate must be >= 0")
    return pu, lam, cost


def _multipliers(T, a, b):
    shift = float(np.mean(b))
    nu1 = -T * (a + 1.0) + T * shift
    nu2 = -T * b - T * shift
    return nu1, nu2


def _gauge(nu1, nu2):
    s = float(np.mean(nu2))
    return nu1 + s, nu2 - s


class _Gibbs:
    """Temperature-indexed Gibbs solutions on a fixed (masked) cost."""

    def __init__(self, pu, lam, cost, mask, opts):
        self.pu = np.ascontiguousarray(pu)
        self.lam = np.ascontiguousarray(lam)
        self.cm = np.ascontiguousarray(np.where(mask, cost, np.inf))
        self.opts = opts
        self.iterations = 0

    def at(self, T, a0):
        U, W = self.cm.shape
        a = np.array(a0, dtype=float)
        p = np.empty((U, W))
        b = np.empty(W)
        it, err = kernels.gibbs_solve(
            self.cm, self.pu, self.lam, T, a, p, b,
            self.opts.fixed_point_tol, self.opts.max_iterations,
        )
        self.iterations += it
        info = kernels.info_bits(p, self.lam, self.pu)
        return {"T": T, "a": a, "b": b, "p": p, "err": err, "info": info}


def _warm(state, T):
    return state["a"] * (state["T"] / T)


def _advance(g, prev, T, depth=0):
    """Gibbs state at ``T`` warm-started from ``prev``.

    Long temperature jumps can leave the Newton iteration stalled far from
    the optimum, so the step is halved in log T until the kernel converges.
    """
    st = g.at(T, _warm(prev, T))
    if st["err"] <= CONVERGED:
        return st
    if depth < MAX_SPLIT:
        mid = float(np.sqrt(prev["T"] * T))
        half = _advance(g, prev, mid, depth + 1)
        return _advance(g, half, T, depth + 1)
    raise ConvergenceError(
        f"Gibbs kernel did not converge at T={T:.3e}", st["p"], st["err"]
    )


def _root_find(g, R, lo, hi, opts):
    """Illinois iteration on log T; ``lo`` has info > R, ``hi`` has info <= R."""
    x_lo, f_lo = np.log(lo["T"]), lo["info"] - R
    x_hi, f_hi = np.log(hi["T"]), hi["info"] - R
    side = 0
    for _ in range(200):
        if abs(f_hi) <= opts.bisection_tol:
            return hi
        if x_hi - x_lo <= 1e-15 * max(1.0, abs(x_hi)):
            break
        x = x_hi - f_hi * (x_hi - x_lo) / (f_hi - f_lo)
        if not (x_lo < x < x_hi):
            x = 0.5 * (x_lo + x_hi)
        T = float(np.exp(x))
        near = lo if abs(x - x_lo) < abs(x - x_hi) else hi
        st = _advance(g, near, T)
        f = st["info"] - R
        if f > opts.bisection_tol:
            x_lo, f_lo, lo = x, f, st
            if side == -1:
                f_hi *= 0.5
            side = -1
        else:
            x_hi, f_hi, hi = x, f, st
            if f <= 0 and side == 1:
                f_lo *= 0.5
            side = 1
            if f > 0:
                # within tolerance above R: accept
                return hi
    return hi


def _refit_face(cost, mask, nu1, nu2, zmask, span):
    """Adjust multipliers so reduced costs vanish exactly on ``zmask``.

    Returns corrected ``(nu1, nu2)`` or ``None`` if the pattern is not the
    support of an optimal face (inconsistent equalities or a negative
    reduced cost elsewhere on the mask).
    """
    U, W = cost.shape
    us, ws = np.nonzero(zmask)
    A = np.zeros((us.size, U + W))
    A[np.arange(us.size), us] = 1.0
    A[np.arange(us.size), U + ws] = 1.0
    y = -(cost[us, ws] + nu1[us] + nu2[ws])
    x = np.linalg.lstsq(A, y, rcond=None)[0]
    nu1 = nu1 + x[:U]
    nu2 = nu2 + x[U:]
    r = cost + nu1[:, None] + nu2[None, :]
    tol = 1e-10 * (1.0 + span)
    if np.max(np.abs(r[zmask])) > tol:
        return None
    off = mask & ~zmask
    if off.any() and np.min(r[off]) < -tol:
        return None
    return nu1, nu2


def _lp_face(pu, lam, cost, mask, span):
    U, W = cost.shape
    A = np.zeros((U + W, U * W))
    for u in range(U):
        A[u, u * W:(u + 1) * W] = 1.0
    for w in range(W):
        A[U + w, w::W] = 1.0
    bounds = [(0.0, None) if m else (0.0, 0.0) for m in mask.ravel()]
    c = np.where(mask, cost, 0.0).ravel()
    res = linprog(c, A_eq=A, b_eq=np.concatenate([pu, lam]), bounds=bounds, method="highs")
    if res.status != 0:
        raise ConvergenceError(f"transport LP failed: {res.message}")
    y = res.eqlin.marginals
    nu1, nu2 = -y[:U], -y[U:]
    r = cost + nu1[:, None] + nu2[None, :]
    z = mask & (r <= 1e-9 * (1.0 + span))
    fitted = _refit_face(cost, mask, nu1, nu2, z, span)
    if fitted is None:
        fitted = (nu1, nu2)
    return z, fitted


def _max_entropy_on(g, zmask, opts):
    """Maximum-entropy coupling supported on ``zmask`` (the I-projection)."""
    pu, lam = g.pu, g.lam
    for _ in range(6):
        proj = _Gibbs(pu, lam, np.zeros(zmask.shape), zmask, opts)
        st = proj.at(1.0, np.log(pu))
        g.iterations += proj.iterations
        if st["err"] <= 1e-12:
            return st, zmask
        # entries forced to zero by the marginals: drop and retry
        keep = zmask & (st["p"] > 1e-13)
        if keep.sum() == zmask.sum():
            break
        zmask = keep
    if st["err"] > 1e-9:
        raise ConvergenceError("maximum-entropy projection did not converge", st["p"], st["err"])
    return st, zmask


def _solve_core(pu, lam, cost, R, mask, opts):
    """Entropy-constrained transport on the support-restricted instance."""
    g = _Gibbs(pu, lam, cost, mask, opts)
    vals = cost[mask]
    span = float(vals.max() - vals.min())
    T_floor = opts.temperature_floor / LN2

    if span == 0.0:
        face_state = None
    else:
        T = span
        st = g.at(T, np.log(pu))
        if st["info"] > R:
            hi = None
            for _ in range(60):
                T *= 10.0
                nxt = _advance(g, st, T)
                if nxt["info"] <= R:
                    hi = nxt
                    break
                st = nxt
            if hi is None:
                raise ConvergenceError("rate bracket not found", st["p"], st["info"] - R)
            return _active(g, _root_find(g, R, st, hi, opts))
        prev = st
        while True:
            T = max(prev["T"] * ANNEAL_FACTOR, T_floor)
            st = _advance(g, prev, T)
            if st["info"] > R + opts.bisection_tol:
                return _active(g, _root_find(g, R, st, prev, opts))
            if T <= T_floor:
                break
            prev = st
        face_state = st

    # rate-inactive candidate: identify the optimal face of the transport LP
    if face_state is None:
        zmask = mask.copy()
        nu1 = np.zeros(pu.size)
        nu2 = -np.full(lam.size, float(vals.max()))
        fitted = _refit_face(cost, mask, nu1, nu2, zmask, span)
    else:
        nu1, nu2 = _multipliers(face_state["T"], face_state["a"], face_state["b"])
        zmask = mask & (face_state["p"] > 1e-10)
        fitted = _refit_face(cost, mask, nu1, nu2, zmask, span)
    if fitted is None:
        log.debug("face refit failed; falling back to LP duals")
        zmask, fitted = _lp_face(pu, lam, cost, mask, span)
    proj, zmask = _max_entropy_on(g, zmask, opts)
    if proj["info"] <= R + opts.bisection_tol:
        nu1, nu2 = _refit_face(cost, mask, *fitted, zmask, span) or fitted
        nu1, nu2 = _gauge(nu1, nu2)
        return _Core(proj["p"], nu1, nu2, 0.0, proj["info"], Status.RATE_INACTIVE,
                     0.0, zmask, g.iterations)

    # rate binds below the temperature floor
    hi = face_state
    lo = None
    T = hi["T"]
    for _ in range(12):
        T *= ANNEAL_FACTOR
        st = _advance(g, hi, T)
        if st["info"] > R + opts.bisection_tol:
            lo = st
            break
        hi = st
    if lo is None:
        return _active(g, hi)
    return _active(g, _root_find(g, R, lo, hi, opts))


def _active(g, st):
    T = st["T"]
    nu1, nu2 = _multipliers(T, st["a"], st["b"])
    return _Core(st["p"], nu1, nu2, T * LN2, st["info"], Status.RATE_ACTIVE, T, None,
                 g.iterations)


def _zero_rate(pu, lam, cost):
    U, W = cost.shape
    p = np.repeat(pu[:, None], W, axis=1)
    # best additive fit of the cost; the rate multiplier is effectively infinite
    A = np.zeros((U * W, U + W))
    for u in range(U):
        for w in range(W):
            A[u * W + w, u] = 1.0
            A[u * W + w, U + w] = 1.0
    x = np.linalg.lstsq(A, -cost.ravel(), rcond=None)[0]
    nu3 = ZERO_RATE_NU3
    nu1 = x[:U] - nu3 * (np.log2(pu) + 1.0 / LN2)
    nu1, nu2 = _gauge(nu1, x[U:])
    return _Core(p, nu1, nu2, nu3, 0.0, Status.RATE_ACTIVE, nu3 / LN2, None, 0)


def _embed(core, pu, lam, cost_full, support):
    U, W = cost_full.shape
    p_full = np.repeat(pu[:, None], W, axis=1)
    p_full[:, support] = core.p
    nu2 = np.full(W, np.nan)
    nu2[support] = core.nu2
    face = None
    if core.face is not None:
        face = np.zeros((U, W), dtype=bool)
        face[:, support] = core.face
    return p_full, nu2, face


def solve_inner(pu, lam, ce_bar, R, opts=None):
    """Minimise the encoder's expected cost under the rate and marginal constraints."""
    opts = opts or SolverOptions()
    pu, lam, ce_bar = _validate(pu, lam, ce_bar, R)
    support = np.flatnonzero(lam > 0)
    lam_s = lam[support]
    cost = ce_bar[:, support]
    if R == 0:
        core = _zero_rate(pu, lam_s, cost)
    else:
        core = _solve_core(pu, lam_s, cost, float(R), np.ones(cost.shape, dtype=bool), opts)
    p_full, nu2, face = _embed(core, pu, lam_s, ce_bar, support)
    value = float(lam_s @ np.sum(core.p * cost, axis=0))
    return InnerSolution(
        p_star=Coupling(p_full, tuple(support)),
        nu1=core.nu1,
        nu2=nu2,
        nu3=float(core.nu3),
        encoder_value=value,
        info=float(core.info),
        status=core.status,
        temperature=float(core.temperature),
        face=face,
        iterations=core.iterations,
    )


def lagrangian(p, nu1, nu2, nu3, pu, lam, ce_bar, R):
    """Lagrangian of the encoder program at conditional table ``p``."""
    pu = np.asarray(pu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    s = np.flatnonzero(lam > 0)
    p = np.asarray(p, dtype=float)[:, s]
    c = np.asarray(ce_bar, dtype=float)[:, s]
    ls = lam[s]
    n2 = np.asarray(nu2, dtype=float)[s]
    obj = float(ls @ np.sum(p * c, axis=0))
    g1 = p @ ls - pu
    g2 = ls * (p.sum(axis=0) - 1.0)
    g3 = info_term(ls, p) + entropy(pu) - R
    return obj + float(nu1 @ g1) + float(n2 @ g2) + nu3 * g3


def kkt_residual(sol, pu, lam, ce_bar, R, p_floor=P_FLOOR):
    """Per-condition residuals of the encoder program's KKT system.

    Stationarity is measured on entries above ``p_floor`` and divided by
    ``max(1, nu3)``, the usual multiplier scaling; at ``R = 0`` no finite
    multiplier exists and the certificate is the large-``nu3`` limit.
    Entries at or below ``p_floor`` must satisfy the one-sided condition of
    the subdifferential of h at 0 instead.
    """
    pu = np.asarray(pu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    ce_bar = np.asarray(ce_bar, dtype=float)
    s = np.flatnonzero(lam > 0)
    p = np.asarray(sol.p_star.p, dtype=float)[:, s]
    c = ce_bar[:, s]
    ls = lam[s]
    nu1 = np.asarray(sol.nu1, dtype=float)
    nu2 = np.asarray(sol.nu2, dtype=float)[s]
    nu3 = float(sol.nu3)
    scale = max(1.0, nu3)

    reduced = c + nu1[:, None] + nu2[None, :]
    pos = p > p_floor
    with np.errstate(divide="ignore"):
        logp = np.where(pos, np.log2(np.where(pos, p, 1.0)), 0.0)
    stat = np.abs(reduced + nu3 * (logp + 1.0 / LN2))
    stationarity = float(stat[pos].max()) / scale if pos.any() else 0.0
    threshold = nu3 * (-np.log2(p_floor) - 1.0 / LN2)
    zero = np.maximum(0.0, threshold - reduced)
    zero_entries = float(zero[~pos].max()) / scale if (~pos).any() else 0.0

    marginal = float(np.max(np.abs(p @ ls - pu)))
    normalization = float(np.max(np.abs(p.sum(axis=0) - 1.0)))
    pos_all = p > 0
    ratio = np.where(pos_all, p, 1.0) / pu[:, None]
    info = float(ls @ np.where(pos_all, p * np.log2(ratio), 0.0).sum(axis=0))
    rate_feasibility = max(0.0, info - R)
    slackness = abs(nu3 * (info - R))
    return KKTReport(stationarity, zero_entries, marginal, normalization,
                     rate_feasibility, slackness)


# ---------------------------------------------------------------- grid oracle

_LEVEL_POINTS = 21
_EXHAUSTIVE_LIMIT = 2_000_000


def _couplings_from_free(x, pu, lam):
    """Complete free entries ``J[:U-1, :W-1]`` (shape (N, U-1, W-1)) to joints."""
    N = x.shape[0]
    U, W = pu.size, lam.size
    J = np.empty((N, U, W))
    J[:, :U - 1, :W - 1] = x
    J[:, U - 1, :W - 1] = lam[:W - 1] - x.sum(axis=1)
    J[:, :U - 1, W - 1] = pu[:U - 1] - x.sum(axis=2)
    J[:, U - 1, W - 1] = pu[U - 1] - J[:, U - 1, :W - 1].sum(axis=1)
    return J


def _joint_info(J, pu, lam):
    ref = pu[:, None] * lam[None, :]
    pos = J > 0
    ratio = np.where(pos, J, 1.0) / ref
    return np.where(pos, J * np.log2(ratio), 0.0).sum(axis=(1, 2))


def grid_search_couplings(pu, lam, score, feasible, resolution, polish=2):
    """Minimise ``score(J)`` over grid joints satisfying ``feasible(J)``.

    The free block ``J[:U-1, :W-1]`` is gridded (the marginals fix the rest).
    Low dimensions are enumerated exhaustively at ``resolution``, higher ones
    by coarse-to-fine zooming around the best feasible points.  ``polish``
    further levels, each ten times finer, are searched around the winners so
    optima at off-grid vertices are not overestimated by a full step.
    Returns ``(best_score, best_joint)`` or ``(inf, None)``.
    """
    U, W = pu.size, lam.size
    k = (U - 1) * (W - 1)
    if k == 0:
        J = (pu[:, None] * lam[None, :])[None]
        ok = feasible(J)
        return (float(score(J)[0]), J[0]) if ok[0] else (np.inf, None)
    ub = np.array([[min(pu[u], lam[w]) for w in range(W - 1)] for u in range(U - 1)]).ravel()

    def evaluate(axes):
        mesh = np.meshgrid(*axes, indexing="ij")
        x = np.stack([m.ravel() for m in mesh], axis=1).reshape(-1, U - 1, W - 1)
        J = _couplings_from_free(x, pu, lam)
        ok = np.all(J >= -1e-15, axis=(1, 2))
        J = np.clip(J[ok], 0.0, None)
        if J.shape[0] == 0:
            return np.empty(0), J
        J = J[feasible(J)]
        return score(J), J

    def axis(lo, hi, step):
        lo, hi = max(0.0, lo), min(hi, hi)
        ax = np.arange(lo, hi + 0.5 * step, step)
        return np.append(ax[ax <= hi + 1e-15], hi)

    def search(centers, half, step):
        found = []
        for c in centers:
            axes = [axis(c[i] - half[i], min(ub[i], c[i] + half[i]), step[i]) for i in range(k)]
            vals, J = evaluate(axes)
            if vals.size:
                order = np.argsort(vals, kind="stable")[:4]
                found.extend((float(vals[j]), J[j]) for j in order)
        found.sort(key=lambda t: t[0])
        return found

    n_full = np.prod(np.floor(ub / resolution) + 2)
    if n_full <= _EXHAUSTIVE_LIMIT:
        found = search([ub / 2.0], ub / 2.0, np.full(k, resolution))
        step = np.full(k, resolution)
    else:
        centers, half = [ub / 2.0], ub / 2.0
        while True:
            step = 2.0 * half / (_LEVEL_POINTS - 1)
            final = np.all(step <= resolution)
            if final:
                step = np.full(k, resolution)
                half = step * (_LEVEL_POINTS - 1) / 2.0
            found = search(centers, half, step)
            if not found:
                return np.inf, None
            if final:
                break
            centers = [f[1][:U - 1, :W - 1].ravel() for f in found[:4]]
            half = 3.0 * step
    if not found:
        return np.inf, None
    best = found[0]
    for _ in range(polish):
        centers = [f[1][:U - 1, :W - 1].ravel() for f in found[:4]]
        half = step
        step = step / 10.0
        found = search(centers, half, step)
        if not found:
            break
        best = min(best, found[0], key=lambda t: t[0])
    return best


def brute_force_inner(pu, lam, ce_bar, R, grid_resolution=1e-3):
    """Grid oracle for the encoder program (|U| <= 3 and |supp lam| <= 3)."""
    pu, lam, ce_bar = _validate(pu, lam, ce_bar, R)
    s = np.flatnonzero(lam > 0)
    lam_s, c = lam[s], ce_bar[:, s]
    if pu.size > 3 or s.size > 3:
        raise DimensionError("brute_force_inner supports |U|, |supp lam| <= 3")
    if R == 0:
        return float(pu @ c @ lam_s)
    value, _ = grid_search_couplings(
        pu, lam_s,
        score=lambda J: np.einsum("nuw,uw->n", J, c),
        feasible=lambda J: _joint_info(J, pu, lam_s) <= R + 1e-12,
        resolution=grid_resolution,
    )
    return value
