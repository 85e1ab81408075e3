"""Search over decoder candidates ``(lam, Q_{V|W})`` for the pessimistic value.

The outer problem is non-convex, so the search combines an exhaustive sweep
over deterministic kernels paired with structured weight vectors (constant
decoders, pushforwards of the source through set partitions, uniform
weights) and a seeded multistart of coordinate-wise golden-section descent
on softmax logits.  The reported value is the best evaluated candidate and
is therefore an upper bound; ``certified`` is always False.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, SolverError
from .inner import InnerSolution, SolverOptions, solve_inner
from .prob import Distribution, Kernel
from .tiebreak import TiebreakSolution, default_delta, solve_tiebreak

log = logging.getLogger(__name__)

ZERO_WEIGHT = 1e-12
LOGIT_FLOOR = math.log(1e-13)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OuterCandidate:
    lam: np.ndarray
    kernel: np.ndarray  # (W, V), row w is Q(.|w)

    def __post_init__(self):
        lam = np.asarray(Distribution(self.lam).probs)
        kernel = np.asarray(Kernel(self.kernel).rows)
        if kernel.shape[0] != lam.size:
            raise DimensionError("kernel must have one row per auxiliary symbol")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "kernel", kernel)

    @property
    def n_w(self):
        return self.lam.size

    def as_dict(self):
        return {"lambda": self.lam.tolist(), "decoder_kernel": self.kernel.tolist()}


@dataclass(frozen=True)
class OuterOptions:
    starts: int = 64
    seed: int = 0
    workers: int = 1
    n_w: int | None = None
    sweep_limit: int = 4096
    evals_per_start: int = 150
    golden_iterations: int = 4
    logit_span: float = 4.0
    delta: float | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.starts < 0 or self.workers < 1 or self.evals_per_start < 1:
            raise DomainError("starts >= 0, workers >= 1 and evals_per_start >= 1 required")


@dataclass(frozen=True)
class Evaluation:
    value: float
    candidate: OuterCandidate
    inner: InnerSolution
    tiebreak: TiebreakSolution


@dataclass(frozen=True)
class OuterResult:
    value: float
    best: OuterCandidate
    inner: InnerSolution
    tiebreak: TiebreakSolution
    starts_used: int
    value_trace: list
    sweep_size: int
    evaluations: int
    best_origin: str
    certified: bool = False


def _arrays(spec):
    return spec.pu, spec.ce, spec.cd


def evaluate_full(spec, cand, R, opts=None):
    """Inner solve then pessimistic selection for one candidate."""
    opts = opts or OuterOptions()
    pu, ce, cd = _arrays(spec)
    if cand.kernel.shape[1] != ce.shape[1]:
        raise DimensionError("kernel output alphabet does not match the costs")
    ce_bar = ce @ cand.kernel.T
    cd_bar = cd @ cand.kernel.T
    inner = solve_inner(pu, cand.lam, ce_bar, R, opts.solver)
    delta = opts.delta if opts.delta is not None else default_delta(ce_bar)
    tb = solve_tiebreak(pu, cand.lam, ce_bar, cd_bar, R, inner.encoder_value, delta,
                        opts.solver, inner=inner)
    return Evaluation(tb.decoder_value, cand, inner, tb)


def evaluate_candidate(spec, cand, R, opts=None):
    """Pessimistic decoder cost of one candidate."""
    try:
        return evaluate_full(spec, cand, R, opts).value
    except (SolverError, ValueError) as exc:
        raise type(exc)(f"{exc} [candidate {cand.as_dict()}]") from exc


def _safe_value(spec, cand, R, opts):
    try:
        return evaluate_full(spec, cand, R, opts).value
    except (SolverError, ValueError) as exc:
        log.debug("candidate failed: %s", exc)
        return math.inf


# -------------------------------------------------------------------- sweep

def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def _deterministic(assign, n_w, n_v):
    k = np.zeros((n_w, n_v))
    k[np.arange(n_w), assign] = 1.0
    return k


def _canonical(lam, assign):
    return tuple(sorted((round(float(l), 15), int(v)) for l, v in zip(lam, assign) if l > 0))


def sweep_candidates(pu, n_v, n_w, seed=0, limit=4096):
    """Structured candidates: constant decoders, partition pushforwards, uniform weights.

    Deterministic kernels are enumerated only when ``n_v ** n_w <= limit``;
    constant decoders are always included.
    """
    n_u = pu.size
    seen, out = set(), []

    def add(lam, assign):
        key = _canonical(lam, assign)
        if key not in seen:
            seen.add(key)
            out.append(OuterCandidate(lam, _deterministic(assign, n_w, n_v)))

    point = np.zeros(n_w)
    point[0] = 1.0
    for v in range(n_v):
        add(point, [v] * n_w)
    if n_v ** n_w > limit:
        return out
    for part in _set_partitions(list(range(n_u))):
        if len(part) > n_w:
            continue
        lam = np.zeros(n_w)
        for i, block in enumerate(part):
            lam[i] = pu[block].sum()
        for vs in itertools.product(range(n_v), repeat=len(part)):
            add(lam, list(vs) + [0] * (n_w - len(part)))
    uniform = np.full(n_w, 1.0 / n_w)
    for vs in itertools.combinations_with_replacement(range(n_v), n_w):
        add(uniform, list(vs))
    if n_v ** n_w <= 256:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
        for _ in range(2):
            lam = 0.5 * uniform + 0.5 * rng.dirichlet(np.ones(n_w))
            lam /= lam.sum()
            for vs in itertools.product(range(n_v), repeat=n_w):
                add(lam, list(vs))
    return out


# -------------------------------------------------------------- local search

def _softmax(z):
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    p = e / e.sum(axis=-1, keepdims=True)
    p[p < ZERO_WEIGHT] = 0.0
    return p / p.sum(axis=-1, keepdims=True)


def _decode(x, n_w, n_v):
    lam = _softmax(x[:n_w])
    kernel = _softmax(x[n_w:].reshape(n_w, n_v))
    return OuterCandidate(lam, kernel)


def _encode(cand):
    return np.concatenate([
        np.log(np.maximum(cand.lam, math.exp(LOGIT_FLOOR))),
        np.log(np.maximum(cand.kernel, math.exp(LOGIT_FLOOR))).ravel(),
    ])


def _local_search(spec, R, x0, opts, n_w, n_v):
    """Cyclic coordinate-wise golden-section descent; returns (value, candidate, evals)."""
    evals = 0

    def f(x):
        nonlocal evals
        evals += 1
        return _safe_value(spec, _decode(x, n_w, n_v), R, opts)

    x = x0.copy()
    fx = f(x)
    dims = x.size
    budget = opts.evals_per_start
    i = 0
    while evals < budget and dims:
        a, b = x[i] - opts.logit_span, x[i] + opts.logit_span
        best_t, best_f = x[i], fx
        trial = x.copy()

        def g(t):
            trial[i] = t
            return f(trial)

        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        fc, fd = g(c), g(d)
        for t, ft in ((c, fc), (d, fd)):
            if ft < best_f:
                best_t, best_f = t, ft
        for _ in range(opts.golden_iterations):
            if evals >= budget:
                break
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - GOLDEN * (b - a)
                fc = g(c)
                t, ft = c, fc
            else:
                a, c, fc = c, d, fd
                d = a + GOLDEN * (b - a)
                fd = g(d)
                t, ft = d, fd
            if ft < best_f:
                best_t, best_f = t, ft
        if best_f < fx:
            x[i], fx = best_t, best_f
        i = (i + 1) % dims
    return fx, _decode(x, n_w, n_v), evals


def _start_point(index, seed, n_w, n_v):
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    lam = rng.dirichlet(np.ones(n_w))
    kernel = rng.dirichlet(np.ones(n_v), size=n_w)
    return np.concatenate([np.log(lam), np.log(kernel).ravel()])


def _run_start(args):
    spec, R, opts, n_w, n_v, index, x0 = args
    if x0 is None:
        x0 = _start_point(index, opts.seed, n_w, n_v)
    try:
        value, cand, evals = _local_search(spec, R, x0, opts, n_w, n_v)
    except Exception as exc:  # a failed start must not abort the search
        log.warning("start %d failed: %s", index, exc)
        return index, math.inf, None, 0
    return index, value, cand, evals


def search_C(spec, R, opts=None):
    """Best pessimistic decoder cost found over candidates with |W| = |U|+3."""
    opts = opts or OuterOptions()
    if not R >= 0:
        raise DomainError("rate must be >= 0")
    spec = spec.stripped()
    pu = spec.pu
    n_v = spec.n_v
    n_w = opts.n_w or spec.n_u + 3

    sweep = sweep_candidates(pu, n_v, n_w, opts.seed, opts.sweep_limit)
    best_val, best_cand, origin = math.inf, None, "sweep"
    for cand in sweep:
        v = _safe_value(spec, cand, R, opts)
        if v < best_val:
            best_val, best_cand = v, cand
    evaluations = len(sweep)

    jobs = []
    for idx in range(opts.starts):
        x0 = _encode(best_cand) if idx == 0 and best_cand is not None else None
        jobs.append((spec, R, opts, n_w, n_v, idx, x0))
    if opts.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=opts.workers) as pool:
            results = list(pool.map(_run_start, jobs))
    else:
        results = [_run_start(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    trace = []
    for idx, value, cand, evals in results:
        trace.append(value)
        evaluations += evals
        if cand is not None and value < best_val:
            best_val, best_cand, origin = value, cand, f"start {idx}"
    if best_cand is None:
        raise SolverError("every candidate failed")
    final = evaluate_full(spec, best_cand, R, opts)
    return OuterResult(
        value=final.value,
        best=best_cand,
        inner=final.inner,
        tiebreak=final.tiebreak,
        starts_used=len(results),
        value_trace=trace,
        sweep_size=len(sweep),
        evaluations=evaluations,
        best_origin=origin,
    )
