"""Finite-blocklength Stackelberg game by enumeration, and the matched baseline.

The decoder commits to a table ``m -> v^n`` over ``M = 2^floor(nR)``
messages; the encoder, seeing ``u^n``, picks a message minimising its block
cost, breaking ties against the decoder.  Because both costs are additive
and the encoder's choice is made per source block, the pessimistic value
decomposes into a sum over ``u^n``.

The value of a table only depends on its image (the set of distinct output
blocks), so images of size 1..M are enumerated instead of ordered tables.
When every input is rational, costs are scaled to integers and the argmin
sets are exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConvergenceError, DomainError, GuardError
from .prob import as_cost_matrix

SOURCE_BLOCK_LIMIT = 4096
DECODER_LIMIT = 10**6
FLOAT_TIE_TOL = 1e-12


@dataclass(frozen=True)
class DecoderTable:
    n: int
    blocks: tuple  # blocks[m] is the output block for message m

    def __post_init__(self):
        if len(self.blocks) < 1:
            raise DomainError("a decoder needs at least one message")
        for b in self.blocks:
            if len(b) != self.n:
                raise DomainError(f"block {b} does not have length {self.n}")

    @property
    def M(self):
        return len(self.blocks)


@dataclass(frozen=True)
class BestResponse:
    source_block: tuple
    argmin: tuple  # messages achieving the encoder's minimum
    chosen: int  # pessimistic choice within argmin
    encoder_cost: object
    decoder_cost: object


@dataclass(frozen=True)
class BestResponseTable:
    n: int
    entries: tuple

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True)
class OracleValue:
    n: int
    R: float
    value: object  # Fraction under exact arithmetic, else float
    best_decoder: DecoderTable
    decoders_enumerated: int
    exact: bool
    best_response: BestResponseTable | None = None


def message_count(n, R):
    return 2 ** int(math.floor(n * R + 1e-12))


def _blocks(k, n):
    return list(itertools.product(range(k), repeat=n))


class _Game:
    """Block cost tables shared by the best-response and value computations."""

    def __init__(self, spec, n):
        if n < 1:
            raise DomainError("blocklength must be >= 1")
        nU, nV = spec.n_u, spec.n_v
        if nU ** n > SOURCE_BLOCK_LIMIT:
            raise GuardError("source blocks", nU ** n, SOURCE_BLOCK_LIMIT)
        self.n = n
        self.exact = spec.exact
        self.ublocks = _blocks(nU, n)
        self.vblocks = _blocks(nV, n)
        ui = np.array(self.ublocks, dtype=np.int64).reshape(len(self.ublocks), n)
        vi = np.array(self.vblocks, dtype=np.int64).reshape(len(self.vblocks), n)
        if self.exact:
            cells = [x for m in (spec.cost_encoder, spec.cost_decoder) for r in m for x in r]
            self.cost_den = math.lcm(*(x.denominator for x in cells))
            ce = np.array([[int(x * self.cost_den) for x in r] for r in spec.cost_encoder],
                          dtype=object)
            cd = np.array([[int(x * self.cost_den) for x in r] for r in spec.cost_decoder],
                          dtype=object)
            probs = [Fraction(1)] * len(self.ublocks)
            for i, blk in enumerate(self.ublocks):
                for u in blk:
                    probs[i] *= spec.source[u]
            self.prob_den = math.lcm(*(p.denominator for p in probs))
            self.weights = np.array([int(p * self.prob_den) for p in probs], dtype=object)
            self.tol = 0
        else:
            ce, cd = spec.ce, spec.cd
            pu = spec.pu
            self.weights = np.prod(pu[ui], axis=1)
            scale = max(1.0, float(np.max(np.abs(ce))), float(np.max(np.abs(cd))))
            self.tol = FLOAT_TIE_TOL * scale * n
        # block cost sums (the 1/n normalisation is applied to the final value)
        self.ce_blk = sum(ce[ui[:, t][:, None], vi[:, t][None, :]] for t in range(n))
        self.cd_blk = sum(cd[ui[:, t][:, None], vi[:, t][None, :]] for t in range(n))
        if self.exact:
            self.ce_blk = self._to_int(self.ce_blk)
            self.cd_blk = self._to_int(self.cd_blk)

    @staticmethod
    def _to_int(a):
        if all(abs(int(x)) < 2**62 for x in a.ravel()):
            return a.astype(np.int64)
        return a

    def normalise(self, total):
        if self.exact:
            return Fraction(int(total), self.prob_den * self.cost_den * self.n)
        return float(total) / self.n

    def pessimistic(self, image):
        """Per-source-block (chosen column, decoder cost) for an image set of v-block indices."""
        E = self.ce_blk[:, image]
        D = self.cd_blk[:, image]
        best = E.min(axis=1)
        tie = E <= best[:, None] + self.tol
        if D.dtype == object:
            masked = np.where(tie, D, None)
            chosen = np.array([max((j for j in range(len(image)) if row[j] is not None),
                                   key=lambda j, row=row: row[j]) for row in masked])
        else:
            masked = np.where(tie, D, -np.inf if D.dtype.kind == "f" else np.iinfo(np.int64).min)
            chosen = np.argmax(masked, axis=1)
        return chosen, D[np.arange(D.shape[0]), chosen], tie

    def values_for_images(self, images):
        """Pessimistic totals for a batch of equal-size images (rows of ``images``)."""
        E = self.ce_blk[:, images]  # (B, S, k)
        D = self.cd_blk[:, images]
        best = E.min(axis=2)
        tie = E <= best[:, :, None] + self.tol
        if D.dtype.kind in "if":
            fill = -np.inf if D.dtype.kind == "f" else np.iinfo(np.int64).min
            worst = np.where(tie, D, fill).max(axis=2)
            if D.dtype.kind == "i":
                w = self.weights
                bound = int(np.max(np.abs(worst))) * int(sum(abs(int(x)) for x in w))
                if bound < 2**62:
                    return [int(x) for x in w.astype(np.int64) @ worst]
                return [sum(int(a) * int(x) for a, x in zip(w, col)) for col in worst.T]
            return self.weights @ worst
        out = []
        for s in range(images.shape[0]):
            total = 0
            for b in range(D.shape[0]):
                total += self.weights[b] * max(D[b, s, j] for j in range(images.shape[1])
                                               if tie[b, s, j])
            out.append(total)
        return out


def encoder_best_response(spec, tau, n):
    """Encoder argmin sets per source block, with the pessimistic pick."""
    game = _Game(spec, n)
    index = {b: i for i, b in enumerate(game.vblocks)}
    cols = [index[tuple(b)] for b in tau.blocks]
    entries = []
    _, _, tie = game.pessimistic(cols)
    D = game.cd_blk[:, cols]
    E = game.ce_blk[:, cols]
    for b, ublk in enumerate(game.ublocks):
        arg = tuple(int(m) for m in np.flatnonzero(tie[b]))
        chosen = max(arg, key=lambda m: D[b, m])
        entries.append(BestResponse(
            source_block=ublk,
            argmin=arg,
            chosen=chosen,
            encoder_cost=_per_letter(game, E[b, chosen]),
            decoder_cost=_per_letter(game, D[b, chosen]),
        ))
    return BestResponseTable(n, tuple(entries))


def _per_letter(game, x):
    if game.exact:
        return Fraction(int(x), game.cost_den * game.n)
    return float(x) / game.n


def oracle_value(spec, n, R, decoder_limit=DECODER_LIMIT):
    """Exact minimum over deterministic decoders of the pessimistic decoder cost."""
    if not R >= 0:
        raise DomainError("rate must be >= 0")
    M = message_count(n, R)
    nV = spec.n_v
    if n * M * math.log10(max(nV, 1)) > math.log10(decoder_limit) + 1e-12:
        required = nV ** (n * M) if n * M <= 64 else f"{nV}^{n * M}"
        raise GuardError("decoder tables", required, decoder_limit)
    game = _Game(spec, n)
    nb = len(game.vblocks)
    best_total, best_image, count = None, None, 0
    for k in range(1, min(M, nb) + 1):
        combos = np.array(list(itertools.combinations(range(nb), k)), dtype=np.int64)
        for start in range(0, combos.shape[0], 4096):
            chunk = combos[start:start + 4096]
            totals = game.values_for_images(chunk)
            count += chunk.shape[0]
            for i, t in enumerate(totals):
                if best_total is None or t < best_total:
                    best_total, best_image = t, tuple(int(j) for j in chunk[i])
    blocks = [game.vblocks[j] for j in best_image]
    blocks += [blocks[-1]] * (M - len(blocks))
    table = DecoderTable(n, tuple(blocks))
    return OracleValue(
        n=n,
        R=float(R),
        value=game.normalise(best_total),
        best_decoder=table,
        decoders_enumerated=count,
        exact=game.exact,
        best_response=encoder_best_response(spec, table, n),
    )


# ----------------------------------------------------------- matched baseline

def _ba_point(pu, c, s, q0=None, tol=1e-14, maxit=100000):
    """Blahut-Arimoto at slope ``s``: returns (rate bits, distortion, q)."""
    nV = c.shape[1]
    logq = np.log(np.full(nV, 1.0 / nV) if q0 is None else np.maximum(q0, 1e-300))
    for it in range(maxit):
        z = logq[None, :] - s * c
        z -= z.max(axis=1, keepdims=True)
        cond = np.exp(z)
        cond /= cond.sum(axis=1, keepdims=True)
        q = pu @ cond
        with np.errstate(divide="ignore"):
            new = np.log(q)
        delta = np.max(np.abs(q - np.exp(logq)))
        logq = new
        if delta < tol:
            break
    else:
        raise ConvergenceError(f"Blahut-Arimoto did not converge at slope {s}", q, delta)
    joint = pu[:, None] * cond
    pos = joint > 0
    ref = pu[:, None] * q[None, :]
    rate = float(np.sum(joint[pos] * np.log2(joint[pos] / ref[pos])))
    dist = float(np.sum(joint * c))
    return rate, dist, q


def ba_distortion_rate(pu, c, R, tol=1e-10):
    """Shannon distortion-rate value ``D(R)`` (rate in bits) by Blahut-Arimoto."""
    pu = np.asarray(pu, dtype=float)
    c = as_cost_matrix(c)
    if not R >= 0:
        raise DomainError("rate must be >= 0")
    keep = pu > 0
    pu, c = pu[keep], c[keep]
    if R == 0:
        return float(np.min(pu @ c))
    trace = []
    lo, hi = 0.0, 1.0
    q = None
    while True:
        rate, dist, q = _ba_point(pu, c, hi, q)
        trace.append((hi, rate, dist))
        if rate >= R:
            break
        if hi > 2.0**12:
            # rate saturates below R: the minimum distortion is reached
            return dist
        lo, hi = hi, hi * 2.0
    lo_pt, hi_pt = None, (rate, dist)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        rate, dist, q = _ba_point(pu, c, mid, q)
        trace.append((mid, rate, dist))
        if abs(rate - R) <= tol:
            return dist
        if rate > R:
            hi, hi_pt = mid, (rate, dist)
        else:
            lo, lo_pt = mid, (rate, dist)
        if hi - lo <= 1e-13 * hi and lo_pt is not None:
            # distortion is affine in rate across a collapsed slope bracket
            t = (R - lo_pt[0]) / (hi_pt[0] - lo_pt[0])
            return lo_pt[1] + t * (hi_pt[1] - lo_pt[1])
    raise ConvergenceError("slope bisection did not reach the target rate", trace, abs(rate - R))
