"""Time-sharing envelope of a sampled rate curve.

With a rate budget ``alpha r1 + (1 - alpha) r2 <= R``, the best two-point
mixture of grid samples is the minimum over ``[0, R]`` of the lower convex
hull of the samples, so the envelope is convex and non-increasing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .errors import DomainError, SolverError
from .outer import OuterOptions, OuterResult, search_C

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CurvePoint:
    rate: float
    value: float  # nan when the search failed
    result: OuterResult | None = None
    error: str | None = None

    @property
    def ok(self):
        return self.result is not None and math.isfinite(self.value)


@dataclass(frozen=True)
class EnvelopeCertificate:
    alpha: float
    r1: float
    r2: float
    c1: float
    c2: float
    value: float
    query_rate: float
    clamped: bool = False

    def budget(self):
        return self.alpha * self.r1 + (1.0 - self.alpha) * self.r2

    def as_dict(self):
        return {
            "alpha": self.alpha, "r1": self.r1, "r2": self.r2,
            "c1": self.c1, "c2": self.c2, "value": self.value,
            "query_rate": self.query_rate, "clamped": self.clamped,
        }


def default_grid(n_u, points=21):
    """``points`` rates spread uniformly over ``[0, log2 n_u]``, both ends exact."""
    top = math.log2(n_u) if n_u > 1 else 0.0
    if top == 0.0:
        return [0.0]
    grid = [top * i / (points - 1) for i in range(points)]
    grid[0], grid[-1] = 0.0, top
    return grid


def build_curve(spec, rate_grid, opts=None):
    """One outer search per grid rate; failures become points without a result."""
    opts = opts or OuterOptions()
    grid = [float(r) for r in rate_grid]
    if not grid:
        raise DomainError("rate grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("rate grid must be strictly ascending")
    if grid[0] != 0.0:
        raise DomainError("rate grid must start at 0")
    points = []
    for r in grid:
        try:
            res = search_C(spec, r, opts)
            points.append(CurvePoint(r, float(res.value), res))
        except (SolverError, ValueError) as exc:
            log.warning("rate %g failed: %s", r, exc)
            points.append(CurvePoint(r, math.nan, None, str(exc)))
    if not any(p.ok for p in points):
        raise SolverError("every grid point failed")
    return points


def _lower_hull(pts):
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # drop the middle point unless it lies strictly below the chord
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def convexify(points, R):
    """Best two-point mixture of curve samples whose average rate is at most ``R``."""
    pts = []
    for p in points:
        rate, value = (p.rate, p.value) if isinstance(p, CurvePoint) else p
        if math.isfinite(value):
            pts.append((float(rate), float(value)))
    if not pts:
        raise DomainError("no valid curve points")
    if not R >= 0:
        raise DomainError("query rate must be >= 0")
    pts.sort()
    # keep the lowest value per rate
    uniq = []
    for r, c in pts:
        if uniq and uniq[-1][0] == r:
            uniq[-1] = (r, min(uniq[-1][1], c))
        else:
            uniq.append((r, c))
    clamped = False
    query = float(R)
    if R > uniq[-1][0]:
        log.warning("rate %g above the grid maximum %g: clamped", R, uniq[-1][0])
        R, clamped = uniq[-1][0], True
    if R < uniq[0][0]:
        raise DomainError(f"rate {R} below the smallest grid rate {uniq[0][0]}")
    hull = _lower_hull(uniq)

    def cert(alpha, a, b):
        value = alpha * a[1] + (1.0 - alpha) * b[1]
        return EnvelopeCertificate(alpha, a[0], b[0], a[1], b[1], value, query, clamped)

    # point on the hull at R
    at = None
    for i, (r, c) in enumerate(hull):
        if r == R:
            at = cert(1.0, (r, c), (r, c))
            break
        if r > R:
            a, b = hull[i - 1], hull[i]
            alpha = (b[0] - R) / (b[0] - a[0])
            at = cert(alpha, a, b)
            break
    best = at
    for r, c in hull:
        if r < R and c < best.value:
            best = cert(1.0, (r, c), (r, c))
    return best


def envelope_values(points, rates):
    return [convexify(points, r).value for r in rates]
