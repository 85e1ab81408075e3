import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mismatched_rd.envelope import (
    CurvePoint,
    build_curve,
    convexify,
    default_grid,
    envelope_values,
)
from mismatched_rd.errors import DomainError
from mismatched_rd.outer import OuterOptions

FAST = OuterOptions(starts=2, evals_per_start=30)


def test_convex_points_give_pure_certificate():
    pts = [(0, 1.0), (0.5, 0.4), (1, 0.0)]
    cert = convexify(pts, 0.5)
    assert (cert.alpha, cert.r1, cert.value) == (1.0, 0.5, 0.4)


@pytest.mark.parametrize("mid, expected", [(0.4, 0.25), (0.2, 0.2)])
def test_two_point_mixture(mid, expected):
    cert = convexify([(0, 0.5), (0.5, mid), (1, 0.0)], 0.5)
    assert cert.value == pytest.approx(expected)
    if mid > 0.25:
        assert (cert.alpha, cert.r1, cert.r2) == (0.5, 0.0, 1.0)


def test_single_point():
    cert = convexify([(0.0, 0.7)], 0.0)
    assert (cert.alpha, cert.value) == (1.0, 0.7)


def test_clamped_above_grid():
    cert = convexify([(0, 1.0), (1, 0.3)], 2.0)
    assert cert.clamped and cert.value == 0.3 and cert.query_rate == 2.0


def test_errors():
    with pytest.raises(DomainError):
        convexify([(0, math.nan)], 0.0)
    with pytest.raises(DomainError):
        convexify([(0.5, 1.0)], 0.2)
    with pytest.raises(DomainError):
        convexify([(0, 1.0)], -1.0)


def test_failed_points_skipped():
    pts = [CurvePoint(0.0, 1.0), CurvePoint(0.5, math.nan, error="boom"), CurvePoint(1.0, 0.0)]
    assert convexify(pts, 0.5).value == pytest.approx(0.5)


def test_default_grid():
    g = default_grid(2)
    assert len(g) == 21 and g[0] == 0.0 and g[-1] == 1.0
    assert default_grid(3)[-1] == math.log2(3)
    assert default_grid(1) == [0.0]


curves = st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=12)


def as_points(values):
    return [(0.1 * i, v) for i, v in enumerate(values)]


@settings(max_examples=150, deadline=None)
@given(curves)
def test_envelope_properties(values):
    pts = as_points(values)
    rates = [r for r, _ in pts]
    mids = sorted(set(rates + [0.5 * (a + b) for a, b in zip(rates, rates[1:])]))
    env = envelope_values(pts, mids)
    # non-increasing
    assert all(b <= a + 1e-12 for a, b in zip(env, env[1:]))
    # convex on the grid of midpoints (equally spaced)
    for a, b, c in zip(env, env[1:], env[2:]):
        assert b <= 0.5 * (a + c) + 1e-9
    # minorant of every sample at or below the query
    for R, e in zip(mids, env):
        assert all(e <= v + 1e-12 for r, v in pts if r <= R + 1e-15)
    # certificates reproduce value and respect the budget
    for R in mids:
        cert = convexify(pts, R)
        assert 0 <= cert.alpha <= 1
        assert cert.budget() <= R + 1e-12
        assert cert.alpha * cert.c1 + (1 - cert.alpha) * cert.c2 == pytest.approx(cert.value, abs=1e-12)
    # idempotent
    again = envelope_values(as_points([convexify(pts, r).value for r in rates]), rates)
    np.testing.assert_allclose(again, [convexify(pts, r).value for r in rates], atol=1e-12)


def test_build_curve_zero_only(opposed):
    (pt,) = build_curve(opposed, [0.0], FAST)
    assert pt.ok and pt.value == pytest.approx(0.5)


def test_build_curve_matched(matched):
    pts = build_curve(matched, [0.0, 0.5, 1.0], OuterOptions(starts=3, evals_per_start=60))
    np.testing.assert_allclose([p.value for p in pts], [0.5, 0.110028, 0.0], atol=1e-4)


def test_build_curve_opposed(opposed):
    pts = build_curve(opposed, [0.0, 0.5, 1.0], FAST)
    np.testing.assert_allclose([p.value for p in pts], 0.5, atol=1e-9)


@pytest.mark.parametrize("grid", [[], [0.5, 1.0], [0.0, 1.0, 0.5]])
def test_build_curve_rejects_bad_grid(matched, grid):
    with pytest.raises(DomainError):
        build_curve(matched, grid, FAST)
