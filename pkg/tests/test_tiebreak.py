import numpy as np
import pytest

from mismatched_rd.errors import DomainError, InputError
from mismatched_rd.inner import Status, solve_inner
from mismatched_rd.tiebreak import brute_force_tiebreak, default_delta, delta_sweep, solve_tiebreak

from .conftest import hamming_dr

PU = np.array([0.5, 0.5])
HAM = np.array([[0.0, 1.0], [1.0, 0.0]])
ZERO = np.zeros((2, 2))


def tiebreak(pu, lam, ce, cd, R, delta=None):
    inner = solve_inner(pu, lam, ce, R)
    return inner, solve_tiebreak(pu, lam, ce, cd, R, inner.encoder_value, delta, inner=inner)


def test_binding_rate_is_unique():
    inner, tb = tiebreak(PU, PU, HAM, HAM, 0.5)
    assert tb.method == "unique"
    assert tb.decoder_value == pytest.approx(hamming_dr(0.5), abs=1e-9)
    np.testing.assert_array_equal(tb.p_tilde.p, inner.p_star.p)


def test_zero_rate_is_unique():
    _, tb = tiebreak(PU, PU, HAM, -HAM, 0.0)
    assert tb.method == "unique"
    assert tb.decoder_value == pytest.approx(-0.5)


@pytest.mark.parametrize("R", [1.0, 0.5, 0.2])
def test_indifferent_encoder_lets_decoder_lose_most(R):
    # the encoder pays nothing anywhere, so the selection maximises decoder
    # Hamming cost under the rate limit: crossover probability 1 - D(R)
    _, tb = tiebreak(PU, PU, ZERO, HAM, R)
    assert tb.method == "face"
    assert tb.decoder_value == pytest.approx(1.0 - hamming_dr(R), abs=1e-8)
    assert tb.info <= R + 1e-9


def test_matched_costs_return_encoder_value():
    rng = np.random.default_rng(4)
    for _ in range(5):
        pu = rng.dirichlet(np.ones(3))
        lam = rng.dirichlet(np.ones(4))
        c = rng.random((3, 4))
        inner, tb = tiebreak(pu, lam, c, c, 2.0)
        assert inner.status is Status.RATE_INACTIVE
        # exact argmin: no delta slack leaks into the value
        assert tb.decoder_value == pytest.approx(inner.encoder_value, abs=1e-9)


def test_partial_ties():
    lam = np.array([0.25, 0.25, 0.5])
    ce = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    cd = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    _, tb = tiebreak(PU, lam, ce, cd, 1.0)
    assert tb.decoder_value == pytest.approx(0.25, abs=1e-9)
    assert abs(tb.encoder_slack) <= tb.delta
    ref = brute_force_tiebreak(PU, lam, ce, cd, 1.0, 0.0, tb.delta)
    assert abs(ref - tb.decoder_value) <= 2e-3


def tied_instance(seed):
    # duplicated encoder columns produce a non-trivial optimal face
    rng = np.random.default_rng(seed)
    pu = rng.dirichlet(np.ones(2))
    lam = rng.dirichlet(np.ones(3))
    ce = rng.random((2, 3))
    ce[:, 1] = ce[:, 0]
    cd = rng.random((2, 3))
    return pu, lam, ce, cd


@pytest.mark.parametrize("seed", range(8))
def test_agrees_with_grid_oracle(seed):
    pu, lam, ce, cd = tied_instance(seed)
    R = 1.0
    inner, tb = tiebreak(pu, lam, ce, cd, R)
    ref = brute_force_tiebreak(pu, lam, ce, cd, R, inner.encoder_value, tb.delta)
    assert abs(tb.decoder_value - ref) <= 2e-3
    assert tb.encoder_slack <= tb.delta + 1e-12


@pytest.mark.parametrize("seed", range(8))
def test_monotone_in_delta(seed):
    pu, lam, ce, cd = tied_instance(seed)
    inner = solve_inner(pu, lam, ce, 1.0)
    values = []
    for d in [1e-8, 1e-6, 1e-4, 1e-2, 1e-1]:  # includes the three reported levels
        tb = solve_tiebreak(pu, lam, ce, cd, 1.0, inner.encoder_value, d, inner=inner)
        assert tb.encoder_slack <= d + 1e-12
        values.append(tb.decoder_value)
    assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))


def test_never_below_encoder_solution():
    for seed in range(8):
        pu, lam, ce, cd = tied_instance(seed)
        inner, tb = tiebreak(pu, lam, ce, cd, 1.0)
        base = float(lam @ np.sum(inner.p_star.p * cd, axis=0))
        assert tb.decoder_value >= base - 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_unique_when_rate_binds(seed):
    rng = np.random.default_rng(50 + seed)
    pu = rng.dirichlet(np.ones(3))
    lam = rng.dirichlet(np.ones(4))
    ce, cd = rng.random((3, 4)), rng.random((3, 4))
    inner, tb = tiebreak(pu, lam, ce, cd, 0.2)
    assert inner.status is Status.RATE_ACTIVE
    assert np.max(np.abs(tb.p_tilde.p - inner.p_star.p)) <= 1e-6


def test_wrong_encoder_value_rejected():
    inner = solve_inner(PU, PU, HAM, 0.5)
    with pytest.raises(InputError):
        solve_tiebreak(PU, PU, HAM, HAM, 0.5, inner.encoder_value + 0.1, 1e-6)


def test_bad_delta_rejected():
    with pytest.raises(DomainError):
        solve_tiebreak(PU, PU, HAM, HAM, 0.5, hamming_dr(0.5), delta=0.0)


def test_default_delta_scales_with_cost_range():
    assert default_delta(HAM) == pytest.approx(1e-6)
    assert default_delta(5 * HAM) == pytest.approx(5e-6)
    assert default_delta(ZERO) > 0


def test_delta_sweep_reports_three_levels():
    pu, lam, ce, cd = tied_instance(3)
    inner = solve_inner(pu, lam, ce, 1.0)
    sweep = delta_sweep(pu, lam, ce, cd, 1.0, inner)
    span = float(ce.max() - ce.min())
    assert [d for d, _ in sweep] == pytest.approx([1e-6 * span, 1e-4 * span, 1e-2 * span])
    values = [v for _, v in sweep]
    assert values == sorted(values)
