import numpy as np
import pytest

from mismatched_rd import kernels
from mismatched_rd.errors import DimensionError, DomainError
from mismatched_rd.inner import (
    SolverOptions,
    Status,
    brute_force_inner,
    kkt_residual,
    lagrangian,
    solve_inner,
)
from mismatched_rd.prob import Coupling, mutual_information

from .conftest import hamming_dr, random_instance

PU = np.array([0.5, 0.5])
HAM = np.array([[0.0, 1.0], [1.0, 0.0]])


def test_full_rate_gives_identity():
    sol = solve_inner(PU, PU, HAM, 1.0)
    np.testing.assert_allclose(sol.p_star.p, np.eye(2), atol=1e-12)
    assert sol.encoder_value == pytest.approx(0, abs=1e-12)
    assert sol.info == pytest.approx(1.0, abs=1e-12)


def test_zero_rate_gives_product():
    sol = solve_inner(PU, PU, HAM, 0.0)
    np.testing.assert_array_equal(sol.p_star.p, np.full((2, 2), 0.5))
    assert sol.encoder_value == 0.5
    assert sol.info == 0.0
    assert sol.status is Status.RATE_ACTIVE


def test_half_rate_matches_binary_distortion_rate():
    sol = solve_inner(PU, PU, HAM, 0.5)
    d = hamming_dr(0.5)
    assert sol.encoder_value == pytest.approx(d, abs=1e-9)
    np.testing.assert_allclose(sol.p_star.p, [[1 - d, d], [d, 1 - d]], atol=1e-9)
    assert sol.info == pytest.approx(0.5, abs=1e-10)
    assert sol.status is Status.RATE_ACTIVE and sol.nu3 > 0


def test_brute_force_examples():
    assert brute_force_inner(PU, PU, HAM, 1.0) == pytest.approx(0, abs=1e-4)
    assert brute_force_inner(PU, PU, HAM, 0.0) == pytest.approx(0.5, abs=1e-4)
    assert brute_force_inner(PU, PU, HAM, 0.5) == pytest.approx(0.1100, abs=2e-3)


def test_brute_force_dimension_guard():
    with pytest.raises(DimensionError):
        brute_force_inner(np.full(4, 0.25), PU, np.zeros((4, 2)), 0.5)


def test_invalid_inputs():
    with pytest.raises(DomainError):
        solve_inner(PU, PU, HAM, -0.1)
    with pytest.raises(DomainError):
        solve_inner(np.array([1.0, 0.0]), PU, HAM, 0.5)
    with pytest.raises(DimensionError):
        solve_inner(PU, PU, np.zeros((2, 3)), 0.5)
    with pytest.raises(DomainError):
        SolverOptions(bisection_tol=0)


def test_kkt_report_examples():
    sol = solve_inner(PU, PU, HAM, 0.5)
    rep = kkt_residual(sol, PU, PU, HAM, 0.5)
    assert rep.max_residual <= 1e-6 and rep.ok()
    zero = solve_inner(PU, PU, HAM, 0.0)
    zrep = kkt_residual(zero, PU, PU, HAM, 0.0)
    assert zrep.marginal == 0 and zrep.normalization == 0
    assert zrep.max_residual <= 1e-6


def test_kkt_report_detects_perturbation():
    sol = solve_inner(PU, PU, HAM, 0.5)
    base = kkt_residual(sol, PU, PU, HAM, 0.5).max_residual
    p = sol.p_star.p.copy()
    p[0, 0] += 1e-3
    p[:, 0] /= p[:, 0].sum()
    bumped = type(sol)(**{**sol.__dict__, "p_star": Coupling(p, sol.support)})
    assert kkt_residual(bumped, PU, PU, HAM, 0.5).max_residual > base


def test_support_restriction():
    lam = np.array([0.5, 0.0, 0.5])
    cost = np.array([[0.0, -5.0, 1.0], [1.0, -5.0, 0.0]])
    sol = solve_inner(PU, lam, cost, 0.5)
    assert sol.support == (0, 2)
    assert np.isnan(sol.nu2[1])
    assert sol.encoder_value == pytest.approx(hamming_dr(0.5), abs=1e-9)
    assert kkt_residual(sol, PU, lam, cost, 0.5).ok()


def test_rate_inactive_face_is_certified():
    # ties: every coupling on the first two columns is optimal for the encoder
    pu = np.array([0.5, 0.5])
    lam = np.array([0.25, 0.25, 0.5])
    cost = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    sol = solve_inner(pu, lam, cost, 1.0)
    assert sol.status is Status.RATE_INACTIVE and sol.nu3 == 0
    assert sol.encoder_value == pytest.approx(0, abs=1e-12)
    assert kkt_residual(sol, pu, lam, cost, 1.0).ok()
    assert sol.face is not None and not sol.face[0, 2]


def suite(seed=11, n=12):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        U, W = rng.integers(2, 4, size=2)
        pu, lam, c = random_instance(rng, U, W)
        H = -float(pu @ np.log2(pu))
        out.append((pu, lam, c, [0.0, 0.25, 0.5, H][i % 4]))
    return out


@pytest.mark.parametrize("idx", range(12))
def test_agrees_with_grid_oracle(idx):
    pu, lam, c, R = suite()[idx]
    sol = solve_inner(pu, lam, c, R)
    ref = brute_force_inner(pu, lam, c, R, grid_resolution=1e-3)
    assert abs(sol.encoder_value - ref) <= 2e-3
    # the grid only sees feasible points, so it never beats the optimum
    assert sol.encoder_value <= ref + 1e-9
    rep = kkt_residual(sol, pu, lam, c, R)
    assert rep.ok(), rep.as_dict()


@pytest.mark.parametrize("seed", range(8))
def test_value_non_increasing_in_rate(seed):
    rng = np.random.default_rng(100 + seed)
    pu, lam, c = random_instance(rng, 3, 4)
    R = float(rng.uniform(0, 1.3))
    assert solve_inner(pu, lam, c, R + 0.1).encoder_value <= solve_inner(pu, lam, c, R).encoder_value + 1e-6


@pytest.mark.parametrize("seed", range(6))
def test_gibbs_structure_when_rate_binds(seed):
    rng = np.random.default_rng(200 + seed)
    pu, lam, c = random_instance(rng, 3, 5)
    sol = solve_inner(pu, lam, c, 0.3)
    assert sol.status is Status.RATE_ACTIVE and sol.nu3 > 1e-6
    logits = -(c + sol.nu1[:, None]) / sol.nu3
    g = np.exp2(logits - logits.max(axis=0))
    g /= g.sum(axis=0)
    assert np.max(np.abs(g - sol.p_star.p)) <= 1e-6


@pytest.mark.parametrize("seed", range(4))
def test_saddle_point(seed):
    rng = np.random.default_rng(300 + seed)
    pu, lam, c = random_instance(rng, 3, 4)
    R = 0.4
    sol = solve_inner(pu, lam, c, R)
    L_star = lagrangian(sol.p_star.p, sol.nu1, sol.nu2, sol.nu3, pu, lam, c, R)
    for _ in range(100):
        # random feasible conditional: Sinkhorn-scaled random joint
        J = rng.random((3, 4)) + 1e-3
        for _ in range(200):
            J *= (pu / J.sum(axis=1))[:, None]
            J *= lam / J.sum(axis=0)
        p = J / lam
        L = lagrangian(p, sol.nu1, sol.nu2, sol.nu3, pu, lam, c, R)
        assert L_star <= L + 1e-9


def test_information_matches_prob_core():
    pu, lam, c, R = suite()[5]
    sol = solve_inner(pu, lam, c, R)
    assert sol.info == pytest.approx(mutual_information(pu, lam, sol.p_star.p), abs=1e-12)


def test_pure_backend_gives_same_solution(monkeypatch):
    pu, lam, c, R = suite()[6]
    ref = solve_inner(pu, lam, c, R)
    py = kernels.backends()["python"]
    monkeypatch.setattr(kernels, "gibbs_solve", py.gibbs_solve)
    monkeypatch.setattr(kernels, "info_bits", py.info_bits)
    got = solve_inner(pu, lam, c, R)
    assert got.encoder_value == pytest.approx(ref.encoder_value, abs=1e-9)
    np.testing.assert_allclose(got.p_star.p, ref.p_star.p, atol=1e-6)


def test_deterministic():
    pu, lam, c, R = suite()[2]
    a = solve_inner(pu, lam, c, R)
    b = solve_inner(pu, lam, c, R)
    assert a.encoder_value == b.encoder_value
    np.testing.assert_array_equal(a.p_star.p, b.p_star.p)


def test_long_anneal_step_does_not_fake_a_binding_rate():
    # a tenfold temperature jump stalls the kernel on this instance; the
    # unconverged iterate reported a spurious rate above R
    pu = np.array([0.16540024762916514, 0.6103164793258693, 0.22428327304496565])
    lam = np.array([0.2883965513975374, 0.11247889309206184, 0.5991245555104008])
    c = np.array([[0.21852061138050005, 0.13162664068691, 0.5490911414028141],
                  [0.19695715642104128, 0.751169557376425, 0.2798727103354204],
                  [0.9680080970310831, 0.5651127192870163, 0.08797606848968764]])
    R = float(-(pu @ np.log2(pu)))
    sol = solve_inner(pu, lam, c, R)
    assert sol.status is Status.RATE_INACTIVE
    assert sol.info <= R
    assert kkt_residual(sol, pu, lam, c, R).ok()


@pytest.mark.parametrize("seed", range(40))
def test_kkt_on_larger_instances(seed):
    rng = np.random.default_rng(1000 + seed)
    U = int(rng.integers(2, 7))
    pu = rng.dirichlet(np.ones(U))
    lam = rng.dirichlet(np.ones(U + 3))
    c = rng.random((U, U + 3))
    if seed % 3 == 0:
        c = np.round(3 * c) / 3  # many ties
    H = float(-(pu @ np.log2(pu)))
    for R in (0.05, 0.5 * H, H):
        sol = solve_inner(pu, lam, c, R)
        assert kkt_residual(sol, pu, lam, c, R).ok()
        if sol.status is Status.RATE_ACTIVE:
            assert sol.info == pytest.approx(R, abs=1e-9)
