import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randlyap.errors import NumericalOverflow
from randlyap.lyapunov import (LEEstimate, TangentFrame, block_product, block_svd, block_svd_batch,
                               constant_product_exponent, estimate_le_furstenberg, estimate_le_norm,
                               integral_decomposition, proof_block_length)
from randlyap.random_chain import NoiseModel, empirical_proj_measure
from randlyap.scalar_maps import find_critical_sets, sine_map
from randlyap.torus_dynamics import fold_angle, jacobian_F_omega, mod1, TorusPoint, apply_F_omega


def test_constant_diagonal_harness_gives_log_two():
    assert constant_product_exponent(np.diag([2.0, 0.5]), 1000) == pytest.approx(np.log(2), abs=1e-10)


@pytest.mark.parametrize("c", [3.0, -5.0, 40.0])
def test_constant_hyperbolic_jacobian_gives_log_spectral_radius(c):
    J = np.array([[c, -1.0], [1.0, 0.0]])
    rate = np.log(np.max(np.abs(np.linalg.eigvals(J))))
    # the transient costs O(1/n) in the exponent
    assert constant_product_exponent(J, 10**4) == pytest.approx(rate, abs=1e-3)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 50), every=st.integers(1, 25), seed=st.integers(0, 2**32 - 1))
def test_renormalization_is_exact(n, every, seed):
    rng = np.random.default_rng(seed)
    mats = [np.array([[d, -1.0], [1.0, 0.0]]) for d in rng.uniform(-60, 60, n)]
    frame = TangentFrame(renorm_every=every)
    naive = np.eye(2)
    for J in mats:
        frame.push(J)
        naive = J @ naive
    assert 1e-8 <= np.abs(frame.matrix).max() <= 1e8 or frame.steps % every
    assert frame.log_norm() == pytest.approx(np.log(np.linalg.norm(naive, 2)), rel=1e-8, abs=1e-10)


def test_renormalization_detects_overflow():
    frame = TangentFrame(renorm_every=1)
    frame.matrix = np.full((2, 2), np.inf)
    with pytest.raises(NumericalOverflow):
        frame.renormalize()
    with pytest.raises(NumericalOverflow):
        estimate_le_norm(sine_map(1e3), NoiseModel(0.01), n_steps=10**4, renorm_every=10**4, n_replicas=2)


def test_estimate_requires_enough_steps():
    with pytest.raises(ValueError):
        estimate_le_norm(sine_map(10.0), NoiseModel(0.01), n_steps=100)


def test_std_error_is_replica_spread():
    est = LEEstimate.from_replicas([1.0, 2.0, 3.0, 4.0], 10, "norm")
    assert est.lambda_hat == 2.5
    assert est.std_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)


def test_block_svd_single_step_closed_form():
    f = sine_map(10.0, 0.1)
    q0, w = (0.3, 0.7), 0.004
    c = f.d1(mod1(q0[0] + w))
    # sigma^2 solves s^2 - (c^2 + 2) s + 1 = 0
    s2 = ((c * c + 2) + np.sqrt((c * c + 2) ** 2 - 4)) / 2
    res = block_svd(f, [w], q0)
    assert res.sigma1 == pytest.approx(np.sqrt(s2), rel=1e-10)
    assert res.sigma1 * res.sigma2 == pytest.approx(1.0, abs=1e-8)


def test_block_svd_angles_are_contracted_directions():
    f = sine_map(10.0, 0.1)
    rng = np.random.default_rng(1)
    for _ in range(100):
        # short blocks: |M v| for the contracted v is only resolved to sigma1 * 1e-16
        w = rng.uniform(-0.01, 0.01, 3)
        q0 = tuple(rng.random(2))
        res = block_svd(f, w, q0)
        x, y = q0
        M = np.eye(2)
        for wi in w:
            M = jacobian_F_omega(f, (x, y), wi) @ M
            x, y = apply_F_omega(f, TorusPoint(x, y), wi)
        v = np.array([np.cos(res.theta_minus_0), np.sin(res.theta_minus_0)])
        assert np.linalg.norm(M @ v) == pytest.approx(res.sigma2, rel=1e-6)
        # M v = sigma2 u, so u is the most expanded input of M^-1 = adj(M)
        adj = np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]])
        u = np.linalg.svd(adj)[2][0]
        assert abs(np.sin(fold_angle(*u) - res.theta_minus_N)) < 1e-8
        assert res.sigma1 * res.sigma2 == pytest.approx(1.0, abs=1e-8)


def test_long_blocks_are_rescaled_consistently():
    f = sine_map(50.0, 0.1)
    w = np.random.default_rng(2).uniform(-0.01, 0.01, 120)
    M, log_scale = block_product(f, w, (0.2, 0.4))
    assert np.abs(M).max() <= 1.0 + 1e-12
    res = block_svd(f, w, (0.2, 0.4))
    assert res.log_sigma1 > 120 * np.log(10)
    short = block_svd(f, w[:20], (0.2, 0.4))
    ref_M, _ = block_product(f, w[:20], (0.2, 0.4))
    assert short.log_sigma1 == pytest.approx(np.log(np.linalg.norm(ref_M, 2)), rel=1e-12)


def test_batch_svd_matches_single_blocks():
    f = sine_map(20.0, 0.25)
    rng = np.random.default_rng(3)
    W = rng.uniform(-0.01, 0.01, (50, 6))
    x0, y0 = rng.random(50), rng.random(50)
    ls, t0, tN = block_svd_batch(f, W, x0, y0)
    for i in range(50):
        r = block_svd(f, W[i], (x0[i], y0[i]))
        assert ls[i] == pytest.approx(r.log_sigma1, rel=1e-10)
        assert abs(np.sin(t0[i] - r.theta_minus_0)) < 1e-8
        assert abs(np.sin(tN[i] - r.theta_minus_N)) < 1e-8


@pytest.fixture(scope="module")
def estimates_L10():
    f, noise = sine_map(10.0), NoiseModel(0.01, seed=5)
    return (estimate_le_norm(f, noise, n_steps=10**5, n_replicas=8),
            estimate_le_furstenberg(f, noise, n_steps=10**5, n_replicas=8),
            estimate_le_norm(f, noise, n_steps=10**5, n_replicas=8, inverse=True))


def test_norm_and_furstenberg_estimates_agree(estimates_L10):
    norm, furst, _ = estimates_L10
    assert norm.agrees_with(furst)
    assert norm.n_replicas == 8 and len(norm.per_replica) == 8


def test_inverse_cocycle_has_the_same_exponent(estimates_L10):
    norm, _, inv = estimates_L10
    assert abs(norm.lambda_hat - inv.lambda_hat) <= 3 * np.hypot(norm.std_error, inv.std_error)


def test_vertical_start_does_not_change_the_estimate(estimates_L10):
    _, furst, _ = estimates_L10
    vert = estimate_le_furstenberg(sine_map(10.0), NoiseModel(0.01, seed=6), n_steps=10**5,
                                   q0=(0.1234, 0.5678, np.pi / 2), n_replicas=8)
    assert furst.agrees_with(vert)


def test_estimate_is_independent_of_initial_point():
    f, noise = sine_map(10.0), NoiseModel(0.01, seed=7)
    rng = np.random.default_rng(8)
    ests = [estimate_le_norm(f, noise.substream(k), q0=tuple(rng.random(2)), n_steps=10**4, n_replicas=4)
            for k in range(10)]
    for a in ests:
        for b in ests:
            assert a.agrees_with(b)


def test_proof_block_length_formula():
    crit = find_critical_sets(sine_map(1.0))
    pars = proof_block_length(crit, alpha=0.5, beta=0.5, L=1e4)
    assert pars["p"] == 0.125
    assert pars["m"] == pytest.approx(0.125 / (4 * crit.k1 * crit.m1))
    assert pars["N"] == int(np.floor(pars["m"] * 100))


@pytest.fixture(scope="module")
def decomposition():
    f = sine_map(100.0, 0.25)
    crit = find_critical_sets(f)
    noise = NoiseModel(1e-3, seed=9)
    m = empirical_proj_measure(f, noise, n_samples=10**5, keep=10**4)
    return integral_decomposition(f, crit, noise, m.samples, N=3, beta=0.5, alpha=0.5)


def test_decomposition_partitions_the_mass(decomposition):
    assert decomposition.good_mass + decomposition.bad_mass == 1.0
    assert decomposition.n_samples == 10**4
    assert decomposition.good_mass > 0


def test_decomposition_floors_hold(decomposition):
    assert decomposition.good_violations == 0
    assert decomposition.global_violations == 0
    assert decomposition.I >= decomposition.lower_bound
