import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinlab import (
    DimensionMismatch,
    ResourceLimit,
    covariance_check,
    dump_couplings,
    eta_x,
    evaluate_gradient,
    evaluate_hamiltonian,
    hamiltonian,
    load_couplings,
    sample_bundle,
    sample_disorder,
    validate_mixture,
)
from spinlab.field import perturbed_evaluate, sample_perturbed
from spinlab.sphere import sample_sphere

from conftest import MIXED, PURE2, PURE3


def brute_force(J, m, sigma):
    """Literal sum over all index tuples, the reference for the contraction code."""
    N = len(sigma)
    total = 0.0
    for p in J.degrees:
        T = J.tensors[p]
        acc = sum(T[idx] * np.prod(sigma[list(idx)]) for idx in itertools.product(range(N), repeat=p))
        total += m.gamma(p) * N ** (-(p - 1) / 2) * acc
    return total


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_evaluation_matches_brute_force(N, mixture, rng):
    J = sample_disorder(N, mixture, rng)
    sigma = sample_sphere(N, 1, rng)[0]
    assert evaluate_hamiltonian(J, mixture, sigma) == pytest.approx(brute_force(J, mixture, sigma), rel=1e-12)


def test_batch_equals_single(mixture, rng):
    H = hamiltonian(sample_disorder(5, mixture, rng), mixture)
    X = sample_sphere(5, 7, rng)
    np.testing.assert_allclose(H(X), [H(x) for x in X], rtol=1e-13)


def test_one_spin_is_linear():
    m = validate_mixture([2.0])
    J = sample_disorder(3, m, seed=5)
    sigma = np.array([1.0, -1.0, 1.0])
    assert evaluate_hamiltonian(J, m, sigma) == pytest.approx(2.0 * J.tensors[1] @ sigma)


@given(st.floats(-3, 3).filter(lambda a: abs(a) > 1e-3))
def test_homogeneity_of_pure_field(a):
    J = sample_disorder(4, PURE3, seed=11)
    sigma = np.array([0.3, -1.2, 0.5, 1.0])
    H = hamiltonian(J, PURE3)
    assert H(a * sigma) == pytest.approx(a**3 * H(sigma), rel=1e-10, abs=1e-12)


def test_gradient_and_hessian_by_finite_differences(mixture, rng):
    H = hamiltonian(sample_disorder(4, mixture, rng), mixture)
    x = rng.standard_normal(4)
    h = 1e-6
    eye = np.eye(4)
    fd = np.array([(H(x + h * e) - H(x - h * e)) / (2 * h) for e in eye])
    np.testing.assert_allclose(H.gradient(x), fd, rtol=1e-6, atol=1e-7)
    fd2 = np.array([(H.gradient(x + h * e) - H.gradient(x - h * e)) / (2 * h) for e in eye])
    np.testing.assert_allclose(H.hessian(x), fd2, rtol=1e-5, atol=1e-6)
    u = eye[1]
    assert H.directional_second(x, u) == pytest.approx(H.hessian(x)[1, 1], rel=1e-12)


def test_gradient_wrapper_matches_polynomial(rng):
    J = sample_disorder(4, MIXED, rng)
    x = rng.standard_normal(4)
    np.testing.assert_allclose(evaluate_gradient(J, MIXED, x), hamiltonian(J, MIXED).gradient(x), rtol=1e-13)


def test_third_contract_by_finite_differences(rng):
    H = hamiltonian(sample_disorder(3, MIXED, rng), MIXED)
    x, u = rng.standard_normal(3), np.array([0.6, 0.0, 0.8])
    h = 1e-5
    fd = np.array([(u @ H.hessian(x + h * e) @ u - u @ H.hessian(x - h * e) @ u) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(H.third_contract(x, u), fd, rtol=1e-6, atol=1e-7)


def test_determinism_and_dump_roundtrip(tmp_path):
    a = sample_disorder(4, MIXED, seed=123)
    b = sample_disorder(4, MIXED, seed=123)
    assert a == b and a.seed == 123
    assert a != sample_disorder(4, MIXED, seed=124)
    buf = io.BytesIO()
    dump_couplings(a, buf)
    buf.seek(0)
    back = load_couplings(buf)
    assert back == a and back.seed == 123
    with pytest.raises(ValueError):
        load_couplings(io.BytesIO(b"nope"))


def test_memory_budget(monkeypatch):
    monkeypatch.setenv("SPINLAB_MEM_BUDGET_MB", "1")
    with pytest.raises(ResourceLimit):
        sample_disorder(200, PURE3, seed=0)


def test_dimension_mismatch(rng):
    H = hamiltonian(sample_disorder(3, PURE2, rng), PURE2)
    with pytest.raises(DimensionMismatch):
        H(np.ones(4))


def test_covariance_diagonal_matches_theory():
    sigma = np.ones(5)
    res = covariance_check(5, PURE2, sigma, sigma, K=4000, seed=1)
    assert res["theory"] == pytest.approx(5.0)
    assert abs(res["empirical"] - 5.0) < 5 * res["stderr"]


def test_covariance_orthogonal_pair_pure_three_spin(rng):
    sigma = np.array([1.0, 1.0, 1.0, 1.0])
    tau = np.array([1.0, -1.0, 1.0, -1.0])
    res = covariance_check(4, PURE3, sigma, tau, K=3000, seed=rng)
    assert res["theory"] == 0.0
    assert abs(res["empirical"]) < 5 * res["stderr"]


def test_bundle_endpoints(rng):
    bundle = sample_bundle(2, 3, MIXED, seed=9)
    rho, tau = sample_sphere(2, 6, rng), sample_sphere(3, 6, rng)
    np.testing.assert_array_equal(bundle.interpolating(1.0)(rho, tau), bundle.decoupled()(rho, tau))
    np.testing.assert_allclose(bundle.interpolating(0.0)(rho, tau), bundle.hbar_N()(rho) + bundle.hbar_M()(tau),
                               rtol=1e-13)
    joint = np.concatenate([rho, tau], axis=1)
    np.testing.assert_allclose(bundle.restricted()(rho, tau), perturbed_evaluate(bundle, MIXED, joint), rtol=1e-13)


def test_unperturbed_bundle_has_no_perturbation():
    bundle = sample_bundle(2, 2, PURE2, seed=3, c=None)
    assert not bundle.perturbed
    x = np.ones((1, 4))
    np.testing.assert_allclose(bundle.hbar_main()(x), bundle.h_main()(x))


def test_perturbation_variance_is_eta():
    # H-bar - H at a fixed point is centred Gaussian with variance eta_N^x(1) given x
    N, K = 3, 3000
    sigma = np.array([1.0, 1.0, 1.0])
    ratios = []
    for k in range(K):
        H, Hbar, x = sample_perturbed(N, PURE2, seed=k)
        ratios.append((Hbar(sigma) - H(sigma)) ** 2 / eta_x(x, N, 1.0))
    ratios = np.asarray(ratios)
    assert abs(ratios.mean() - 1.0) < 5 * ratios.std(ddof=1) / math.sqrt(K)
