import math

import numpy as np
import pytest

from spinlab import DomainError, d_split_membership, hamiltonian, lemma_estimate_check, lipschitz_estimates, sample_disorder
from spinlab.bands import in_plus, lemma_radius, radial_derivative, x_band_integral, x_band_integrals
from spinlab.sphere import sample_sphere

from conftest import MIXED, PURE2, PURE3, validate_mixture


def test_radial_derivative_finite_difference(rng):
    N, M = 3, 2
    H = hamiltonian(sample_disorder(N + M, MIXED, rng), MIXED)
    rho, tau = sample_sphere(N, 4, rng), sample_sphere(M, 4, rng)
    unit = tau / np.linalg.norm(tau, axis=1, keepdims=True)
    h = 1e-6
    fd = (H(np.hstack([rho, tau + h * unit])) - H(np.hstack([rho, tau - h * unit]))) / (2 * h)
    np.testing.assert_allclose(radial_derivative(H, rho, tau), fd, rtol=1e-6, atol=1e-8)
    assert d_split_membership(H, rho[0], tau[0]) == ("plus" if fd[0] >= 0 else "minus")


def test_split_is_exact_partition(rng):
    N, M = 3, 3
    H = hamiltonian(sample_disorder(N + M, PURE2, rng), PURE2)
    res = x_band_integrals(H, N, M, 1.5, 4000, rng)
    assert res["all"]["value"] == pytest.approx(res["plus"]["value"] + res["minus"]["value"], rel=1e-14)
    assert 0 < res["plus_fraction"] < 1


def test_odd_field_swaps_sides_under_reflection(rng):
    # for an odd field x -> -x reverses the radial derivative, so D+ and D- swap
    N, M = 2, 2
    H = hamiltonian(sample_disorder(N + M, PURE3, rng), PURE3)
    rho, tau = sample_sphere(N, 500, rng), sample_sphere(M, 500, rng)
    np.testing.assert_array_equal(in_plus(H, rho, tau), ~in_plus(H, -rho, -tau))


def test_band_integral_at_sqrt_m_is_plain_average(rng):
    N, M = 2, 3
    H = hamiltonian(sample_disorder(N + M, PURE3, 1), PURE3)
    r = math.sqrt(M)
    a = x_band_integral(H, N, M, r, n_inner=5000, rng=np.random.default_rng(0))
    g = np.random.default_rng(0)
    rho, tau = sample_sphere(N, 5000, g), sample_sphere(M, 5000, g)
    assert a["value"] == pytest.approx(np.mean(np.exp(H(np.hstack([rho, tau])))), rel=1e-12)
    with pytest.raises(DomainError):
        x_band_integral(H, N, M, r, side="both")
    with pytest.raises(DomainError):
        x_band_integral(H, N, M, 10.0)


def test_lipschitz_one_spin_is_exact(rng):
    m = validate_mixture([1.5])
    J = sample_disorder(6, m, rng)
    est = lipschitz_estimates(hamiltonian(J, m), 5, rng)
    assert est.l1 == pytest.approx(1.5 * np.linalg.norm(J.tensors[1]), rel=1e-12)
    assert est.l2 == pytest.approx(0.0, abs=1e-12)


def test_lipschitz_two_spin_matches_spectral_oracle(rng):
    # H = N^{-1/2} sigma^T J sigma has Hessian (J + J^T)/sqrt N everywhere
    N = 5
    J = sample_disorder(N, PURE2, rng)
    S = (J.tensors[2] + J.tensors[2].T) / math.sqrt(N)
    op = np.max(np.abs(np.linalg.eigvalsh(S)))
    est = lipschitz_estimates(hamiltonian(J, PURE2), 50, rng)
    assert est.l2 == pytest.approx(op, rel=1e-10)
    assert est.l1 <= op * math.sqrt(N) * (1 + 1e-12)
    assert est.l1 >= 0.99 * op * math.sqrt(N)
    assert est.l1_normalized == pytest.approx(est.l1 / math.sqrt(N))


def test_more_probes_never_lower(rng):
    H = hamiltonian(sample_disorder(6, MIXED, 3), MIXED)
    few = lipschitz_estimates(H, 5, np.random.default_rng(1), probe_method="random")
    many = lipschitz_estimates(H, 20, np.random.default_rng(1), probe_method="random")
    assert many.l1 >= few.l1 and many.l2 >= few.l2
    with pytest.raises(DomainError):
        lipschitz_estimates(H, 5, rng, probe_method="grid")


def test_lemma_radius_covers_segments():
    assert lemma_radius(4, 4, 2.3) == pytest.approx(math.sqrt(4 + 2.3**2))
    assert lemma_radius(4, 4, 1.7) == pytest.approx(math.sqrt(8))


@pytest.mark.parametrize("r", [math.sqrt(2) + 0.3, math.sqrt(2) - 0.3])
def test_lemma_check_small(r, rng):
    N = M = 2
    H = hamiltonian(sample_disorder(N + M, MIXED, 5), MIXED)
    res = lemma_estimate_check(H, N, M, r, 500, rng, n_probes=20)
    assert res["violations"] == 0
    assert res["side"] == ("plus" if r >= math.sqrt(M) else "minus")
    assert 0 < res["checked"] < 500
