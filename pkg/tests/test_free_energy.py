import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from spinlab import (
    DomainError,
    exact_log_partition,
    hamiltonian,
    mc_log_partition,
    perturbation_gap,
    product_free_energy,
    quenched_free_energy,
    sample_disorder,
    superadditivity_defect,
    validate_mixture,
)
from spinlab.errors import UnsupportedDimension
from spinlab.free_energy import log_mean_exp, sphere_quadrature

from conftest import PURE2, PURE3

ONE_SPIN = validate_mixture([1.0])


@pytest.mark.parametrize("N", [1, 2, 3])
def test_quadrature_moments(N):
    pts, w = sphere_quadrature(N)
    assert w.sum() == pytest.approx(1.0, rel=1e-14)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), math.sqrt(N))
    # fourth moment of one coordinate on S_N(sqrt N) is 3N / (N + 2)
    assert w @ pts[:, 0] ** 2 == pytest.approx(1.0, rel=1e-12)
    assert w @ pts[:, 0] ** 4 == pytest.approx(3 * N / (N + 2), rel=1e-12)


def test_quadrature_rejects_large_dimension():
    with pytest.raises(UnsupportedDimension):
        sphere_quadrature(4)


def one_spin_oracle(N, a):
    """log E exp(a . sigma) for sigma uniform on S_N(sqrt N)."""
    k = np.linalg.norm(a) * math.sqrt(N)
    if N == 1:
        return math.log(math.cosh(k))
    if N == 2:
        return math.log(special.i0(k))
    return math.log(math.sinh(k) / k)


@pytest.mark.parametrize("N", [1, 2, 3])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_exact_matches_one_spin_closed_form(N, seed):
    J = sample_disorder(N, ONE_SPIN, seed=seed)
    H = hamiltonian(J, ONE_SPIN)
    assert exact_log_partition(H) == pytest.approx(one_spin_oracle(N, J.tensors[1]), rel=1e-12)


@pytest.mark.parametrize("N", [2, 3])
def test_refinement_is_converged(N):
    H = hamiltonian(sample_disorder(N, PURE3, seed=7), PURE3)
    assert exact_log_partition(H, refine=0.5) == pytest.approx(exact_log_partition(H), abs=1e-12)


def test_mc_agrees_with_exact(rng):
    H = hamiltonian(sample_disorder(3, PURE2, seed=3), PURE2)
    res = mc_log_partition(H, 100_000, rng)
    assert abs(res["value"] - exact_log_partition(H)) < 4 * res["stderr"]
    with pytest.raises(DomainError):
        mc_log_partition(H, 10, rng)


@given(st.floats(-50, 50), st.integers(2, 50))
def test_log_mean_exp_constant(c, n):
    res = log_mean_exp(np.full(n, c))
    assert res["value"] == pytest.approx(c, abs=1e-12)
    assert res["stderr"] == pytest.approx(0.0, abs=1e-12)
    assert res["bias"] == pytest.approx(0.0, abs=1e-9)


@given(st.lists(st.floats(-30, 30), min_size=2, max_size=40))
def test_log_mean_exp_matches_scipy(values):
    v = np.asarray(values)
    assert log_mean_exp(v)["value"] == pytest.approx(special.logsumexp(v) - math.log(len(v)), abs=1e-10)


def test_quenched_is_deterministic_and_records():
    a = quenched_free_energy(2, PURE2, n_disorder=8, seed=5)
    b = quenched_free_energy(2, PURE2, n_disorder=8, seed=5)
    assert a.value == b.value and a.records == b.records
    assert a.method == "exact_quadrature" and len(a.records) == 8
    assert a.total == pytest.approx(2 * a.value)
    with pytest.raises(DomainError):
        quenched_free_energy(2, PURE2, n_disorder=4)


def test_quenched_workers_do_not_change_result():
    a = quenched_free_energy(5, PURE2, n_disorder=8, n_inner=2000, seed=1)
    b = quenched_free_energy(5, PURE2, n_disorder=8, n_inner=2000, seed=1, workers=3)
    assert a.records == b.records and a.method == "plain_mc"


def test_annealed_bound():
    # Jensen: E log Z <= log E Z = N xi(1) / 2
    est = quenched_free_energy(3, PURE3, n_disorder=64, seed=2)
    assert est.value <= 0.5 * PURE3.xi(1.0) + 3 * est.stderr


def test_product_free_energy_modes():
    a = product_free_energy(1, 1, PURE2, n_disorder=8, seed=3)
    b = product_free_energy(1, 1, PURE2, mode="decoupled_Htilde", n_disorder=8, seed=3)
    assert a.N == 2 and a.method == b.method == "exact_quadrature"
    with pytest.raises(DomainError):
        product_free_energy(1, 1, PURE2, mode="nope")


def test_superadditivity_reuses_equal_sizes():
    d = superadditivity_defect(1, 1, PURE2, n_disorder=8, seed=0)
    est = d["estimates"]
    assert set(est) == {1, 2}
    assert d["defect"] == pytest.approx(est[2].total - 2 * est[1].total)


def test_perturbation_gap_is_paired():
    g = perturbation_gap(3, PURE2, n_disorder=8, seed=1)
    assert g["gap"] == pytest.approx(g["F_bar"] - g["F"], abs=1e-12)
    assert g["eta_over_n"] > 0
