import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinlab import (
    AllZero,
    DomainError,
    NegativeCoefficient,
    PerturbationParams,
    convexity_report,
    draw_perturbation,
    eta_x,
    validate_mixture,
    xi_deriv,
)

coeff_lists = st.lists(st.floats(0, 3, allow_nan=False), min_size=1, max_size=5).filter(lambda c: any(c))


def test_pure_two_spin_values():
    m = validate_mixture([0.0, 1.0])
    assert m.xi(0.5) == pytest.approx(0.25)
    assert m.xi(0.5, 1) == pytest.approx(1.0)
    assert m.xi(0.5, 2) == pytest.approx(2.0)
    assert m.degrees == [2]


def test_padding_and_truncation():
    m = validate_mixture([1.0, 2.0], p_max=4)
    assert m.coeffs == (1.0, 2.0, 0.0, 0.0)
    assert m.gamma(7) == 0.0
    with pytest.raises(DomainError):
        validate_mixture([1.0, 2.0, 3.0], p_max=2)


@pytest.mark.parametrize("coeffs, err", [([0.0, -1.0], NegativeCoefficient), ([0.0, 0.0], AllZero),
                                         ([], AllZero), ([np.nan], DomainError)])
def test_invalid_mixtures(coeffs, err):
    with pytest.raises(err):
        validate_mixture(coeffs)


def test_domain_errors():
    m = validate_mixture([1.0])
    with pytest.raises(DomainError):
        xi_deriv(m, 1.5)
    with pytest.raises(DomainError):
        xi_deriv(m, 0.5, 3)


@given(coeff_lists)
def test_derivative_matches_finite_differences(coeffs):
    m = validate_mixture(coeffs)
    t = np.linspace(-0.9, 0.9, 19)
    h = 1e-5
    fd1 = (m.xi(t + h) - m.xi(t - h)) / (2 * h)
    fd2 = (m.xi(t + h, 1) - m.xi(t - h, 1)) / (2 * h)
    scale = 1 + sum(c * c for c in coeffs) * len(coeffs) ** 2
    np.testing.assert_allclose(m.xi(t, 1), fd1, atol=1e-8 * scale)
    np.testing.assert_allclose(m.xi(t, 2), fd2, atol=1e-6 * scale)


@given(coeff_lists)
def test_xi_properties_on_unit_interval(coeffs):
    m = validate_mixture(coeffs)
    t = np.linspace(0, 1, 101)
    assert m.xi(0.0) == 0.0
    assert np.all(m.xi(t, 2) >= 0)
    assert m.xi(1.0) == pytest.approx(sum(c * c for c in coeffs))
    assert np.all(np.abs(m.xi(-t)) <= m.xi(t) + 1e-12)


@given(coeff_lists)
def test_convexity_report(coeffs):
    m = validate_mixture(coeffs)
    rep = convexity_report(m)
    assert rep["convex_on_unit"]
    assert rep["even"] == all(c == 0 for c in coeffs[0::2])
    if rep["even"]:
        assert rep["convex_on_symmetric"]


def test_odd_mixture_not_convex_on_symmetric_interval():
    rep = convexity_report(validate_mixture([0.0, 0.0, 1.0]))
    assert not rep["even"] and not rep["convex_on_symmetric"]


def test_perturbation_params(rng):
    pert = draw_perturbation(4, rng)
    assert len(pert.x) == 4 and all(1 <= v <= 2 for v in pert.x)
    with pytest.raises(DomainError):
        PerturbationParams((1.5,), c=0.5)
    with pytest.raises(DomainError):
        PerturbationParams((2.5,))


@given(st.lists(st.floats(1, 2), min_size=1, max_size=4), st.integers(1, 10_000),
       st.floats(0.26, 0.49))
def test_eta_closed_form(x, N, c):
    pert = PerturbationParams(tuple(x), c)
    expected = N ** (2 * c) * sum(4.0 ** -(p + 1) * v * v for p, v in enumerate(x))
    assert eta_x(pert, N, 1.0) == pytest.approx(expected, rel=1e-12)
    # per site the perturbation covariance shrinks with N since 2c < 1
    assert eta_x(pert, 4 * N, 1.0) / (4 * N) < eta_x(pert, N, 1.0) / N
