"""Mixture polynomials xi(t) = sum_p gamma_p^2 t^p and the perturbation weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllZero, DomainError, NegativeCoefficient

DEFAULT_C = 3.0 / 8.0
CONVEXITY_GRID = 10_001


@dataclass(frozen=True)
class Mixture:
    """Truncated mixture with coefficients ``coeffs[p - 1] = gamma_p``."""

    coeffs: tuple[float, ...]

    @property
    def p_max(self) -> int:
        return len(self.coeffs)

    @property
    def degrees(self) -> list[int]:
        """Degrees p with gamma_p > 0."""
        return [p for p, g in enumerate(self.coeffs, start=1) if g > 0]

    def gamma(self, p: int) -> float:
        return self.coeffs[p - 1] if 1 <= p <= self.p_max else 0.0

    def xi(self, t, k: int = 0):
        return xi_deriv(self, t, k)

    def __str__(self) -> str:
        return "(" + ", ".join(f"{g:g}" for g in self.coeffs) + ")"


def validate_mixture(coeffs, p_max: int | None = None) -> Mixture:
    """Build a Mixture, optionally zero-padding the coefficients to ``p_max``.

    Raises:
        NegativeCoefficient: some gamma_p < 0.
        AllZero: every gamma_p vanishes.
    """
    values = [float(c) for c in coeffs]
    if not values:
        raise AllZero("mixture needs at least one coefficient")
    if any(not np.isfinite(v) for v in values):
        raise DomainError("mixture coefficients must be finite")
    if any(v < 0 for v in values):
        raise NegativeCoefficient(f"negative coefficient in {values}")
    if all(v == 0 for v in values):
        raise AllZero("all mixture coefficients are zero")
    if p_max is not None:
        if p_max < len(values) and any(values[p_max:]):
            raise DomainError(f"p_max={p_max} truncates nonzero coefficients")
        values = (values + [0.0] * p_max)[:p_max]
    return Mixture(tuple(values))


def _poly_deriv(weights: np.ndarray, t, k: int):
    """k-th derivative of sum_p weights[p-1] t^p, vectorised over t."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for p, w in enumerate(weights, start=1):
        if w == 0 or p < k:
            continue
        falling = 1.0
        for j in range(k):
            falling *= p - j
        out = out + w * falling * t ** (p - k)
    return out if out.ndim else float(out)


def xi_deriv(m: Mixture, t, k: int = 0):
    """Return d^k xi / dt^k at ``t`` (scalar or array), for |t| <= 1."""
    if k not in (0, 1, 2):
        raise DomainError(f"derivative order must be 0, 1 or 2, got {k}")
    arr = np.asarray(t, dtype=float)
    if np.any(np.abs(arr) > 1.0 + 1e-12):
        raise DomainError("xi is only evaluated on [-1, 1]")
    return _poly_deriv(np.square(np.asarray(m.coeffs)), t, k)


@dataclass(frozen=True)
class PerturbationParams:
    """Uniform weights x_p in [1, 2] and the exponent c of s_N = N^c."""

    x: tuple[float, ...]
    c: float = DEFAULT_C

    def __post_init__(self):
        if not 0.25 < self.c < 0.5:
            raise DomainError(f"c must lie in (1/4, 1/2), got {self.c}")
        if any(not 1.0 <= v <= 2.0 for v in self.x):
            raise DomainError(f"x_p must lie in [1, 2], got {self.x}")

    @property
    def p_max(self) -> int:
        return len(self.x)

    def s(self, N: int) -> float:
        return float(N) ** self.c


def draw_perturbation(p_max: int, rng: np.random.Generator, c: float = DEFAULT_C) -> PerturbationParams:
    return PerturbationParams(tuple(float(v) for v in rng.uniform(1.0, 2.0, size=p_max)), c)


def eta_x(pert: PerturbationParams, N: int, t):
    """eta_N^x(t) = s_N^2 sum_p 4^-p x_p^2 t^p, the perturbation covariance."""
    if N < 1:
        raise DomainError("N must be positive")
    if np.any(np.abs(np.asarray(t, dtype=float)) > 1.0 + 1e-12):
        raise DomainError("eta is only evaluated on [-1, 1]")
    x = np.asarray(pert.x)
    weights = 4.0 ** -np.arange(1, len(x) + 1) * x**2
    return pert.s(N) ** 2 * _poly_deriv(weights, t, 0)


def convexity_report(m: Mixture, n_grid: int = CONVEXITY_GRID) -> dict[str, bool]:
    """Classify evenness and convexity of xi.

    Convexity on [-1, 1] is decided by scanning xi'' on ``n_grid`` equispaced
    points, so it is a grid statement rather than a symbolic one.
    """
    even = all(g == 0 for p, g in enumerate(m.coeffs, start=1) if p % 2 == 1)
    grid = np.linspace(-1.0, 1.0, n_grid)
    second = xi_deriv(m, grid, 2)
    unit = second[grid >= 0]
    return {
        "even": even,
        "convex_on_unit": bool(np.all(unit >= 0)),
        "convex_on_symmetric": bool(np.all(second >= 0)),
    }
