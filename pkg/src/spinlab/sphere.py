"""Spheres S_N(r), product spheres S_N x S_M and the band geometry around ||tau|| = sqrt(M)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from .errors import DimensionMismatch, DomainError

DEFAULT_BAND_HALF_WIDTH = 0.5


@dataclass(frozen=True, eq=False)
class SphericalConfig:
    coords: np.ndarray
    radius: float

    def __post_init__(self):
        norm = float(np.linalg.norm(self.coords))
        if abs(norm - self.radius) > 1e-9 * max(1.0, self.radius):
            raise DomainError(f"norm {norm} does not match radius {self.radius}")

    @property
    def dim(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True, eq=False)
class ProductConfig:
    rho: SphericalConfig
    tau: SphericalConfig

    def concat(self) -> np.ndarray:
        return np.concatenate([self.rho.coords, self.tau.coords])


@dataclass(frozen=True)
class OverlapTriple:
    r1: float
    r2: float
    r: float


def sample_sphere(N: int, n: int, rng: np.random.Generator, radius: float | None = None) -> np.ndarray:
    """``n`` uniform points on S_N(radius) as an (n, N) array; radius defaults to sqrt(N)."""
    if N < 1:
        raise DomainError("N must be >= 1")
    radius = math.sqrt(N) if radius is None else radius
    if radius <= 0:
        raise DomainError("radius must be positive")
    g = rng.standard_normal((n, N))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero Gaussian vector has probability zero; redraw defensively
    while np.any(norms == 0):
        bad = (norms == 0)[:, 0]
        g[bad] = rng.standard_normal((int(bad.sum()), N))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
    return g * (radius / norms)


def uniform_sphere(N: int, radius: float, rng: np.random.Generator) -> SphericalConfig:
    return SphericalConfig(sample_sphere(N, 1, rng, radius)[0], float(radius))


def overlap_arrays(rho1, tau1, rho2, tau2):
    """Vectorised (R^1, R^2, R) for stacks of product configurations."""
    rho1, rho2 = np.asarray(rho1, float), np.asarray(rho2, float)
    tau1, tau2 = np.asarray(tau1, float), np.asarray(tau2, float)
    if rho1.shape != rho2.shape or tau1.shape != tau2.shape:
        raise DimensionMismatch("replicas must have matching shapes")
    N, M = rho1.shape[-1], tau1.shape[-1]
    r1 = np.sum(rho1 * rho2, axis=-1) / N
    r2 = np.sum(tau1 * tau2, axis=-1) / M
    return r1, r2, combine_overlaps(r1, r2, N, M)


def combine_overlaps(r1, r2, N: int, M: int):
    return (N / (N + M)) * r1 + (M / (N + M)) * r2


def overlaps(pair1: ProductConfig, pair2: ProductConfig) -> OverlapTriple:
    if pair1.rho.dim != pair2.rho.dim or pair1.tau.dim != pair2.tau.dim:
        raise DimensionMismatch("product configurations live on different spheres")
    r1, r2, r = overlap_arrays(pair1.rho.coords, pair1.tau.coords, pair2.rho.coords, pair2.tau.coords)
    return OverlapTriple(float(r1), float(r2), float(r))


def eta_radius(N: int, M: int, r):
    """eta(r) = sqrt(N + M - r^2), the rho-radius on the level set ||tau|| = r."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r * r > N + M + 1e-12):
        raise DomainError(f"r must lie in [0, sqrt(N+M)], got {r}")
    out = np.sqrt(np.maximum(N + M - r * r, 0.0))
    return float(out) if out.ndim == 0 else out


def scale_map(rho, tau, r: float):
    """Array form of f_r: (eta(r)/sqrt(N) rho, r/sqrt(M) tau), batched over rows."""
    rho = np.asarray(rho, float)
    tau = np.asarray(tau, float)
    N, M = rho.shape[-1], tau.shape[-1]
    if not 0 < r < math.sqrt(N + M):
        raise DomainError(f"r must lie in (0, sqrt(N+M)), got {r}")
    return rho * (eta_radius(N, M, r) / math.sqrt(N)), tau * (r / math.sqrt(M))


def scale_map_f_r(rho: SphericalConfig, tau: SphericalConfig, r: float) -> ProductConfig:
    N, M = rho.dim, tau.dim
    for conf, d in ((rho, N), (tau, M)):
        if abs(conf.radius - math.sqrt(d)) > 1e-9 * math.sqrt(d):
            raise DomainError("f_r acts on S_N(sqrt N) x S_M(sqrt M)")
    new_rho, new_tau = scale_map(rho.coords, tau.coords, r)
    return ProductConfig(SphericalConfig(new_rho, eta_radius(N, M, r)), SphericalConfig(new_tau, float(r)))


def log_sphere_area(d: int, radius: float | None = None) -> float:
    """log of the (d-1)-dimensional measure of S_d(radius); radius defaults to sqrt(d)."""
    radius = math.sqrt(d) if radius is None else radius
    return math.log(2.0) + 0.5 * d * math.log(math.pi) - special.gammaln(0.5 * d) + (d - 1) * math.log(radius)


def band_interval(M: int, a: float = DEFAULT_BAND_HALF_WIDTH, N: int | None = None) -> tuple[float, float]:
    """I = [sqrt(M) - a, sqrt(M) + a] for a in (0, 1).

    With ``N`` given the upper end is clipped to sqrt(N+M), the largest value
    ||tau|| can take on S_{N+M} (relevant when N is small next to M).
    """
    if not 0 < a < 1:
        raise DomainError("band half-width a must lie in (0, 1)")
    hi = math.sqrt(M) + a
    if N is not None:
        hi = min(hi, math.sqrt(N + M))
    return max(0.0, math.sqrt(M) - a), hi


def _check_interval(N: int, M: int, interval) -> tuple[float, float]:
    lo, hi = (float(v) for v in interval)
    top = math.sqrt(N + M)
    if lo < 0 or hi < lo or hi > top * (1 + 1e-12):
        raise DomainError(f"interval {interval} is not inside [0, sqrt(N+M)]")
    return lo, min(hi, top)


def band_measure_exact(N: int, M: int, interval) -> float:
    """mu_{N+M}(||tau|| in I) from ||tau||^2 / (N+M) ~ Beta(M/2, N/2)."""
    lo, hi = _check_interval(N, M, interval)
    law = stats.beta(0.5 * M, 0.5 * N)
    return float(law.cdf(hi * hi / (N + M)) - law.cdf(lo * lo / (N + M)))


def coarea_density(N: int, M: int, r):
    """Integrand of the coarea volume identity, normalised by the area of S_{N+M}.

    sqrt(N+M)/eta(r) (eta(r)/sqrt N)^{N-1} (r/sqrt M)^{M-1} nu(S_N) nu(S_M) / nu(S_{N+M}),
    evaluated in log space.
    """
    r = np.asarray(r, dtype=float)
    eta = eta_radius(N, M, r)
    const = log_sphere_area(N) + log_sphere_area(M) - log_sphere_area(N + M) + 0.5 * math.log(N + M)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_val = (
            const
            + (N - 2) * np.log(eta)
            - 0.5 * (N - 1) * math.log(N)
            + (M - 1) * np.log(r)
            - 0.5 * (M - 1) * math.log(M)
        )
    out = np.exp(log_val)
    out = np.where(np.isfinite(out), out, 0.0) if out.ndim else (float(out) if np.isfinite(out) else 0.0)
    return out


def band_measure_numeric(N: int, M: int, interval, epsabs: float = 1e-10) -> float:
    lo, hi = _check_interval(N, M, interval)
    if hi == lo:
        return 0.0
    value, _ = integrate.quad(lambda r: coarea_density(N, M, r), lo, hi, epsabs=epsabs, epsrel=1e-12, limit=200)
    return float(value)


def band_measure(N: int, M: int, interval) -> dict[str, float]:
    """Both routes to mu_{N+M}(||tau|| in I): Beta law and coarea quadrature."""
    return {"exact": band_measure_exact(N, M, interval), "coarea_numeric": band_measure_numeric(N, M, interval)}


def band_limit(M: int, a: float = DEFAULT_BAND_HALF_WIDTH) -> float:
    """N -> infinity limit P(||W_M||^2 - M - a^2 in [-2a sqrt M, 2a sqrt M]) for Gaussian W_M."""
    lo, hi = band_interval(M, a)
    law = stats.chi2(M)
    return float(law.cdf(hi * hi) - law.cdf(lo * lo))


def tau_marginal(N: int, M: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """Last M coordinates of K uniform points on S_{N+M}.

    Uses ||g||^2 = ||g_tau||^2 + chi^2_N so the N discarded coordinates never
    have to be materialised.
    """
    g_tau = rng.standard_normal((K, M))
    rest = rng.chisquare(N, size=K) if N > 0 else np.zeros(K)
    norm = np.sqrt(np.sum(g_tau**2, axis=1) + rest)
    return g_tau * (math.sqrt(N + M) / norm)[:, None]


def poincare_check(N: int, M: int, K: int, rng: np.random.Generator, alpha: float = 0.01) -> dict[str, float]:
    """KS statistic of u . tau (u = (1,...,1)/sqrt M) against N(0, 1)."""
    if K < 1000:
        raise DomainError("K must be at least 1000")
    tau = tau_marginal(N, M, K, rng)
    proj = tau.sum(axis=1) / math.sqrt(M)
    ks = stats.kstest(proj, "norm").statistic
    return {"ks_statistic": float(ks), "threshold": float(stats.kstwo.ppf(1 - alpha, K))}
