"""Level-set bands ||tau|| = r of S_{N+M}: band integrals, D+/D- split, Lipschitz probes.

Band integrals are normalised per unit product measure, i.e. divided by
nu_N(S_N(eta(r))) nu_M(S_M(r)); the raw Hausdorff integrals differ from them
only by the volume factors of the coarea identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError
from .field import Polynomial
from .sphere import eta_radius, sample_sphere, scale_map

PROBE_METHODS = ("random", "gradient_ascent_polish")


def radial_derivative(H: Polynomial, rho, tau) -> np.ndarray:
    """d/ds H(rho, tau + s tau/||tau||) at s = 0, batched over rows."""
    rho = np.atleast_2d(np.asarray(rho, float))
    tau = np.atleast_2d(np.asarray(tau, float))
    if rho.shape[1] + tau.shape[1] != H.dim:
        raise DimensionMismatch(f"({rho.shape[1]}, {tau.shape[1]}) blocks do not match a dim-{H.dim} field")
    N = rho.shape[1]
    grad = H.gradient(np.concatenate([rho, tau], axis=1))
    unit = tau / np.linalg.norm(tau, axis=1, keepdims=True)
    return np.sum(grad[:, N:] * unit, axis=1)


def in_plus(H: Polynomial, rho, tau) -> np.ndarray:
    """Membership in D+ (ties, a null event, go to D+)."""
    return radial_derivative(H, rho, tau) >= 0


def d_split_membership(H: Polynomial, rho, tau) -> str:
    return "plus" if bool(in_plus(H, rho, tau)[0]) else "minus"


def x_band_integrals(H: Polynomial, N: int, M: int, r: float, n_inner: int, rng: np.random.Generator) -> dict:
    """Normalised X(r), X+(r), X-(r) from one shared uniform sample.

    Points (rho, tau) ~ mu_N x mu_M are pushed through f_r and weighted by
    e^{H(f_r(rho, tau))}; membership is decided at the pre-image. X is defined
    as X+ + X- so the split is exact.
    """
    if H.dim != N + M:
        raise DimensionMismatch(f"field has dim {H.dim}, expected {N + M}")
    if not 0 < r < math.sqrt(N + M):
        raise DomainError("r must lie in (0, sqrt(N+M))")
    rho = sample_sphere(N, n_inner, rng)
    tau = sample_sphere(M, n_inner, rng)
    plus = in_plus(H, rho, tau)
    mrho, mtau = scale_map(rho, tau, r)
    h = H(np.concatenate([mrho, mtau], axis=1))
    top = h.max()
    w = np.exp(h - top)
    scale = math.exp(top)
    out = {}
    for name, mask in (("plus", plus), ("minus", ~plus)):
        x = w * mask
        out[name] = {"value": scale * x.mean(), "stderr": scale * x.std(ddof=1) / math.sqrt(n_inner)}
    out["all"] = {
        "value": out["plus"]["value"] + out["minus"]["value"],
        "stderr": scale * w.std(ddof=1) / math.sqrt(n_inner),
    }
    out["plus_fraction"] = float(plus.mean())
    return out


def x_band_integral(H: Polynomial, N: int, M: int, r: float, side: str = "all", n_inner: int = 10_000,
                    rng: np.random.Generator | None = None) -> dict[str, float]:
    if side not in ("all", "plus", "minus"):
        raise DomainError(f"side must be all, plus or minus, got {side!r}")
    rng = rng if rng is not None else np.random.default_rng()
    return x_band_integrals(H, N, M, r, n_inner, rng)[side]


@dataclass(frozen=True)
class LipschitzEstimates:
    """Probe maxima of ||grad H|| and of |u^T Hess H u| over a ball.

    Both are lower bounds on the true maxima; ``radius`` is the ball probed.
    """

    l1: float
    l2: float
    n_probes: int
    probe_method: str
    radius: float
    dim: int

    @property
    def l1_normalized(self) -> float:
        return self.l1 / math.sqrt(self.dim)


def _project(x: np.ndarray, radius: float) -> np.ndarray:
    n = np.linalg.norm(x)
    return x if n <= radius else x * (radius / n)


def _spectral(H: Polynomial, x: np.ndarray) -> tuple[float, np.ndarray]:
    vals, vecs = np.linalg.eigh(H.hessian(x))
    i = int(np.argmax(np.abs(vals)))
    return float(abs(vals[i])), vecs[:, i] * (1.0 if vals[i] >= 0 else -1.0)


def _ascend(f, grad, x0: np.ndarray, radius: float, steps: int) -> float:
    """Projected ascent with shrinking steps; returns the best value seen."""
    x, best = x0, f(x0)
    step = 0.25 * radius
    for _ in range(steps):
        g = grad(x)
        norm = np.linalg.norm(g)
        if norm == 0:
            break
        cand = _project(x + step * g / norm, radius)
        val = f(cand)
        if val > best:
            x, best = cand, val
        else:
            step *= 0.5
    return best


def lipschitz_estimates(H: Polynomial, n_probes: int, rng: np.random.Generator, radius: float | None = None,
                        probe_method: str = "gradient_ascent_polish", polish_steps: int = 25) -> LipschitzEstimates:
    """Maximise ||grad H|| and the Hessian spectral norm over probe points in a ball.

    Probe i always consumes the same draws from ``rng`` and polishing is
    deterministic, so adding probes can only raise the maxima.
    """
    if n_probes < 1:
        raise DomainError("n_probes must be positive")
    if probe_method not in PROBE_METHODS:
        raise DomainError(f"probe_method must be one of {PROBE_METHODS}")
    d = H.dim
    radius = math.sqrt(d) if radius is None else float(radius)

    def grad_norm(x):
        return float(np.linalg.norm(H.gradient(x)))

    def grad_norm_ascent(x):
        return H.hessian(x) @ H.gradient(x)

    def hess_norm(x):
        return _spectral(H, x)[0]

    def hess_norm_ascent(x):
        _, v = _spectral(H, x)
        return H.third_contract(x, v)

    l1 = l2 = 0.0
    for _ in range(n_probes):
        g = rng.standard_normal(d)
        u = rng.random()
        x = g / np.linalg.norm(g) * radius * u ** (1.0 / d)
        # the extreme values of a polynomial field sit on the boundary most of the time
        xb = g / np.linalg.norm(g) * radius
        for start in (x, xb):
            if probe_method == "random":
                l1 = max(l1, grad_norm(start))
                l2 = max(l2, hess_norm(start))
            else:
                l1 = max(l1, _ascend(grad_norm, grad_norm_ascent, start, radius, polish_steps))
                l2 = max(l2, _ascend(hess_norm, hess_norm_ascent, start, radius, polish_steps))
    return LipschitzEstimates(l1, l2, n_probes, probe_method, radius, d)


def lemma_radius(N: int, M: int, r: float) -> float:
    """Radius of a ball containing both Taylor segments from (rho, tau) to f_r(rho, tau)."""
    return math.sqrt(N + max(r * r, M))


def lemma_estimate_check(H: Polynomial, N: int, M: int, r: float, n_pairs: int, rng: np.random.Generator,
                         estimates: LipschitzEstimates | None = None, n_probes: int = 200,
                         refine_rounds: int = 2) -> dict:
    """Pointwise audit of H(f_r(x)) >= H(x) - l1 |eta(r) - sqrt N| - l2 |r - sqrt M|^2.

    Checked on sampled x in D+ when r >= sqrt(M) and in D- when r < sqrt(M).
    Violations mean the probe constants were too small; with no supplied
    ``estimates`` the probes are doubled up to ``refine_rounds`` times.
    """
    if H.dim != N + M:
        raise DimensionMismatch(f"field has dim {H.dim}, expected {N + M}")
    side_plus = r >= math.sqrt(M)
    rho = sample_sphere(N, n_pairs, rng)
    tau = sample_sphere(M, n_pairs, rng)
    keep = in_plus(H, rho, tau) == side_plus
    rho, tau = rho[keep], tau[keep]
    base = H(np.concatenate([rho, tau], axis=1)) if len(rho) else np.zeros(0)
    if r == math.sqrt(M):
        mapped = base
    else:
        mrho, mtau = scale_map(rho, tau, r)
        mapped = H(np.concatenate([mrho, mtau], axis=1)) if len(rho) else np.zeros(0)
    d_rho = abs(eta_radius(N, M, r) - math.sqrt(N))
    d_tau = (r - math.sqrt(M)) ** 2
    tol = 1e-12 * (1.0 + np.abs(base))
    supplied = estimates is not None
    probes = n_probes
    rounds = 0
    while True:
        if not supplied:
            estimates = lipschitz_estimates(H, probes, rng, radius=lemma_radius(N, M, r))
        bound = base - estimates.l1 * d_rho - estimates.l2 * d_tau
        violations = int(np.sum(mapped < bound - tol))
        if violations == 0 or supplied or rounds >= refine_rounds:
            break
        probes *= 2
        rounds += 1
    return {"violations": violations, "checked": int(len(base)), "l1": estimates.l1, "l2": estimates.l2,
            "side": "plus" if side_plus else "minus", "n_probes": estimates.n_probes}
