"""Interpolation between the coupled (N+M)-dimensional field and two independent ones.

The interpolating Hamiltonian on S_N x S_M is

    H_t = sqrt(t) H_{N+M}(rho, tau) + sqrt(1 - t) (H_N(rho) + H_M(tau))
          + s_N g_N^x(rho) + s_M g_M^y(tau),

and phi(t) = E log Z_t has derivative -1/2 E <U_{N,M}>_t where U depends only
on the replica overlaps.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatch, DomainError, NonErgodicWarning, UnsupportedDimension
from .field import FieldBundle, ProductField, sample_bundle
from .free_energy import (
    CIRCLE_NODES,
    MAX_PRODUCT_NODES,
    exact_available,
    exact_log_partition,
    mc_log_partition,
    product_quadrature,
    replica_log_partitions,
)
from .mixture import DEFAULT_C, Mixture
from .sphere import ProductConfig, combine_overlaps, overlap_arrays, sample_sphere

TUNE_EVERY = 50
TARGET_ACCEPTANCE = (0.3, 0.5)


@dataclass(frozen=True, eq=False)
class InterpolationPoint:
    t: float
    bundle: FieldBundle

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise DomainError(f"t must lie in [0, 1], got {self.t}")

    @property
    def N(self) -> int:
        return self.bundle.N

    @property
    def M(self) -> int:
        return self.bundle.M

    def field(self) -> ProductField:
        return self.bundle.interpolating(self.t)


def h_t(point: InterpolationPoint, rho, tau):
    return point.field()(rho, tau)


# --- overlap functionals -----------------------------------------------------

def _complete_homogeneous(x, y, z, k_max: int) -> list[np.ndarray]:
    """[h_0, ..., h_{k_max}] of the complete homogeneous polynomials in (x, y, z).

    Built from sums and products only, so nonnegative inputs give nonnegative
    outputs in floating point as well.
    """
    x, y, z = np.broadcast_arrays(*(np.asarray(v, float) for v in (x, y, z)))
    one = np.ones_like(x)
    hz = [one]
    for _ in range(k_max):
        hz.append(hz[-1] * z)
    hyz = [one]
    for k in range(1, k_max + 1):
        hyz.append(hyz[-1] * y + hz[k])
    hxyz = [one]
    for k in range(1, k_max + 1):
        hxyz.append(hxyz[-1] * x + hyz[k])
    return hxyz


def u_from_overlaps(r1, r2, N: int, M: int, m: Mixture):
    """U_{N,M} = (N+M) xi(R) - N xi(R^1) - M xi(R^2), vectorised over overlaps.

    Evaluated through the second divided difference of xi:
    U = -(N M / (N+M)) (R^1 - R^2)^2 sum_p gamma_p^2 h_{p-2}(R^1, R, R^2),
    which is exactly zero when R^1 = R^2 and keeps its sign without
    cancellation on [0, 1].
    """
    r1 = np.asarray(r1, float)
    r2 = np.asarray(r2, float)
    if np.any(np.abs(r1) > 1 + 1e-12) or np.any(np.abs(r2) > 1 + 1e-12):
        raise DomainError("overlaps must lie in [-1, 1]")
    r = combine_overlaps(r1, r2, N, M)
    h = _complete_homogeneous(r1, r, r2, max(m.p_max - 2, 0))
    dd = np.zeros(np.broadcast(r1, r2).shape)
    for p, g in enumerate(m.coeffs, start=1):
        if p >= 2 and g > 0:
            dd = dd + g * g * h[p - 2]
    out = -(N * M / (N + M)) * (r1 - r2) ** 2 * dd
    return float(out) if out.ndim == 0 else out


def u_direct(r1, r2, N: int, M: int, m: Mixture):
    """The same functional by the literal three-term formula (used as a cross-check)."""
    r = combine_overlaps(np.asarray(r1, float), np.asarray(r2, float), N, M)
    return (N + M) * (m.xi(r) - N / (N + M) * m.xi(r1) - M / (N + M) * m.xi(r2))


def u_bound(M: int, m: Mixture) -> float:
    """|U_{N,M}| <= 2 M (xi(1) + xi'(1)) for all overlaps in [-1, 1]."""
    return 2 * M * (m.xi(1.0) + m.xi(1.0, 1))


def _pair_overlaps(pair1: ProductConfig, pair2: ProductConfig):
    if pair1.rho.dim != pair2.rho.dim or pair1.tau.dim != pair2.tau.dim:
        raise DimensionMismatch("replicas live on different spheres")
    r1, r2, _ = overlap_arrays(pair1.rho.coords, pair1.tau.coords, pair2.rho.coords, pair2.tau.coords)
    return float(np.clip(r1, -1, 1)), float(np.clip(r2, -1, 1))


def u_functional(pair1: ProductConfig, pair2: ProductConfig, N: int, M: int, m: Mixture) -> float:
    if pair1.rho.dim != N or pair1.tau.dim != M:
        raise DimensionMismatch(f"configurations are not on S_{N} x S_{M}")
    r1, r2 = _pair_overlaps(pair1, pair2)
    return u_from_overlaps(r1, r2, N, M, m)


def gap_bound(eps: float, M: int, m: Mixture) -> float:
    """2 eps M (xi'(1) + xi''(1)): how far U can exceed U+ when both overlaps are >= -eps."""
    return 2 * eps * M * (m.xi(1.0, 1) + m.xi(1.0, 2))


def u_plus_from_overlaps(r1, r2, N: int, M: int, m: Mixture):
    return u_from_overlaps(np.maximum(r1, 0.0), np.maximum(r2, 0.0), N, M, m)


def u_plus_functional(pair1: ProductConfig, pair2: ProductConfig, N: int, M: int, m: Mixture,
                      eps: float = 0.2) -> dict[str, float]:
    if pair1.rho.dim != N or pair1.tau.dim != M:
        raise DimensionMismatch(f"configurations are not on S_{N} x S_{M}")
    r1, r2 = _pair_overlaps(pair1, pair2)
    return {"u_plus": u_plus_from_overlaps(r1, r2, N, M, m), "gap_bound": gap_bound(eps, M, m)}


# --- Gibbs sampling ------------------------------------------------------------

@dataclass(frozen=True)
class MCMCParams:
    proposal_angle: float = 0.6
    burn_in: int = 500
    thin: int = 5
    chain_len: int = 2500
    n_chains: int = 8

    def __post_init__(self):
        if self.chain_len < self.burn_in + 10 * self.thin:
            raise DomainError("chain_len must be at least burn_in + 10 * thin")
        if self.n_chains < 2:
            raise DomainError("need at least two chains to form replica pairs")


@dataclass
class GibbsSampleSet:
    """Samples of shape (n_chains, n_samples, dim) for each factor."""

    rho: np.ndarray
    tau: np.ndarray
    acceptance: dict[str, float]
    chain_len: int
    burn_in: int
    thin: int
    angles: dict[str, float] = field(default_factory=dict)
    weights: np.ndarray | None = None

    @property
    def n_chains(self) -> int:
        return self.rho.shape[0]


def _propose(x: np.ndarray, angle: float, rng: np.random.Generator) -> np.ndarray:
    """Rotate each row by ``angle`` towards a uniformly random tangent direction.

    In dimension one the only move is the reflection x -> -x. Both proposals
    are symmetric, so plain Metropolis acceptance applies.
    """
    d = x.shape[1]
    if d == 1:
        return -x
    radius = math.sqrt(d)
    v = rng.standard_normal(x.shape)
    v -= (np.sum(v * x, axis=1, keepdims=True) / d) * x
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    y = math.cos(angle) * x + math.sin(angle) * radius * v
    return y * (radius / np.linalg.norm(y, axis=1, keepdims=True))


def gibbs_sample(H: ProductField, params: MCMCParams, rng: np.random.Generator) -> GibbsSampleSet:
    """Metropolis chains targeting e^H / Z against mu_N x mu_M.

    Blocks rho and tau are updated alternately. Proposal angles are tuned
    during burn-in towards 30-50% acceptance and frozen afterwards.
    """
    C = params.n_chains
    rho = sample_sphere(H.N, C, rng)
    tau = sample_sphere(H.M, C, rng)
    energy = H(rho, tau)
    angles = {"rho": params.proposal_angle, "tau": params.proposal_angle}
    window = {"rho": [0, 0], "tau": [0, 0]}
    accepted = {"rho": 0, "tau": 0}
    tried = 0
    n_keep = (params.chain_len - params.burn_in) // params.thin
    out_rho = np.empty((C, n_keep, H.N))
    out_tau = np.empty((C, n_keep, H.M))
    k = 0
    for step in range(params.chain_len):
        for name in ("rho", "tau"):
            current = rho if name == "rho" else tau
            prop = _propose(current, angles[name], rng)
            new_energy = H(prop, tau) if name == "rho" else H(rho, prop)
            accept = np.log(rng.random(C)) < new_energy - energy
            current[accept] = prop[accept]
            energy = np.where(accept, new_energy, energy)
            n_acc = int(accept.sum())
            if step < params.burn_in:
                window[name][0] += n_acc
                window[name][1] += C
            else:
                accepted[name] += n_acc
        if step >= params.burn_in:
            tried += C
        if step < params.burn_in and (step + 1) % TUNE_EVERY == 0:
            for name, dim in (("rho", H.N), ("tau", H.M)):
                acc, tot = window[name]
                window[name] = [0, 0]
                if dim == 1 or tot == 0:
                    continue
                rate = acc / tot
                if rate < TARGET_ACCEPTANCE[0]:
                    angles[name] *= 0.7
                elif rate > TARGET_ACCEPTANCE[1]:
                    angles[name] = min(math.pi / 2, angles[name] * 1.3)
        if step >= params.burn_in and (step - params.burn_in) % params.thin == params.thin - 1:
            if k < n_keep:
                out_rho[:, k] = rho
                out_tau[:, k] = tau
                k += 1
    rates = {name: accepted[name] / max(tried, 1) for name in accepted}
    for name, rate in rates.items():
        if rate < 0.01 or rate > 0.99:
            warnings.warn(f"{name} acceptance {rate:.3f} outside [0.01, 0.99]", NonErgodicWarning, stacklevel=2)
    return GibbsSampleSet(out_rho[:, :k], out_tau[:, :k], rates, params.chain_len, params.burn_in,
                          params.thin, angles)


def gibbs_exact(H: ProductField) -> GibbsSampleSet:
    """Quadrature nodes with Gibbs weights; exhaustive for N = M = 1 (four points)."""
    rho, tau, w = product_quadrature(H.N, H.M)
    logw = np.log(w) + H(rho, tau)
    weights = np.exp(logw - logsumexp(logw))
    return GibbsSampleSet(rho[None], tau[None], {"rho": 1.0, "tau": 1.0}, 0, 0, 1, weights=weights)


def gibbs_importance(H: ProductField, n_samples: int, rng: np.random.Generator,
                     n_proposals: int = 100_000, n_chains: int = 2) -> GibbsSampleSet:
    """Sampling-importance-resampling from the uniform measure, for N + M <= 6."""
    if H.N + H.M > 6:
        raise UnsupportedDimension("importance resampling is only offered for N + M <= 6")
    rho = sample_sphere(H.N, n_proposals, rng)
    tau = sample_sphere(H.M, n_proposals, rng)
    logw = H(rho, tau)
    p = np.exp(logw - logsumexp(logw))
    idx = rng.choice(n_proposals, size=(n_chains, n_samples), p=p)
    return GibbsSampleSet(rho[idx], tau[idx], {"rho": float("nan"), "tau": float("nan")}, 0, 0, 1)


def _weighted_pair_stats(samples: GibbsSampleSet, N: int, M: int, m: Mixture, eps: float | None):
    """<U>, <U+> and G(R^1 <= -eps) under the product of two replicas, for weighted node sets."""
    rho, tau, w = samples.rho[0], samples.tau[0], samples.weights
    n = len(w)
    if n * n > (1 << 24):
        raise UnsupportedDimension("weighted pair average is too large")
    r1 = np.clip(rho @ rho.T / N, -1, 1)
    r2 = np.clip(tau @ tau.T / M, -1, 1)
    ww = np.outer(w, w)
    out = {
        "U": float(np.sum(ww * u_from_overlaps(r1, r2, N, M, m))),
        "U_plus": float(np.sum(ww * u_plus_from_overlaps(r1, r2, N, M, m))),
    }
    if eps is not None:
        out["mass_neg"] = float(np.sum(ww * (r1 <= -eps)))
        out["mass_pos"] = float(np.sum(ww * (r1 >= eps)))
    return out


def _chain_pair_overlaps(samples: GibbsSampleSet, N: int, M: int):
    """Overlaps between every pair of distinct chains at equal sample index."""
    C = samples.n_chains
    r1s, r2s = [], []
    for i in range(C):
        for j in range(i + 1, C):
            r1, r2, _ = overlap_arrays(samples.rho[i], samples.tau[i], samples.rho[j], samples.tau[j])
            r1s.append(r1)
            r2s.append(r2)
    return np.clip(np.concatenate(r1s), -1, 1), np.clip(np.concatenate(r2s), -1, 1)


def pair_statistics(samples: GibbsSampleSet, N: int, M: int, m: Mixture, eps: float | None = None) -> dict:
    if samples.weights is not None:
        return _weighted_pair_stats(samples, N, M, m, eps)
    r1, r2 = _chain_pair_overlaps(samples, N, M)
    out = {
        "U": float(np.mean(u_from_overlaps(r1, r2, N, M, m))),
        "U_plus": float(np.mean(u_plus_from_overlaps(r1, r2, N, M, m))),
    }
    if eps is not None:
        out["mass_neg"] = float(np.mean(r1 <= -eps))
        out["mass_pos"] = float(np.mean(r1 >= eps))
    return out


def _gibbs_for(H: ProductField, method: str, mcmc: MCMCParams, rng: np.random.Generator) -> GibbsSampleSet:
    if method == "auto":
        method = "exact" if _exact_pairs_ok(H) else "mcmc"
    if method == "exact":
        return gibbs_exact(H)
    if method == "importance":
        n = (mcmc.chain_len - mcmc.burn_in) // mcmc.thin
        return gibbs_importance(H, n, rng, n_chains=mcmc.n_chains)
    if method == "mcmc":
        return gibbs_sample(H, mcmc, rng)
    raise DomainError(f"unknown Gibbs method {method!r}")


def exact_pairs_possible(N: int, M: int) -> bool:
    """Whether the weighted replica-pair average over quadrature nodes fits in memory."""
    size = {1: 2, 2: CIRCLE_NODES}.get(N, MAX_PRODUCT_NODES) * {1: 2, 2: CIRCLE_NODES}.get(M, MAX_PRODUCT_NODES)
    return size * size <= (1 << 24)


def _exact_pairs_ok(H: ProductField) -> bool:
    return exact_available(H) and exact_pairs_possible(H.N, H.M)


def replica_pair_averages(t: float, N: int, M: int, m: Mixture, c: float | None = DEFAULT_C,
                          n_disorder: int = 16, mcmc: MCMCParams = MCMCParams(), seed=None,
                          method: str = "auto", eps: float | None = None) -> list[dict]:
    """Per-disorder Gibbs averages of U, U+ (and overlap tails) at time t.

    Replica i draws its bundle from child stream i of ``seed``, the same child
    that :func:`phi_curve` uses, so derivative and curve estimates are paired.
    """
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    out = []
    for child in root.spawn(n_disorder):
        s_field, s_inner = child.spawn(2)
        H = sample_bundle(N, M, m, s_field, c).interpolating(t)
        samples = _gibbs_for(H, method, mcmc, np.random.default_rng(s_inner.spawn(1)[0]))
        stats = pair_statistics(samples, N, M, m, eps)
        stats["acceptance"] = samples.acceptance
        out.append(stats)
    return out


def phi_prime_ibp(t: float, N: int, M: int, m: Mixture, c: float | None = DEFAULT_C, n_disorder: int = 16,
                  mcmc: MCMCParams = MCMCParams(), seed=None, method: str = "auto") -> dict:
    """-1/2 E <U_{N,M}>_t with its standard error over disorder replicas."""
    recs = replica_pair_averages(t, N, M, m, c, n_disorder, mcmc, seed, method)
    vals = -0.5 * np.array([r["U"] for r in recs])
    return {
        "value": float(vals.mean()),
        "stderr": float(vals.std(ddof=1) / math.sqrt(len(vals))),
        "mean_U": float(np.mean([r["U"] for r in recs])),
        "mean_U_plus": float(np.mean([r["U_plus"] for r in recs])),
        "per_replica": vals,
    }


def overlap_negativity_mass(t: float, N: int, M: int, m: Mixture, eps: float = 0.2,
                            c: float | None = DEFAULT_C, n_disorder: int = 16,
                            mcmc: MCMCParams = MCMCParams(), seed=None, method: str = "auto") -> dict:
    """E G_t^{(x)2}(R^1 <= -eps), plus the mirrored mass G(R^1 >= eps) for symmetry audits."""
    if not 0.0 <= eps < 1.0:
        raise DomainError("eps must lie in [0, 1)")
    recs = replica_pair_averages(t, N, M, m, c, n_disorder, mcmc, seed, method, eps)
    neg = np.array([r["mass_neg"] for r in recs])
    pos = np.array([r["mass_pos"] for r in recs])
    se = lambda a: float(a.std(ddof=1) / math.sqrt(len(a)))  # noqa: E731
    return {"mass": float(neg.mean()), "stderr": se(neg), "mirror_mass": float(pos.mean()),
            "mirror_stderr": se(pos), "diff_stderr": se(neg - pos)}


def phi_curve(ts, N: int, M: int, m: Mixture, c: float | None = DEFAULT_C, n_disorder: int = 16,
              n_inner: int = 10_000, seed=None, method: str = "auto") -> list[dict]:
    """phi(t) = E log Z_t on a grid of t, each point over the same disorder replicas."""
    out = []
    for t in ts:
        if not 0.0 <= t <= 1.0:
            raise DomainError(f"t must lie in [0, 1], got {t}")
        recs = replica_log_partitions(lambda ss, t=t: sample_bundle(N, M, m, ss, c).interpolating(t),
                                      n_disorder, n_inner, seed, method)
        vals = np.array([r["value"] for r in recs])
        out.append({"t": float(t), "phi": float(vals.mean()),
                    "stderr": float(vals.std(ddof=1) / math.sqrt(len(vals))), "per_replica": vals})
    return out


def endpoint_check(N: int, M: int, m: Mixture, c: float | None = DEFAULT_C, n_disorder: int = 32,
                   n_inner: int = 100_000, seed=None) -> dict:
    """phi(0) against N F-bar_N + M F-bar_M and phi(1) against the decoupled free energy.

    Every comparison uses the same disorder bundles (paired seeds); each side
    draws its own inner Monte Carlo samples.
    """
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    phi0, sides, phi1, dec = [], [], [], []
    for child in root.spawn(n_disorder):
        s_field, s_inner = child.spawn(2)
        bundle = sample_bundle(N, M, m, s_field, c)
        rngs = [np.random.default_rng(s) for s in s_inner.spawn(5)]

        def logz(H, rng):
            return exact_log_partition(H) if exact_available(H) else mc_log_partition(H, n_inner, rng)["value"]

        phi0.append(logz(bundle.interpolating(0.0), rngs[0]))
        sides.append(logz(bundle.hbar_N(), rngs[1]) + logz(bundle.hbar_M(), rngs[2]))
        phi1.append(logz(bundle.interpolating(1.0), rngs[3]))
        dec.append(logz(bundle.decoupled(), rngs[4]))

    def summary(a, b):
        a, b = np.asarray(a), np.asarray(b)
        n = len(a)
        se_a, se_b = a.std(ddof=1) / math.sqrt(n), b.std(ddof=1) / math.sqrt(n)
        return {"lhs": float(a.mean()), "rhs": float(b.mean()), "diff": float(a.mean() - b.mean()),
                "combined_stderr": float(math.hypot(se_a, se_b)),
                "paired_stderr": float((a - b).std(ddof=1) / math.sqrt(n))}

    return {"phi0": summary(phi0, sides), "phi1": summary(phi1, dec)}


def exact_phi(H: ProductField) -> float:
    return exact_log_partition(H)


def derivative_identity_check(t: float, N: int, M: int, m: Mixture, c: float | None = DEFAULT_C,
                              n_disorder: int = 200, h: float = 0.05, seed=None) -> dict:
    """Central difference of exact phi against -1/2 <U>_t with the exhaustive Gibbs oracle.

    Per replica the difference FD - (-1/2 <U>) is formed on the same disorder;
    its replica mean should vanish within a few standard errors.
    """
    if not (0 < t - h and t + h < 1):
        raise DomainError("t +/- h must stay inside (0, 1)")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    fd, ibp = [], []
    for child in root.spawn(n_disorder):
        bundle = sample_bundle(N, M, m, child.spawn(1)[0], c)
        Hp, Hm, H0 = bundle.interpolating(t + h), bundle.interpolating(t - h), bundle.interpolating(t)
        if not _exact_pairs_ok(H0):
            raise UnsupportedDimension("the derivative oracle needs exhaustively enumerable spheres")
        fd.append((exact_phi(Hp) - exact_phi(Hm)) / (2 * h))
        ibp.append(-0.5 * pair_statistics(gibbs_exact(H0), N, M, m)["U"])
    fd, ibp = np.asarray(fd), np.asarray(ibp)
    diff = fd - ibp
    n = len(diff)
    return {"t": t, "fd": float(fd.mean()), "ibp": float(ibp.mean()), "diff": float(diff.mean()),
            "stderr": float(diff.std(ddof=1) / math.sqrt(n)),
            "fd_stderr": float(fd.std(ddof=1) / math.sqrt(n)), "ibp_stderr": float(ibp.std(ddof=1) / math.sqrt(n))}
