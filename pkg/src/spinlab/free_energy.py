"""Quenched free energies: deterministic quadrature oracles for tiny N and plain Monte Carlo."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, UnsupportedDimension
from .field import Polynomial, ProductField, sample_bundle, sample_perturbed
from .mixture import DEFAULT_C, Mixture, eta_x
from .seeding import seed_sequence
from .sphere import sample_sphere

CIRCLE_NODES = 4096
SPHERE_POLAR_NODES = 256
SPHERE_AZIMUTH_NODES = 512
MAX_PRODUCT_NODES = 1 << 16
_MC_CHUNK = 1 << 14

Field = Polynomial | ProductField


def sphere_quadrature(N: int, refine: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Nodes on S_N(sqrt N) and weights summing to one, for N in {1, 2, 3}.

    N=1 is the two-point sphere, N=2 a periodic trapezoid rule on the circle,
    N=3 Gauss-Legendre in cos(theta) times a uniform azimuth grid. ``refine``
    scales the node counts (0.5 halves them, for convergence studies).
    """
    if N == 1:
        return np.array([[1.0], [-1.0]]), np.array([0.5, 0.5])
    if N == 2:
        n = int(CIRCLE_NODES * refine)
        theta = 2 * np.pi * np.arange(n) / n
        pts = math.sqrt(2) * np.column_stack([np.cos(theta), np.sin(theta)])
        return pts, np.full(n, 1.0 / n)
    if N == 3:
        n_pol = int(SPHERE_POLAR_NODES * refine)
        n_az = int(SPHERE_AZIMUTH_NODES * refine)
        z, wz = np.polynomial.legendre.leggauss(n_pol)
        phi = 2 * np.pi * np.arange(n_az) / n_az
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        s = np.sqrt(1 - zz**2)
        pts = math.sqrt(3) * np.column_stack([(s * np.cos(pp)).ravel(), (s * np.sin(pp)).ravel(), zz.ravel()])
        w = np.repeat(wz / 2.0, n_az) / n_az
        return pts, w
    raise UnsupportedDimension(f"no quadrature oracle for N={N} (only 1, 2, 3)")


def product_quadrature(N: int, M: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rp, rw = sphere_quadrature(N)
    tp, tw = sphere_quadrature(M)
    if len(rw) * len(tw) > MAX_PRODUCT_NODES:
        raise UnsupportedDimension(f"product grid for ({N}, {M}) is too large for the exact oracle")
    rho = np.repeat(rp, len(tw), axis=0)
    tau = np.tile(tp, (len(rw), 1))
    return rho, tau, np.outer(rw, tw).ravel()


def exact_available(H: Field) -> bool:
    if isinstance(H, ProductField):
        return H.N <= 3 and H.M <= 3 and _grid_size(H.N) * _grid_size(H.M) <= MAX_PRODUCT_NODES
    return H.dim <= 3


def _grid_size(N: int) -> int:
    return {1: 2, 2: CIRCLE_NODES, 3: SPHERE_POLAR_NODES * SPHERE_AZIMUTH_NODES}.get(N, 1 << 62)


def exact_log_partition(H: Field, refine: float = 1.0) -> float:
    """log of the integral of e^H against the uniform (product) measure, by quadrature."""
    if isinstance(H, ProductField):
        rho, tau, w = product_quadrature(H.N, H.M)
        return float(logsumexp(H(rho, tau), b=w))
    pts, w = sphere_quadrature(H.dim, refine)
    return float(logsumexp(H(pts), b=w))


def _uniform_values(H: Field, n: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty(n)
    for start in range(0, n, _MC_CHUNK):
        k = min(_MC_CHUNK, n - start)
        if isinstance(H, ProductField):
            out[start : start + k] = H(sample_sphere(H.N, k, rng), sample_sphere(H.M, k, rng))
        else:
            out[start : start + k] = H(sample_sphere(H.dim, k, rng))
    return out


def log_mean_exp(values: np.ndarray) -> dict[str, float]:
    """log of the sample mean of e^values, with delta-method stderr and jackknife bias."""
    h = np.asarray(values, dtype=float)
    n = h.size
    top = h.max()
    w = np.exp(h - top)
    total = w.sum()
    value = top + math.log(total / n)
    stderr = float(w.std(ddof=1) / (math.sqrt(n) * w.mean())) if n > 1 else float("inf")
    others = total - w
    i = int(np.argmax(w))
    others[i] = np.delete(w, i).sum()
    with np.errstate(divide="ignore"):
        loo = top + np.log(others / (n - 1))
    bias = float((n - 1) * (loo.mean() - value)) if np.all(np.isfinite(loo)) else float("nan")
    return {"value": float(value), "stderr": stderr, "bias": bias}


def mc_log_partition(H: Field, n_inner: int, rng: np.random.Generator) -> dict[str, float]:
    """Plain Monte Carlo log-mean-exp over uniform samples.

    The estimator is biased low (Jensen); ``bias`` is the jackknife estimate of
    that bias and is reported, not subtracted.
    """
    if n_inner < 100:
        raise DomainError("n_inner must be at least 100")
    return log_mean_exp(_uniform_values(H, n_inner, rng))


@dataclass
class FreeEnergyEstimate:
    """Disorder-averaged free energy; ``value`` is per site, ``total`` = N * value."""

    value: float
    total: float
    stderr: float
    n_disorder: int
    n_inner: int
    seed: int | None
    method: str
    N: int
    inner_bias: float = 0.0
    records: list[tuple[int, float, str]] = field(default_factory=list, repr=False)

    @property
    def total_stderr(self) -> float:
        return self.N * self.stderr


def _replica_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, np.uint64)[0])


def replica_log_partitions(make_field: Callable[[np.random.SeedSequence], Field], n_disorder: int,
                           n_inner: int, seed, method: str = "auto", workers: int = 1,
                           ) -> list[dict]:
    """log Z for each disorder replica; replica i always uses child stream i of ``seed``."""
    if method not in ("auto", "exact", "mc"):
        raise DomainError(f"unknown method {method!r}")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(n_disorder)

    def one(child: np.random.SeedSequence) -> dict:
        s_field, s_inner = child.spawn(2)
        H = make_field(s_field)
        use_exact = method == "exact" or (method == "auto" and exact_available(H))
        if use_exact:
            res = {"value": exact_log_partition(H), "stderr": 0.0, "bias": 0.0, "method": "exact_quadrature"}
        else:
            res = dict(mc_log_partition(H, n_inner, np.random.default_rng(s_inner)), method="plain_mc")
        res["seed"] = _replica_seed(child)
        return res

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, children))
    return [one(c) for c in children]


def _summarise(records: list[dict], N: int, n_inner: int, seed) -> FreeEnergyEstimate:
    logz = np.array([r["value"] for r in records])
    n = len(logz)
    total = float(np.mean(logz))
    total_se = float(logz.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    methods = {r["method"] for r in records}
    bias = float(np.mean([r["bias"] for r in records]))
    return FreeEnergyEstimate(
        value=total / N,
        total=total,
        stderr=total_se / N,
        n_disorder=n,
        n_inner=n_inner,
        seed=int(seed) if isinstance(seed, (int, np.integer)) else None,
        method=methods.pop() if len(methods) == 1 else "mixed",
        N=N,
        inner_bias=bias,
        records=[(r["seed"], r["value"], r["method"]) for r in records],
    )


def quenched_free_energy(N: int, m: Mixture, c: float | None = None, n_disorder: int = 32,
                         n_inner: int = 10_000, seed=None, method: str = "auto", workers: int = 1,
                         ) -> FreeEnergyEstimate:
    """F_N (``c=None``) or the perturbed F-bar_N (exponent ``c``), per site.

    Fresh x_p are drawn with each disorder replica when perturbed.
    """
    if n_disorder < 8:
        raise DomainError("n_disorder must be at least 8")

    def make(ss):
        _, Hbar, _ = sample_perturbed(N, m, ss, c)
        return Hbar

    recs = replica_log_partitions(make, n_disorder, n_inner, seed, method, workers)
    return _summarise(recs, N, n_inner, seed)


def product_free_energy(N: int, M: int, m: Mixture, c: float | None = DEFAULT_C,
                        mode: str = "restricted_Hbar", n_disorder: int = 32, n_inner: int = 10_000,
                        seed=None, method: str = "auto", workers: int = 1) -> FreeEnergyEstimate:
    """E log of the integral over mu_N x mu_M of e^{H-bar_{N+M}} or e^{H-tilde}.

    The returned ``value`` is normalised by N+M; ``total`` is the unnormalised
    expectation.
    """
    if mode not in ("restricted_Hbar", "decoupled_Htilde"):
        raise DomainError(f"unknown mode {mode!r}")

    def make(ss):
        bundle = sample_bundle(N, M, m, ss, c)
        return bundle.restricted() if mode == "restricted_Hbar" else bundle.decoupled()

    recs = replica_log_partitions(make, n_disorder, n_inner, seed, method, workers)
    return _summarise(recs, N + M, n_inner, seed)


def superadditivity_defect(N: int, M: int, m: Mixture, c: float | None = DEFAULT_C,
                           n_disorder: int = 32, n_inner: int = 10_000, seed: int = 0,
                           workers: int = 1) -> dict:
    """(N+M) F-bar_{N+M} - N F-bar_N - M F-bar_M with a combined standard error.

    The three free energies use independent streams keyed by dimension; when
    N == M the single F-bar_N estimate is reused, so its error counts twice.
    """
    est = {}
    for d in sorted({N, M, N + M}):
        est[d] = quenched_free_energy(d, m, c, n_disorder, n_inner, seed_sequence(seed, "superadd", d),
                                      workers=workers)
    big, a, b = est[N + M], est[N], est[M]
    defect = big.total - a.total - b.total
    if N == M:
        var = big.total_stderr**2 + (2 * a.total_stderr) ** 2
    else:
        var = big.total_stderr**2 + a.total_stderr**2 + b.total_stderr**2
    return {"defect": defect, "stderr": math.sqrt(var), "estimates": est}


def perturbation_gap(N: int, m: Mixture, c: float = DEFAULT_C, n_disorder: int = 32, n_inner: int = 10_000,
                     seed=None) -> dict:
    """Paired estimate of F-bar_N - F_N.

    Each replica evaluates H_N and H-bar_N (same H_N couplings) on the same
    uniform samples, so most inner and disorder noise cancels in the
    difference. ``eta_over_n`` is the replica mean of eta_N^x(1)/N.
    """
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    diffs, plain, pert, etas = [], [], [], []
    for child in root.spawn(n_disorder):
        s_field, s_inner = child.spawn(2)
        H, Hbar, x = sample_perturbed(N, m, s_field, c)
        if N <= 3:
            a, b = exact_log_partition(H), exact_log_partition(Hbar)
        else:
            rng = np.random.default_rng(s_inner)
            pts = sample_sphere(N, n_inner, rng)
            a, b = log_mean_exp(H(pts))["value"], log_mean_exp(Hbar(pts))["value"]
        plain.append(a)
        pert.append(b)
        diffs.append(b - a)
        etas.append(eta_x(x, N, 1.0) / N)
    diffs = np.asarray(diffs) / N
    return {
        "gap": float(diffs.mean()),
        "stderr": float(diffs.std(ddof=1) / math.sqrt(n_disorder)),
        "abs_gap": float(abs(diffs.mean())),
        "eta_over_n": float(np.mean(etas)),
        "F": float(np.mean(plain)) / N,
        "F_bar": float(np.mean(pert)) / N,
    }
