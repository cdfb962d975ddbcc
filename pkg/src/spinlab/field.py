"""Gaussian disorder: coupling tensors and the polynomial Hamiltonians built from them.

A Hamiltonian is stored as a :class:`Polynomial`, a list of ``(weight, J_p)``
terms whose value at sigma is ``sum weight * <J_p, sigma^{(x)p}>``. Couplings are
kept unsymmetrised, exactly as the ordered-tuple sum defines them; a
symmetrised copy is built lazily only for derivatives.
"""

from __future__ import annotations

import itertools
import math
import os
import struct
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from .errors import DimensionMismatch, DomainError, ResourceLimit
from .mixture import DEFAULT_C, Mixture, PerturbationParams, draw_perturbation

MEM_BUDGET_ENV = "SPINLAB_MEM_BUDGET_MB"
DEFAULT_MEM_BUDGET_MB = 2048
_CHUNK_FLOATS = 1 << 22


def memory_budget_bytes() -> int:
    raw = os.environ.get(MEM_BUDGET_ENV)
    mb = float(raw) if raw else DEFAULT_MEM_BUDGET_MB
    return int(mb * 2**20)


@dataclass(frozen=True, eq=False)
class CouplingTensors:
    """i.i.d. standard normal tensors ``tensors[p]`` of shape ``(N,) * p``."""

    N: int
    tensors: dict[int, np.ndarray]
    seed: int | None = None

    @property
    def degrees(self) -> list[int]:
        return sorted(self.tensors)

    @property
    def nbytes(self) -> int:
        return sum(t.nbytes for t in self.tensors.values())

    def __eq__(self, other):
        if not isinstance(other, CouplingTensors):
            return NotImplemented
        return (
            self.N == other.N
            and self.degrees == other.degrees
            and all(np.array_equal(self.tensors[p], other.tensors[p]) for p in self.degrees)
        )


def _check_budget(N: int, degrees) -> None:
    need = sum(8 * N**p for p in degrees)
    budget = memory_budget_bytes()
    if need > budget:
        raise ResourceLimit(
            f"couplings for N={N}, degrees={list(degrees)} need {need / 2**20:.1f} MiB "
            f"> budget {budget / 2**20:.1f} MiB (set {MEM_BUDGET_ENV})"
        )


def sample_disorder(N: int, m: Mixture | None = None, seed=None, degrees=None) -> CouplingTensors:
    """Draw couplings for every degree in ``degrees`` (default: ``m.degrees``).

    ``seed`` may be an int (recorded, reproducible), a SeedSequence or a
    Generator. Tensors are drawn in increasing degree from a single stream.
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    if degrees is None:
        if m is None:
            raise ValueError("need a mixture or explicit degrees")
        degrees = m.degrees
    degrees = sorted(int(p) for p in degrees)
    _check_budget(N, degrees)
    recorded = int(seed) if isinstance(seed, (int, np.integer)) else None
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    tensors = {p: rng.standard_normal(N**p).reshape((N,) * p) for p in degrees}
    return CouplingTensors(N, tensors, recorded)


_MAGIC = b"SPLT"


def dump_couplings(J: CouplingTensors, fh: BinaryIO) -> None:
    """Write ``J`` as header (N, degrees, seed) plus little-endian float64 payload."""
    degrees = J.degrees
    has_seed = J.seed is not None
    fh.write(_MAGIC)
    fh.write(struct.pack("<IIIBQ", 1, J.N, len(degrees), int(has_seed), (J.seed or 0) & (2**64 - 1)))
    fh.write(struct.pack(f"<{len(degrees)}I", *degrees))
    for p in degrees:
        fh.write(np.ascontiguousarray(J.tensors[p], dtype="<f8").tobytes(order="C"))


def load_couplings(fh: BinaryIO) -> CouplingTensors:
    if fh.read(4) != _MAGIC:
        raise ValueError("not a spinlab coupling dump")
    version, N, n_deg, has_seed, seed = struct.unpack("<IIIBQ", fh.read(struct.calcsize("<IIIBQ")))
    if version != 1:
        raise ValueError(f"unsupported dump version {version}")
    degrees = struct.unpack(f"<{n_deg}I", fh.read(4 * n_deg))
    tensors = {}
    for p in degrees:
        count = N**p
        data = np.frombuffer(fh.read(8 * count), dtype="<f8", count=count)
        tensors[p] = data.astype(float).reshape((N,) * p)
    return CouplingTensors(N, tensors, seed if has_seed else None)


def _symmetrize(T: np.ndarray) -> np.ndarray:
    if T.ndim < 2:
        return T
    perms = list(itertools.permutations(range(T.ndim)))
    return sum(np.transpose(T, perm) for perm in perms) / len(perms)


def _full_contract(T: np.ndarray, X: np.ndarray) -> np.ndarray:
    """<T, x^{(x)p}> for every row x of X (shape (K, N))."""
    N = X.shape[1]
    out = T.reshape(-1, N) @ X.T
    for _ in range(T.ndim - 1):
        out = out.reshape(-1, N, X.shape[0])
        out = np.einsum("ank,kn->ak", out, X)
    return out.reshape(X.shape[0])


def _partial_contract(T: np.ndarray, x: np.ndarray, times: int) -> np.ndarray:
    out = T
    for _ in range(times):
        out = out @ x
    return out


@dataclass(eq=False)
class Polynomial:
    """A finite sum of weighted homogeneous tensor contractions on R^dim."""

    dim: int
    terms: list[tuple[float, np.ndarray]]
    _sym: list[np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        for _, T in self.terms:
            if any(s != self.dim for s in T.shape):
                raise DimensionMismatch(f"tensor of shape {T.shape} in a dim-{self.dim} polynomial")

    def _as_batch(self, sigma) -> tuple[np.ndarray, bool]:
        X = np.asarray(sigma, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[-1] != self.dim:
            raise DimensionMismatch(f"expected vectors of length {self.dim}, got {X.shape[-1]}")
        return X, single

    def __call__(self, sigma):
        X, single = self._as_batch(sigma)
        out = np.zeros(X.shape[0])
        for w, T in self.terms:
            if w == 0:
                continue
            chunk = max(1, _CHUNK_FLOATS // max(1, self.dim ** (T.ndim - 1)))
            for start in range(0, X.shape[0], chunk):
                out[start : start + chunk] += w * _full_contract(T, X[start : start + chunk])
        return float(out[0]) if single else out

    def __add__(self, other: Polynomial) -> Polynomial:
        if other.dim != self.dim:
            raise DimensionMismatch(f"cannot add dim {self.dim} and dim {other.dim} fields")
        return Polynomial(self.dim, self.terms + other.terms)

    def scaled(self, factor: float) -> Polynomial:
        return Polynomial(self.dim, [(factor * w, T) for w, T in self.terms])

    def _symmetrized(self) -> list[np.ndarray]:
        if self._sym is None:
            self._sym = [_symmetrize(T) for _, T in self.terms]
        return self._sym

    def gradient(self, sigma) -> np.ndarray:
        """Euclidean gradient at one point (N,) or a batch (K, N)."""
        X, single = self._as_batch(sigma)
        out = np.zeros_like(X)
        for (w, T), S in zip(self.terms, self._symmetrized()):
            p = T.ndim
            if w == 0:
                continue
            if p == 1:
                out += w * S
                continue
            part = S.reshape(-1, self.dim) @ X.T
            for _ in range(p - 2):
                part = np.einsum("ank,kn->ak", part.reshape(-1, self.dim, X.shape[0]), X)
            out += w * p * part.T
        return out[0] if single else out

    def hessian(self, sigma) -> np.ndarray:
        x = np.asarray(sigma, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"expected a vector of length {self.dim}")
        out = np.zeros((self.dim, self.dim))
        for (w, T), S in zip(self.terms, self._symmetrized()):
            p = T.ndim
            if w != 0 and p >= 2:
                out += w * p * (p - 1) * _partial_contract(S, x, p - 2)
        return out

    def directional_second(self, sigma, u) -> float:
        u = np.asarray(u, dtype=float)
        if abs(np.linalg.norm(u) - 1.0) > 1e-12:
            raise DomainError("direction must be a unit vector")
        return float(u @ self.hessian(sigma) @ u)

    def third_contract(self, sigma, u) -> np.ndarray:
        """The vector D^3 H(sigma)[u, u, .]."""
        x = np.asarray(sigma, dtype=float)
        u = np.asarray(u, dtype=float)
        out = np.zeros(self.dim)
        for (w, T), S in zip(self.terms, self._symmetrized()):
            p = T.ndim
            if w != 0 and p >= 3:
                A = _partial_contract(S, x, p - 3)
                out += w * p * (p - 1) * (p - 2) * ((A @ u) @ u)
        return out


def hamiltonian(J: CouplingTensors, m: Mixture) -> Polynomial:
    """H_N with weights gamma_p N^{-(p-1)/2} over the degrees present in ``m``."""
    terms = []
    for p in m.degrees:
        if p not in J.tensors:
            raise DimensionMismatch(f"couplings lack degree {p}")
        terms.append((m.gamma(p) * J.N ** (-(p - 1) / 2), J.tensors[p]))
    return Polynomial(J.N, terms)


def perturbation(J: CouplingTensors, pert: PerturbationParams) -> Polynomial:
    """s_N g_N^x with g_{N,p} = N^{-1/2} H_{N,p} realised by independent couplings."""
    N = J.N
    s = pert.s(N)
    terms = []
    for p, x_p in enumerate(pert.x, start=1):
        terms.append((s * 2.0**-p * x_p * N ** (-p / 2), J.tensors[p]))
    return Polynomial(N, terms)


def perturbed_hamiltonian(J: CouplingTensors, J_pert: CouplingTensors | None, m: Mixture,
                          pert: PerturbationParams | None) -> Polynomial:
    H = hamiltonian(J, m)
    if pert is None or J_pert is None:
        return H
    if J_pert.N != J.N:
        raise DimensionMismatch("perturbation couplings have the wrong dimension")
    return H + perturbation(J_pert, pert)


def evaluate_hamiltonian(J: CouplingTensors, m: Mixture, sigma):
    return hamiltonian(J, m)(sigma)


def evaluate_gradient(J: CouplingTensors, m: Mixture, sigma) -> np.ndarray:
    return hamiltonian(J, m).gradient(sigma)


def directional_second(J: CouplingTensors, m: Mixture, sigma, u) -> float:
    return hamiltonian(J, m).directional_second(sigma, u)


@dataclass(eq=False)
class ProductField:
    """A Hamiltonian on S_N x S_M: joint(rho, tau) + left(rho) + right(tau)."""

    N: int
    M: int
    joint: Polynomial | None = None
    left: Polynomial | None = None
    right: Polynomial | None = None

    def __call__(self, rho, tau):
        rho = np.asarray(rho, dtype=float)
        tau = np.asarray(tau, dtype=float)
        if rho.shape[-1] != self.N or tau.shape[-1] != self.M:
            raise DimensionMismatch(f"expected ({self.N}, {self.M}) blocks, got {rho.shape}, {tau.shape}")
        single = rho.ndim == 1
        R, T = np.atleast_2d(rho), np.atleast_2d(tau)
        out = np.zeros(R.shape[0])
        if self.joint is not None:
            out += self.joint(np.concatenate([R, T], axis=1))
        if self.left is not None:
            out += self.left(R)
        if self.right is not None:
            out += self.right(T)
        return float(out[0]) if single else out


@dataclass(frozen=True, eq=False)
class FieldBundle:
    """Joint disorder of the product-sphere constructions.

    ``main`` drives H_{N+M}; ``sub_N`` and ``sub_M`` drive the independent H_N
    and H_M; ``pert_main``, ``pert_N``, ``pert_M`` are the perturbation
    couplings in dimensions N+M, N and M. ``x`` weights the N-side and the
    (N+M)-dimensional perturbations, ``y`` the M-side one. Every component comes
    from its own spawned stream.
    """

    N: int
    M: int
    mixture: Mixture
    main: CouplingTensors
    sub_N: CouplingTensors
    sub_M: CouplingTensors
    pert_main: CouplingTensors | None = None
    pert_N: CouplingTensors | None = None
    pert_M: CouplingTensors | None = None
    x: PerturbationParams | None = None
    y: PerturbationParams | None = None

    @property
    def perturbed(self) -> bool:
        return self.x is not None

    def h_main(self) -> Polynomial:
        return hamiltonian(self.main, self.mixture)

    def hbar_main(self) -> Polynomial:
        """H-bar_{N+M} = H_{N+M} + s_{N+M} g^x_{N+M} on R^{N+M}."""
        return perturbed_hamiltonian(self.main, self.pert_main, self.mixture, self.x)

    def hbar_N(self) -> Polynomial:
        return perturbed_hamiltonian(self.sub_N, self.pert_N, self.mixture, self.x)

    def hbar_M(self) -> Polynomial:
        return perturbed_hamiltonian(self.sub_M, self.pert_M, self.mixture, self.y)

    def _side_perturbations(self) -> tuple[Polynomial | None, Polynomial | None]:
        if not self.perturbed:
            return None, None
        return perturbation(self.pert_N, self.x), perturbation(self.pert_M, self.y)

    def restricted(self) -> ProductField:
        return ProductField(self.N, self.M, joint=self.hbar_main())

    def decoupled(self) -> ProductField:
        """H-tilde^{x,y}_{N,M}(rho, tau) = H_{N+M} + s_N g_N^x(rho) + s_M g_M^y(tau)."""
        left, right = self._side_perturbations()
        return ProductField(self.N, self.M, joint=self.h_main(), left=left, right=right)

    def interpolating(self, t: float) -> ProductField:
        """sqrt(t) H_{N+M} + sqrt(1-t) (H_N + H_M) + s_N g_N^x + s_M g_M^y."""
        if not 0.0 <= t <= 1.0:
            raise DomainError(f"t must lie in [0, 1], got {t}")
        a, b = math.sqrt(t), math.sqrt(1.0 - t)
        left = hamiltonian(self.sub_N, self.mixture).scaled(b)
        right = hamiltonian(self.sub_M, self.mixture).scaled(b)
        pl, pr = self._side_perturbations()
        if pl is not None:
            left, right = left + pl, right + pr
        joint = self.h_main().scaled(a)
        return ProductField(
            self.N,
            self.M,
            joint=joint if a > 0 else None,
            left=left,
            right=right,
        )


def sample_bundle(N: int, M: int, m: Mixture, seed=None, c: float | None = DEFAULT_C) -> FieldBundle:
    """Draw a FieldBundle; ``c=None`` switches the perturbation off entirely."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_params, s_main, s_n, s_m, s_pmain, s_pn, s_pm = ss.spawn(7)
    main = sample_disorder(N + M, m, s_main)
    sub_N = sample_disorder(N, m, s_n)
    sub_M = sample_disorder(M, m, s_m)
    if c is None:
        return FieldBundle(N, M, m, main, sub_N, sub_M)
    rng = np.random.default_rng(s_params)
    x = draw_perturbation(m.p_max, rng, c)
    y = draw_perturbation(m.p_max, rng, c)
    degrees = range(1, m.p_max + 1)
    return FieldBundle(
        N, M, m, main, sub_N, sub_M,
        pert_main=sample_disorder(N + M, seed=s_pmain, degrees=degrees),
        pert_N=sample_disorder(N, seed=s_pn, degrees=degrees),
        pert_M=sample_disorder(M, seed=s_pm, degrees=degrees),
        x=x, y=y,
    )


def sample_perturbed(N: int, m: Mixture, seed=None, c: float | None = DEFAULT_C
                     ) -> tuple[Polynomial, Polynomial, PerturbationParams | None]:
    """Paired (H_N, H-bar_N, x) sharing the same H_N couplings."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_params, s_main, s_pert = ss.spawn(3)
    J = sample_disorder(N, m, s_main)
    H = hamiltonian(J, m)
    if c is None:
        return H, H, None
    x = draw_perturbation(m.p_max, np.random.default_rng(s_params), c)
    J_pert = sample_disorder(N, seed=s_pert, degrees=range(1, m.p_max + 1))
    return H, H + perturbation(J_pert, x), x


def perturbed_evaluate(bundle: FieldBundle, m: Mixture, sigma, N: int | None = None):
    """H-bar on the bundle's (N+M)-dimensional field at ``sigma``."""
    if m != bundle.mixture:
        raise ValueError("mixture does not match the bundle")
    if N is not None and N != bundle.N + bundle.M:
        raise DimensionMismatch(f"bundle main dimension is {bundle.N + bundle.M}, not {N}")
    return bundle.hbar_main()(sigma)


def decoupled_evaluate(bundle: FieldBundle, m: Mixture, rho, tau):
    if m != bundle.mixture:
        raise ValueError("mixture does not match the bundle")
    return bundle.decoupled()(rho, tau)


def covariance_check(N: int, m: Mixture, sigma, sigma_prime, K: int, seed=None) -> dict:
    """Empirical E H(sigma) H(sigma') over K disorder draws against N xi(R).

    ``sigma`` and ``sigma_prime`` may be single vectors or stacks of P vectors;
    the returned arrays then have length P.
    """
    if K < 100:
        raise DomainError("K must be at least 100")
    A = np.atleast_2d(np.asarray(sigma, dtype=float))
    B = np.atleast_2d(np.asarray(sigma_prime, dtype=float))
    if A.shape != B.shape or A.shape[1] != N:
        raise DimensionMismatch("configurations must both be (P, N)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    points = np.concatenate([A, B])
    P = A.shape[0]
    vals = np.empty((K, 2 * P))
    for k in range(K):
        vals[k] = hamiltonian(sample_disorder(N, m, rng), m)(points)
    X, Y = vals[:, :P], vals[:, P:]
    prod = (X - X.mean(0)) * (Y - Y.mean(0))
    empirical = prod.sum(0) / (K - 1)
    stderr = prod.std(0, ddof=1) / math.sqrt(K)
    R = np.clip(np.einsum("pn,pn->p", A, B) / N, -1.0, 1.0)
    theory = N * m.xi(R)
    out = {"empirical": empirical, "theory": np.asarray(theory), "stderr": stderr}
    if np.asarray(sigma).ndim == 1:
        out = {k: float(v[0]) for k, v in out.items()}
    return out
