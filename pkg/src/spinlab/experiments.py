"""The batch experiments behind each CLI subcommand.

Every experiment splits its work into cells, gives each cell its own stream
derived from ``(seed, "<name>/<subcommand>", cell index)`` and returns rows in
cell order, so the output does not depend on the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import bands, free_energy, interpolation, sphere
from .config import ExperimentConfig
from .field import covariance_check, sample_bundle, sample_perturbed
from .seeding import cell_rng, cell_seed, seed_sequence

INTERP_COLUMNS = ["N", "M", "t", "replica", "seed", "phi", "phi_prime", "mean_U", "mass_neg"]


@dataclass
class Report:
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    checks: dict[str, dict] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks.values())


def map_cells(fn: Callable, cells: list, threads: int = 1) -> list:
    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def _key(cfg: ExperimentConfig, sub: str) -> str:
    return f"{cfg.name}/{sub}"


def covariance_experiment(cfg: ExperimentConfig, threads: int = 1) -> Report:
    m = cfg.mixture_obj
    key = _key(cfg, "covariance-check")

    def cell(args):
        idx, N = args
        rng = cell_rng(cfg.seed, key, idx)
        A = sphere.sample_sphere(N, cfg.n_pairs, rng)
        B = sphere.sample_sphere(N, cfg.n_pairs, rng)
        B[0] = A[0]  # the first pair is the diagonal, where theory is N xi(1)
        res = covariance_check(N, m, A, B, cfg.n_disorder, rng)
        R = np.einsum("pn,pn->p", A, B) / N
        rows = []
        for j in range(cfg.n_pairs):
            z = (res["empirical"][j] - res["theory"][j]) / res["stderr"][j]
            rows.append([N, j, R[j], res["empirical"][j], res["theory"][j], res["stderr"][j], z, int(abs(z) <= 5)])
        return rows

    rows = [r for rs in map_cells(cell, list(enumerate(cfg.sizes_N)), threads) for r in rs]
    report = Report(["N", "pair", "R", "empirical", "theory", "stderr", "z", "pass"], rows)
    worst = max(abs(r[6]) for r in rows)
    report.checks["covariance_within_5se"] = {"pass": all(r[7] for r in rows), "max_abs_z": worst}
    return report


def coarea_experiment(cfg: ExperimentConfig, threads: int = 1) -> Report:
    cells = [(N, M) for N in cfg.sizes_N for M in cfg.sizes_M]

    def cell(nm):
        N, M = nm
        lo, hi = sphere.band_interval(M, cfg.a, N)
        res = sphere.band_measure(N, M, (lo, hi))
        rel = abs(res["exact"] - res["coarea_numeric"]) / res["exact"]
        return [N, M, cfg.a, lo, hi, res["exact"], res["coarea_numeric"], rel, sphere.band_limit(M, cfg.a),
                int(rel <= 1e-6)]

    rows = map_cells(cell, cells, threads)
    report = Report(["N", "M", "a", "r_lo", "r_hi", "exact", "coarea_numeric", "rel_err", "large_N_limit", "pass"],
                    rows)
    report.checks["coarea_rel_1e-6"] = {"pass": all(r[-1] for r in rows), "max_rel_err": max(r[7] for r in rows)}
    return report


def poincare_experiment(cfg: ExperimentConfig, threads: int = 1) -> Report:
    key = _key(cfg, "poincare-check")
    cells = list(enumerate((N, M) for N in cfg.sizes_N for M in cfg.sizes_M))

    def cell(args):
        idx, (N, M) = args
        res = sphere.poincare_check(N, M, cfg.K, cell_rng(cfg.seed, key, idx))
        return [N, M, cfg.K, res["ks_statistic"], res["threshold"], int(res["ks_statistic"] < res["threshold"])]

    rows = map_cells(cell, cells, threads)
    report = Report(["N", "M", "K", "ks_statistic", "threshold", "pass"], rows)
    large = [r for r in rows if r[0] >= cfg.poincare_large_n]
    report.checks["large_N_passes_ks"] = {"pass": all(r[-1] for r in large), "rows_checked": len(large)}
    return report


def free_energy_experiment(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Paired F_N and F-bar_N per replica, with the gap against eta_N^x(1)/N."""
    m = cfg.mixture_obj
    key = _key(cfg, "free-energy-sweep")

    def cell(args):
        idx, N = args
        gap = free_energy.perturbation_gap(N, m, cfg.c, cfg.n_disorder, cfg.n_inner, seed_sequence(cfg.seed, key, idx))
        return N, gap

    results = map_cells(cell, list(enumerate(cfg.sizes_N)), threads)
    rows, ok, gaps = [], True, []
    for N, g in results:
        within = g["abs_gap"] <= g["eta_over_n"] + 3 * g["stderr"]
        ok &= within
        gaps.append(g["abs_gap"])
        rows.append([N, g["F"], g["F_bar"], g["gap"], g["stderr"], g["eta_over_n"], int(within)])
    report = Report(["N", "F", "F_bar", "gap", "gap_stderr", "eta_over_N", "pass"], rows)
    report.checks["gap_below_eta_bound"] = {"pass": bool(ok)}
    report.checks["gap_decreasing_in_N"] = {
        "pass": all(b <= a for a, b in zip(gaps, gaps[1:])) if len(gaps) > 1 else True}
    return report


def superadd_experiment(cfg: ExperimentConfig, threads: int = 1) -> Report:
    m = cfg.mixture_obj
    key = _key(cfg, "superadd-table")

    def cell(args):
        idx, N = args
        return N, free_energy.superadditivity_defect(N, N, m, cfg.c_or_none, cfg.n_disorder, cfg.n_inner,
                                                     cell_seed(cfg.seed, key, idx))

    rows = []
    for N, d in map_cells(cell, list(enumerate(cfg.sizes_N)), threads):
        floor = -(3 * d["stderr"] + cfg.defect_slack * N)
        est = d["estimates"]
        rows.append([N, N, est[2 * N].total, est[N].total, d["defect"], d["stderr"], d["defect"] / N, floor,
                     int(d["defect"] >= floor)])
    report = Report(["N", "M", "total_NM", "total_N", "defect", "stderr", "defect_per_M", "floor", "pass"], rows)
    report.checks["defect_above_floor"] = {"pass": all(r[-1] for r in rows)}
    return report


def _mcmc(cfg: ExperimentConfig) -> interpolation.MCMCParams:
    return interpolation.MCMCParams(burn_in=cfg.burn_in, thin=cfg.thin, chain_len=cfg.chain_len,
                                    n_chains=cfg.n_chains)


def _interp_rows(cfg: ExperimentConfig, N: int, M: int, ts, seed, with_phi: bool = True) -> list[list]:
    """One row per (t, disorder replica); phi and Gibbs averages share each replica's bundle."""
    m = cfg.mixture_obj
    rows = []
    replica_seeds = [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(cfg.n_disorder)]
    for t in ts:
        if with_phi:
            phis = interpolation.phi_curve([t], N, M, m, cfg.c_or_none, cfg.n_disorder, cfg.n_inner, seed)[0]
            phi_vals = phis["per_replica"]
        else:
            phi_vals = [float("nan")] * cfg.n_disorder
        stats = interpolation.replica_pair_averages(t, N, M, m, cfg.c_or_none, cfg.n_disorder, _mcmc(cfg), seed,
                                                    eps=cfg.eps)
        for i, s in enumerate(stats):
            rows.append([N, M, t, i, replica_seeds[i], float(phi_vals[i]), -0.5 * s["U"], s["U"], s["mass_neg"]])
    return rows


def interp_endpoints_experiment(cfg: ExperimentConfig, threads: int = 1) -> Report:
    m = cfg.mixture_obj
    key = _key(cfg, "interp-endpoints")
    cells = list(enumerate((N, M) for N in cfg.sizes_N for M in cfg.sizes_M))

    def cell(args):
        idx, (N, M) = args
        return N, M, interpolation.endpoint_check(N, M, m, cfg.c_or_none, cfg.n_disorder, cfg.n_inner,
                                                  cell_seed(cfg.seed, key, idx))

    rows, ok = [], True
    for N, M, res in map_cells(cell, cells, threads):
        for name, r in res.items():
            within = abs(r["diff"]) <= 3 * r["combined_stderr"]
            ok &= within
            rows.append([N, M, name, r["lhs"], r["rhs"], r["diff"], r["combined_stderr"], r["paired_stderr"],
                         int(within)])
    report = Report(["N", "M", "endpoint", "phi", "reference", "diff", "combined_stderr", "paired_stderr", "pass"],
                    rows)
    report.checks["endpoints_within_3se"] = {"pass": bool(ok)}
    return report


def interp_derivative_experiment(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Per-cell interpolation CSV plus the finite-difference identity check in the summary."""
    m = cfg.mixture_obj
    key = _key(cfg, "interp-derivative")
    cells = list(enumerate((N, M) for N in cfg.sizes_N for M in cfg.sizes_M))

    def cell(args):
        idx, (N, M) = args
        seed = cell_seed(cfg.seed, key, idx)
        rows = _interp_rows(cfg, N, M, cfg.t_grid, seed)
        checks = {}
        if interpolation.exact_pairs_possible(N, M):
            for t in cfg.t_grid:
                if 0 < t - cfg.fd_step and t + cfg.fd_step < 1:
                    res = interpolation.derivative_identity_check(t, N, M, m, cfg.c_or_none, cfg.n_disorder,
                                                                  cfg.fd_step, seed)
                    checks[f"fd_identity_N{N}_M{M}_t{t:g}"] = {
                        "pass": abs(res["diff"]) <= 3 * res["stderr"], **res}
        return rows, checks

    report = Report(INTERP_COLUMNS)
    for rows, checks in map_cells(cell, cells, threads):
        report.rows.extend(rows)
        report.checks.update(checks)
    return report


def positivity_experiment(cfg: ExperimentConfig, threads: int = 1) -> Report:
    key = _key(cfg, "positivity-scan")
    M = cfg.sizes_M[0]
    cells = list(enumerate(cfg.sizes_N))

    def cell(args):
        idx, N = args
        return _interp_rows(cfg, N, M, cfg.t_grid, cell_seed(cfg.seed, key, idx), with_phi=False)

    report = Report(INTERP_COLUMNS)
    for rows in map_cells(cell, cells, threads):
        report.rows.extend(rows)
    for N in cfg.sizes_N:
        masses = [r[8] for r in report.rows if r[0] == N]
        report.checks[f"mass_neg_N{N}"] = {"pass": True, "mean": float(np.mean(masses))}
    return report


def lipschitz_experiment(cfg: ExperimentConfig, threads: int = 1) -> Report:
    m = cfg.mixture_obj
    key = _key(cfg, "lipschitz-audit")
    dims = sorted({N + M for N in cfg.sizes_N for M in cfg.sizes_M})
    cells = [(d, i) for d in dims for i in range(cfg.n_disorder)]

    def cell(args):
        d, i = args
        idx = dims.index(d) * cfg.n_disorder + i
        _, Hbar, _ = sample_perturbed(d, m, seed_sequence(cfg.seed, key, idx), cfg.c_or_none)
        est = bands.lipschitz_estimates(Hbar, cfg.n_probes, cell_rng(cfg.seed, key + "/probes", idx))
        return [d, i, est.l1, est.l2, est.l1_normalized, est.n_probes]

    rows = map_cells(cell, cells, threads)
    report = Report(["dim", "replica", "l1", "l2", "l1_over_sqrt_dim", "n_probes"], rows)
    for d in dims:
        vals = np.array([r[4] for r in rows if r[0] == d])
        tight = bool(vals.std(ddof=1) < vals.mean() / 3) if len(vals) > 1 else True
        report.checks[f"l1_concentration_dim{d}"] = {"pass": tight, "mean": float(vals.mean()),
                                                     "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0}
    return report


def lemma_experiment(cfg: ExperimentConfig, threads: int = 1) -> Report:
    m = cfg.mixture_obj
    key = _key(cfg, "lemma-estimate-audit")
    cells = [(N, M, sign) for N in cfg.sizes_N for M in cfg.sizes_M for sign in (1, -1)]

    def cell(args):
        N, M, sign = args
        idx = cells.index(args)
        bundle = sample_bundle(N, M, m, seed_sequence(cfg.seed, key, idx), cfg.c_or_none)
        r = math.sqrt(M) + sign * cfg.r_offset
        res = bands.lemma_estimate_check(bundle.hbar_main(), N, M, r, cfg.lemma_pairs,
                                         cell_rng(cfg.seed, key + "/pairs", idx), n_probes=cfg.n_probes)
        return [N, M, r, res["side"], res["checked"], res["violations"], res["l1"], res["l2"], res["n_probes"]]

    rows = map_cells(cell, cells, threads)
    report = Report(["N", "M", "r", "side", "checked", "violations", "l1", "l2", "n_probes"], rows)
    report.checks["zero_violations"] = {"pass": all(r[5] == 0 for r in rows),
                                        "total_violations": int(sum(r[5] for r in rows))}
    return report


EXPERIMENTS: dict[str, Callable[[ExperimentConfig, int], Report]] = {
    "covariance-check": covariance_experiment,
    "coarea-check": coarea_experiment,
    "poincare-check": poincare_experiment,
    "free-energy-sweep": free_energy_experiment,
    "superadd-table": superadd_experiment,
    "interp-endpoints": interp_endpoints_experiment,
    "interp-derivative": interp_derivative_experiment,
    "positivity-scan": positivity_experiment,
    "lipschitz-audit": lipschitz_experiment,
    "lemma-estimate-audit": lemma_experiment,
}
