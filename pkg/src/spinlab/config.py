"""Experiment configuration: a flat INI file with one optional section per subcommand.

Keys in ``[experiment]`` apply everywhere; a section named after a subcommand
(e.g. ``[coarea-check]``) overrides them for that subcommand only.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .field import memory_budget_bytes
from .mixture import DEFAULT_C, validate_mixture

SUBCOMMANDS = (
    "covariance-check",
    "coarea-check",
    "poincare-check",
    "free-energy-sweep",
    "superadd-table",
    "interp-endpoints",
    "interp-derivative",
    "positivity-scan",
    "lipschitz-audit",
    "lemma-estimate-audit",
)
COMMON_SECTION = "experiment"


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "default"
    mixture: tuple[float, ...] = (0.0, 1.0)
    p_max: int = 4
    c: float = DEFAULT_C
    perturb: bool = True
    a: float = 0.5
    sizes_N: tuple[int, ...] = (4,)
    sizes_M: tuple[int, ...] = (4,)
    n_disorder: int = 32
    n_inner: int = 10_000
    chain_len: int = 2500
    burn_in: int = 500
    thin: int = 5
    n_chains: int = 8
    n_probes: int = 200
    n_pairs: int = 20
    lemma_pairs: int = 10_000
    K: int = 10_000
    poincare_large_n: int = 1000
    t_grid: tuple[float, ...] = (0.25, 0.5, 0.75)
    fd_step: float = 0.05
    eps: float = 0.2
    r_offset: float = 0.3
    defect_slack: float = 0.05
    seed: int = 0
    out: str = "results"
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        try:
            m = validate_mixture(self.mixture, self.p_max or None)
        except ValueError as exc:
            raise ConfigError(str(exc), "mixture") from exc
        positive = ("n_disorder", "n_inner", "chain_len", "burn_in", "thin", "n_chains", "n_probes",
                    "n_pairs", "lemma_pairs", "K", "threads")
        for key in positive:
            if getattr(self, key) <= 0:
                raise ConfigError("must be positive", key)
        if not 0.25 < self.c < 0.5:
            raise ConfigError("must lie in (1/4, 1/2)", "c")
        if not 0 < self.a < 1:
            raise ConfigError("must lie in (0, 1)", "a")
        if not 0 <= self.eps < 1:
            raise ConfigError("must lie in [0, 1)", "eps")
        if self.chain_len < self.burn_in + 10 * self.thin:
            raise ConfigError("must be at least burn_in + 10 * thin", "chain_len")
        if self.n_chains < 2:
            raise ConfigError("need at least two chains", "n_chains")
        if not self.sizes_N or not self.sizes_M or min(self.sizes_N + self.sizes_M) < 1:
            raise ConfigError("sizes must be nonempty lists of positive integers", "sizes_N")
        if any(not 0 <= t <= 1 for t in self.t_grid):
            raise ConfigError("t values must lie in [0, 1]", "t_grid")
        biggest = max(self.sizes_N) + max(self.sizes_M)
        need = sum(8 * biggest**p for p in range(1, m.p_max + 1))
        if need > memory_budget_bytes():
            raise ConfigError(f"couplings for dimension {biggest} exceed the memory budget", "sizes_N")

    @property
    def mixture_obj(self):
        return validate_mixture(self.mixture, self.p_max or None)

    @property
    def c_or_none(self) -> float | None:
        return self.c if self.perturb else None

    def resolved(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)


def _parse_value(key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if kind == "floats":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if kind == "ints":
            return tuple(int(v) for v in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"cannot parse {raw!r}", key) from exc
    raise ConfigError("unsupported type", key)


_KINDS = {
    "mixture": "floats", "t_grid": "floats", "sizes_N": "ints", "sizes_M": "ints",
}


def _kind(f: dataclasses.Field):
    if f.name in _KINDS:
        return _KINDS[f.name]
    return {"int": int, "float": float, "bool": bool, "str": str}[f.type]


def load_config(path: str | Path | None, subcommand: str | None = None, **overrides) -> ExperimentConfig:
    """Read ``path`` (may be None for all defaults) and apply CLI overrides."""
    values: dict = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", "--config") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}", "--config") from exc
        for section in parser.sections():
            if section != COMMON_SECTION and section not in SUBCOMMANDS:
                raise ConfigError("unknown section", f"[{section}]")
        known = {f.name: f for f in fields(ExperimentConfig)}
        for section in (COMMON_SECTION, subcommand):
            if section is None or not parser.has_section(section):
                continue
            for key, raw in parser.items(section):
                if key not in known:
                    raise ConfigError("unknown key", f"[{section}] {key}")
                values[key] = _parse_value(key, raw, _kind(known[key]))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)

