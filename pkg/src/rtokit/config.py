"""Sectioned key-value run configuration.

Files use INI syntax with the sections [problem], [sampler], [surrogate]
and [output].  Unknown keys and malformed values are reported per field;
all keys have documented defaults, several of which depend on the chosen
problem (see README).
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields

PROBLEM_KINDS = ("rbf9", "kl", "linear")
METHODS = ("rto", "dnn-rto", "dnn-rto-pr")
FIELD_QUANTITIES = ("kappa", "pressure")


class ConfigError(Exception):
    """Invalid configuration; ``errors`` lists field-level messages."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ProblemConfig:
    example: str = "rbf9"
    mesh_cells: int = 40
    noise_delta: float = 0.05      # rbf9: relative noise level
    noise_std: float = 0.05        # kl and linear: absolute noise std
    kl_variance: float = 1.0
    kl_length: float = 0.1
    kl_modes: int = 120
    sensors: str = "default"       # "default" or a CSV path with x,y rows
    data_file: str = ""            # defaults to <output.directory>/data.csv
    linear_dim: int = 6
    linear_obs: int = 10
    linear_seed: int = 7


@dataclass
class SamplerConfig:
    method: str = "rto"
    n_samples: int = 5000
    rank_threshold: float = 1e-10
    gtol: float = 1e-8
    steptol: float = 1e-10
    max_iterations: int = 500
    workers: int = 1
    master_seed: int = 0


@dataclass
class SurrogateConfig:
    hidden_layers: int = -1        # -1: per-problem default (rbf9: 3, kl: 4)
    hidden_width: int = -1         # -1: per-problem default (rbf9: 40, kl: 80)
    n_train: int = 100
    learning_rate: float = 5e-4
    epochs: int = 20000
    seed: int = 0
    loss_tol: float = 1e-8


@dataclass
class OutputConfig:
    directory: str = "out"
    emit_samples: bool = True
    field_quantity: str = "kappa"
    reference_samples: str = ""


@dataclass
class RunConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def resolved_hidden_layers(self) -> int:
        if self.surrogate.hidden_layers >= 0:
            return self.surrogate.hidden_layers
        return 4 if self.problem.example == "kl" else 3

    def resolved_hidden_width(self) -> int:
        if self.surrogate.hidden_width >= 0:
            return self.surrogate.hidden_width
        return 80 if self.problem.example == "kl" else 40

    def canonical_items(self) -> list[tuple[str, str]]:
        items = []
        for section_name in ("problem", "sampler", "surrogate", "output"):
            section = getattr(self, section_name)
            for f in fields(section):
                items.append((f"{section_name}.{f.name}", str(getattr(section, f.name))))
        return items

    def config_hash(self) -> str:
        text = "\n".join(f"{k}={v}" for k, v in self.canonical_items())
        return hashlib.sha256(text.encode()).hexdigest()


_SECTIONS = {
    "problem": ProblemConfig,
    "sampler": SamplerConfig,
    "surrogate": SurrogateConfig,
    "output": OutputConfig,
}


def _coerce(section: str, key: str, raw: str, target_type, errors: list[str]):
    try:
        if target_type is bool:
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw
    except ValueError:
        errors.append(f"{section}.{key}: cannot parse {raw!r} as {target_type.__name__}")
        return None


def _validate(cfg: RunConfig, errors: list[str]) -> None:
    p, s, g, o = cfg.problem, cfg.sampler, cfg.surrogate, cfg.output
    if p.example not in PROBLEM_KINDS:
        errors.append(f"problem.example: must be one of {PROBLEM_KINDS}, got {p.example!r}")
    if p.mesh_cells < 2:
        errors.append("problem.mesh_cells: must be an integer >= 2")
    if p.noise_delta < 0:
        errors.append("problem.noise_delta: must be non-negative")
    if p.noise_std < 0:
        errors.append("problem.noise_std: must be non-negative")
    if p.kl_variance < 0:
        errors.append("problem.kl_variance: must be non-negative")
    if p.kl_length <= 0:
        errors.append("problem.kl_length: must be positive")
    if p.kl_modes < 1:
        errors.append("problem.kl_modes: must be a positive integer")
    if p.linear_dim < 1 or p.linear_obs < 1:
        errors.append("problem.linear_dim/linear_obs: must be positive integers")
    if s.method not in METHODS:
        errors.append(f"sampler.method: must be one of {METHODS}, got {s.method!r}")
    if s.n_samples < 1:
        errors.append("sampler.n_samples: must be a positive integer")
    if not 0.0 <= s.rank_threshold < 1.0:
        errors.append("sampler.rank_threshold: must lie in [0, 1)")
    if s.gtol <= 0 or s.steptol <= 0:
        errors.append("sampler.gtol/steptol: must be positive")
    if s.max_iterations < 1:
        errors.append("sampler.max_iterations: must be a positive integer")
    if s.workers < 1:
        errors.append("sampler.workers: must be a positive integer")
    if s.master_seed < 0:
        errors.append("sampler.master_seed: must be non-negative")
    if g.hidden_layers < -1:
        errors.append("surrogate.hidden_layers: must be >= 0 (or omitted)")
    if g.hidden_width < -1 or g.hidden_width == 0:
        errors.append("surrogate.hidden_width: must be a positive integer (or omitted)")
    if g.n_train < 1:
        errors.append("surrogate.n_train: must be a positive integer")
    if g.learning_rate <= 0:
        errors.append("surrogate.learning_rate: must be positive")
    if g.epochs < 1:
        errors.append("surrogate.epochs: must be a positive integer")
    if g.loss_tol < 0:
        errors.append("surrogate.loss_tol: must be non-negative")
    if not o.directory:
        errors.append("output.directory: must be a non-empty path")
    if o.field_quantity not in FIELD_QUANTITIES:
        errors.append(f"output.field_quantity: must be one of {FIELD_QUANTITIES}")


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"config syntax: {exc.message.splitlines()[0]}"]) from exc
    errors: list[str] = []
    cfg = RunConfig()
    for section_name in parser.sections():
        if section_name not in _SECTIONS:
            errors.append(f"{section_name}: unknown section (expected {tuple(_SECTIONS)})")
            continue
        target = getattr(cfg, section_name)
        known = {f.name: f.type for f in fields(target)}
        types = {f.name: type(getattr(target, f.name)) for f in fields(target)}
        for key, raw in parser.items(section_name):
            if key not in known:
                errors.append(f"{section_name}.{key}: unknown key")
                continue
            value = _coerce(section_name, key, raw, types[key], errors)
            if value is not None:
                setattr(target, key, value)
    _validate(cfg, errors)
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"config file: {exc}"]) from exc
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    """Round-trippable text form of a configuration."""
    buf = io.StringIO()
    for section_name in ("problem", "sampler", "surrogate", "output"):
        buf.write(f"[{section_name}]\n")
        section = getattr(cfg, section_name)
        for f in fields(section):
            buf.write(f"{f.name} = {getattr(section, f.name)}\n")
        buf.write("\n")
    return buf.getvalue()
