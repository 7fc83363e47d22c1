"""Experiment configuration: one versioned JSON document per run."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from . import distributions as dist

SCHEMA_VERSION = 1
DEFAULT_T_GRID = [i / 10 for i in range(10)]
DEFAULT_M_LIST = [10, 20, 40, 80]
FORMATS = ("csv", "markdown")
EVALUATORS = ("series", "ode")


class ConfigError(ValueError):
    pass


@dataclass
class McConfig:
    enabled: bool = False
    n: int = 500_000
    seed: int = 0
    evaluator: str = "series"
    M_eval: int = 120
    rel_tol: float = 1e-10


@dataclass
class OutputConfig:
    directory: str = "out"
    formats: list = field(default_factory=lambda: list(FORMATS))


@dataclass
class Tolerances:
    quadrature: float = 1e-10
    stabilization: float = 1e-6


@dataclass
class ExperimentConfig:
    model: dict
    name: str = "experiment"
    t_grid: list = field(default_factory=lambda: list(DEFAULT_T_GRID))
    M_list: list = field(default_factory=lambda: list(DEFAULT_M_LIST))
    mc: McConfig = field(default_factory=McConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    override_unbounded: bool = False
    # published values to annotate in comparison reports, keyed like table columns
    reference: Optional[dict] = None

    def to_dict(self) -> dict:
        d = {"schema_version": SCHEMA_VERSION}
        d.update(asdict(self))
        if d["reference"] is None:
            del d["reference"]
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _section(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{name} must be an object")
    known = set(cls.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    return cls(**raw)


def from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    version = raw.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if "model" not in raw:
        raise ConfigError("config needs a 'model' section")

    cfg = ExperimentConfig(
        model=raw["model"],
        name=raw.get("name", "experiment"),
        t_grid=raw.get("t_grid", list(DEFAULT_T_GRID)),
        M_list=raw.get("M_list", list(DEFAULT_M_LIST)),
        mc=_section(McConfig, raw.get("mc"), "mc"),
        output=_section(OutputConfig, raw.get("output"), "output"),
        tolerances=_section(Tolerances, raw.get("tolerances"), "tolerances"),
        override_unbounded=raw.get("override_unbounded", False),
        reference=raw.get("reference"),
    )
    check(cfg)
    return cfg


def check(cfg: ExperimentConfig) -> None:
    if not isinstance(cfg.t_grid, list) or not cfg.t_grid:
        raise ConfigError("t_grid must be a nonempty list")
    for t in cfg.t_grid:
        if isinstance(t, bool) or not isinstance(t, (int, float)) or not abs(t) < 1:
            raise ConfigError(f"every t must be a number with |t| < 1, got {t!r}")
    if not isinstance(cfg.M_list, list) or not cfg.M_list:
        raise ConfigError("M_list must be a nonempty list")
    for M in cfg.M_list:
        if isinstance(M, bool) or not isinstance(M, int) or M < 0:
            raise ConfigError(f"every M must be a nonnegative integer, got {M!r}")
    if len(set(cfg.M_list)) != len(cfg.M_list):
        raise ConfigError("M_list has duplicates")
    if cfg.mc.evaluator not in EVALUATORS:
        raise ConfigError(f"mc.evaluator must be one of {EVALUATORS}")
    if cfg.mc.n < 2:
        raise ConfigError("mc.n must be at least 2")
    if not 0 <= cfg.mc.seed < 2**64:
        raise ConfigError("mc.seed must be an unsigned 64-bit integer")
    bad = set(cfg.output.formats) - set(FORMATS)
    if bad:
        raise ConfigError(f"unknown output formats {sorted(bad)}")
    if not (cfg.tolerances.quadrature > 0 and cfg.tolerances.stabilization >= 0):
        raise ConfigError("tolerances must be positive")
    if not isinstance(cfg.model, dict) or "kind" not in cfg.model:
        raise ConfigError("model must be an object with a 'kind'")
    build_model(cfg.model, cfg.tolerances)


def loads(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return from_dict(raw)


def shipped_configs() -> list[str]:
    root = resources.files("randlegendre") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def load(path) -> ExperimentConfig:
    """Read a config file; bare names of shipped configs also resolve."""
    p = Path(path)
    if p.exists():
        return loads(p.read_text())
    shipped = resources.files("randlegendre") / "configs" / p.name
    if shipped.is_file():
        return loads(shipped.read_text())
    raise ConfigError(f"no such config: {path}")


_MODEL_KEYS = {
    "dirichlet": ({"alphas"}, {"nodes"}),
    "multinomial": ({"n", "probs"}, set()),
    "truncated_multinormal": ({"mu", "sigma", "a_interval"}, {"nodes"}),
    "multinormal": ({"mu", "sigma"}, {"nodes"}),
    "discrete": ({"atoms"}, set()),
}


def build_model(desc: dict, tolerances: Tolerances = None) -> dist.JointInputModel:
    tol = (tolerances or Tolerances()).quadrature
    desc = dict(desc)
    kind = desc.pop("kind", None)
    if kind not in _MODEL_KEYS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {sorted(_MODEL_KEYS)}")
    required, optional = _MODEL_KEYS[kind]
    missing = required - set(desc)
    if missing:
        raise ConfigError(f"{kind} model is missing {sorted(missing)}")
    unknown = set(desc) - required - optional
    if unknown:
        raise ConfigError(f"unknown keys for {kind} model: {sorted(unknown)}")
    try:
        if kind == "dirichlet":
            model = dist.dirichlet(desc["alphas"], nodes=desc.get("nodes", 64), tol=tol)
        elif kind == "multinomial":
            model = dist.multinomial(desc["n"], desc["probs"])
        elif kind == "truncated_multinormal":
            model = dist.truncated_multinormal(
                desc["mu"], desc["sigma"], desc["a_interval"], nodes=desc.get("nodes", 128)
            )
        elif kind == "multinormal":
            model = dist.multinormal(desc["mu"], desc["sigma"], nodes=desc.get("nodes", 128))
        else:
            model = dist.DiscreteFinite(desc["atoms"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {kind} model: {exc}") from exc
    model.tol = tol
    return model


def model_summary(model: dist.JointInputModel) -> dict:
    out = model.describe()
    if "a_interval" in out:
        out["a_interval"] = [v if math.isfinite(v) else str(v) for v in out["a_interval"]]
    return out
