"""Experiment configuration: typed dataclasses plus a strict INI-style parser.

Keys may be written flat (``nivsds.p = 0.4``) or inside a section::

    [nivsds]
    p = 0.4

Unknown keys, duplicate keys and out-of-range values are errors.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str = "scaled_linear"
    beta_start: float = 0.00085
    beta_end: float = 0.012
    T: int = 1000


@dataclass(frozen=True)
class PriorSpec:
    family: str = "translating_bump"
    K: int = 4
    F: int = 16
    d: int = 16
    sigma2: float = 0.1
    amplitude: float = 5.0
    width: float = 1.5
    background_scale: float = 2.0
    velocities: Optional[Tuple[float, ...]] = None
    seed: int = 0


@dataclass(frozen=True)
class SamplerSpec:
    mode: str = "ddim_deterministic"
    steps: int = 25
    eta: float = 0.0


@dataclass(frozen=True)
class AnchorSpec:
    N: int = 16
    reward: str = "gmm_loglik"
    override_path: Optional[str] = None


@dataclass(frozen=True)
class NiVsdsSpec:
    p: float = 0.4
    alpha: float = 1.0
    weight_mode: str = "constant_one"


@dataclass(frozen=True)
class TrainSpec:
    epochs: int = 20
    batch: int = 64
    lr: float = 1e-3
    hidden: int = 256
    steps_per_epoch: int = 200


@dataclass(frozen=True)
class StudySpec:
    n_videos: int = 200


@dataclass(frozen=True)
class AblateSpec:
    seeds: int = 100


@dataclass(frozen=True)
class PipelineSpec:
    seed: int = 0
    label: int = 0
    p_re: float = 1.0
    denoiser: str = "oracle"
    skip_selection: bool = False
    skip_nivsds: bool = False
    skip_regeneration: bool = False


@dataclass(frozen=True)
class PipelineConfig:
    pipeline: PipelineSpec = field(default_factory=PipelineSpec)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    prior: PriorSpec = field(default_factory=PriorSpec)
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    anchor: AnchorSpec = field(default_factory=AnchorSpec)
    nivsds: NiVsdsSpec = field(default_factory=NiVsdsSpec)
    train: TrainSpec = field(default_factory=TrainSpec)
    study: StudySpec = field(default_factory=StudySpec)
    ablate: AblateSpec = field(default_factory=AblateSpec)

    def __post_init__(self):
        validate(self)

    @property
    def N(self) -> int:
        """Candidate count after the selection ablation is applied."""
        return 1 if self.pipeline.skip_selection else self.anchor.N

    def replace(self, **sections) -> "PipelineConfig":
        """``cfg.replace(pipeline={"seed": 3}, anchor={"N": 1})``."""
        updates = {}
        for name, changes in sections.items():
            updates[name] = dataclasses.replace(getattr(self, name), **changes)
        return dataclasses.replace(self, **updates)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            sec = dataclasses.asdict(getattr(self, f.name))
            if sec.get("velocities") is not None:
                sec["velocities"] = list(sec["velocities"])
            out[f.name] = sec
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        sections = {}
        for f in dataclasses.fields(cls):
            raw = dict(data.get(f.name, {}))
            if raw.get("velocities") is not None:
                raw["velocities"] = tuple(raw["velocities"])
            sections[f.name] = f.default_factory()  # type: ignore[misc]
            sections[f.name] = dataclasses.replace(sections[f.name], **raw)
        return cls(**sections)


CHOICES = {
    "schedule.kind": ("linear", "scaled_linear"),
    "prior.family": ("translating_bump", "static_bump"),
    "sampler.mode": ("ddim_deterministic", "ddpm_ancestral"),
    "anchor.reward": ("gmm_loglik", "neg_distance"),
    "nivsds.weight_mode": ("constant_one", "one_minus_alpha_bar"),
    "pipeline.denoiser": ("oracle", "learned"),
}


def _fail(key, msg):
    raise ConfigError(f"{key}: {msg}")


def _range(key, value, lo=None, hi=None, lo_open=False):
    if lo is not None and (value < lo or (lo_open and value == lo)):
        _fail(key, f"value {value} out of bounds ({'(' if lo_open else '['}{lo}, {hi if hi is not None else 'inf'}])")
    if hi is not None and value > hi:
        _fail(key, f"value {value} out of bounds ([{lo}, {hi}])")


def validate(cfg: PipelineConfig) -> None:
    for key, options in CHOICES.items():
        sec, name = key.split(".")
        if getattr(getattr(cfg, sec), name) not in options:
            _fail(key, f"must be one of {', '.join(options)}")
    s = cfg.schedule
    _range("schedule.T", s.T, 1)
    _range("schedule.beta_start", s.beta_start, 0, 1, lo_open=True)
    _range("schedule.beta_end", s.beta_end, s.beta_start, 1)
    if s.beta_end >= 1:
        _fail("schedule.beta_end", "must be < 1")
    p = cfg.prior
    for k in ("K", "F", "d"):
        _range(f"prior.{k}", getattr(p, k), 1)
    _range("prior.sigma2", p.sigma2, 0, lo_open=True)
    _range("prior.width", p.width, 0, lo_open=True)
    if p.velocities is not None and len(p.velocities) != p.K:
        _fail("prior.velocities", f"need {p.K} values, got {len(p.velocities)}")
    _range("sampler.steps", cfg.sampler.steps, 1, s.T)
    _range("sampler.eta", cfg.sampler.eta, 0, 1)
    if cfg.sampler.mode == "ddim_deterministic" and cfg.sampler.eta != 0:
        _fail("sampler.eta", "must be 0 in ddim_deterministic mode")
    _range("anchor.N", cfg.anchor.N, 1)
    _range("nivsds.p", cfg.nivsds.p, 0, 1)
    _range("nivsds.alpha", cfg.nivsds.alpha, 0)
    _range("pipeline.p_re", cfg.pipeline.p_re, 0, 1)
    _range("pipeline.label", cfg.pipeline.label, 0, p.K - 1)
    _range("pipeline.seed", cfg.pipeline.seed, 0, 2**64 - 1)
    t = cfg.train
    for k in ("epochs", "batch", "hidden", "steps_per_epoch"):
        _range(f"train.{k}", getattr(t, k), 1)
    _range("train.lr", t.lr, 0, lo_open=True)
    _range("study.n_videos", cfg.study.n_videos, 2)
    _range("ablate.seeds", cfg.ablate.seeds, 1)


# -- text format -----------------------------------------------------------

_SECTIONS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def _field_types():
    types = {}
    for sec, f in _SECTIONS.items():
        for sub in dataclasses.fields(f.default_factory()):  # type: ignore[misc]
            types[f"{sec}.{sub.name}"] = sub.type
    return types


_TYPES = _field_types()


def _coerce(key: str, text: str):
    typ = _TYPES[key]
    text = text.strip()
    try:
        if "Tuple" in str(typ):
            return None if text.lower() in ("", "none") else tuple(
                float(x) for x in text.split(",") if x.strip())
        if "Optional[str]" in str(typ):
            return None if text.lower() in ("", "none") else text
        if typ in ("bool", bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ in ("int", int):
            return int(text)
        if typ in ("float", float):
            return float(text)
        return text
    except ValueError:
        _fail(key, f"cannot parse {text!r} as {typ}")


def parse_config_text(text: str, overrides: Optional[dict] = None) -> PipelineConfig:
    parser = configparser.ConfigParser(strict=True, interpolation=None,
                                       default_section="__defaults__")
    parser.optionxform = str  # keep key case (anchor.N)
    try:
        parser.read_string("[__root__]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    for section in parser.sections():
        for name, raw in parser.items(section, raw=True):
            key = name if section == "__root__" else f"{section}.{name}"
            if key not in _TYPES:
                _fail(key, "unknown key")
            if key in values:
                _fail(key, "duplicate key")
            values[key] = _coerce(key, raw)
    for key, val in (overrides or {}).items():
        if key not in _TYPES:
            _fail(key, "unknown key")
        values[key] = val
    data: dict = {}
    for key, val in values.items():
        sec, name = key.split(".")
        data.setdefault(sec, {})[name] = val
    try:
        return PipelineConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(path, overrides: Optional[dict] = None) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), overrides)


def emit_config(cfg: PipelineConfig) -> str:
    lines = []
    for sec, values in cfg.to_dict().items():
        lines.append(f"[{sec}]")
        for name, val in values.items():
            if val is None:
                text = "none"
            elif isinstance(val, list):
                text = ",".join(repr(float(x)) for x in val)
            elif isinstance(val, float):
                text = repr(val)
            else:
                text = str(val)
            lines.append(f"{name} = {text}")
        lines.append("")
    return "\n".join(lines)
