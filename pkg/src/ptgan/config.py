"""Run configuration: INI-style file with one section per component.

Example::

    [runtime]
    seed = 7

    [trainer]
    beta1 = 0.5
    epochs = 40

Keys not given take the dataclass defaults. ``--set section.key=value``
overrides are applied after the file. The environment variable
``PTGAN_OUT`` replaces ``paths.out_dir``.
"""

import configparser
import dataclasses
import os
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .augmentation import AugmentConfig
from .backbone import REFERENCE_DIM, BackboneConfig
from .discriminator import DiscriminatorConfig
from .errors import ConfigError
from .generator import GeneratorConfig
from .metrics import MetricsConfig
from .pose_codec import NUM_JOINTS
from .trainer import TrainerConfig


@dataclass(frozen=True)
class PathsConfig:
    data_dir: str = "data"
    out_dir: str = "runs"
    manifest: str = ""


@dataclass(frozen=True)
class RuntimeConfig:
    seed: int = 0
    workers: int = 0


SECTIONS = {
    "backbone": BackboneConfig,
    "generator": GeneratorConfig,
    "discriminator": DiscriminatorConfig,
    "augment": AugmentConfig,
    "trainer": TrainerConfig,
    "metrics": MetricsConfig,
    "paths": PathsConfig,
    "runtime": RuntimeConfig,
}
ALIASES = {"disc": "discriminator", "gen": "generator", "augmentation": "augment"}
# sections whose ``seed`` is derived from runtime.seed unless set explicitly
SEEDED = ("backbone", "augment", "trainer", "metrics")


@dataclass(frozen=True)
class RunConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    explicit: frozenset = field(default=frozenset(), compare=False, repr=False)

    def to_dict(self):
        out = {}
        for name in SECTIONS:
            sec = dataclasses.asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in sec.items()}
        return out


def derive_seed(root, name):
    seq = np.random.SeedSequence([int(root) & 0xFFFFFFFF, zlib.crc32(name.encode())])
    return int(seq.generate_state(1)[0])


def _coerce(raw, default, key):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.strip("()[]").split(",") if s.strip()]
            elem = default[0] if default else ""
            return tuple(_coerce(s, elem, key) for s in items)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}", key) from exc


def _apply(values, section, key, raw):
    section = ALIASES.get(section, section)
    full = f"{section}.{key}"
    if section not in SECTIONS:
        raise ConfigError(f"unknown section [{section}]", full)
    cls = SECTIONS[section]
    defaults = {f.name: f.default for f in fields(cls)}
    if key not in defaults:
        raise ConfigError(f"unknown key {full}", full)
    values.setdefault(section, {})[key] = _coerce(raw, defaults[key], full)


def parse_override(text):
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError(f"override must look like section.key=value, got {text!r}", text)
    lhs, value = text.split("=", 1)
    section, key = lhs.strip().split(".", 1)
    return section.strip(), key.strip(), value


def load_config(path=None, overrides=(), env=None):
    """Read, default-fill, and cross-validate a run configuration."""
    env = os.environ if env is None else env
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None, strict=True)
        parser.optionxform = str
        try:
            parser.read_string(path.read_text(), source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            for key, raw in parser.items(section):
                _apply(values, section, key, raw)
    for text in overrides:
        _apply(values, *parse_override(text))
    user = {sec: dict(kv) for sec, kv in values.items()}
    if env.get("PTGAN_OUT"):
        values.setdefault("paths", {})["out_dir"] = env["PTGAN_OUT"]

    root = values.get("runtime", {}).get("seed", RuntimeConfig.seed)
    for name in SEEDED:
        values.setdefault(name, {}).setdefault("seed", derive_seed(root, name))

    built = {}
    for name, cls in SECTIONS.items():
        try:
            built[name] = cls(**values.get(name, {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}] {exc}", name) from exc
    explicit = frozenset(f"{sec}.{key}" for sec, kv in user.items() for key in kv)
    cfg = RunConfig(**built, explicit=explicit)
    validate(cfg)
    return cfg


def validate(cfg):
    g, b, d, a, t = cfg.generator, cfg.backbone, cfg.discriminator, cfg.augment, cfg.trainer
    if b.kind not in ("test", "reference"):
        raise ConfigError(f"backbone.kind must be test or reference, got {b.kind!r}", "backbone.kind")
    if b.kind == "reference" and b.dim != REFERENCE_DIM:
        raise ConfigError(f"backbone.dim must be {REFERENCE_DIM} for the reference backbone",
                          "backbone.dim")  # fmt: skip
    if g.descriptor_dim != b.dim:
        raise ConfigError(
            f"generator.descriptor_dim ({g.descriptor_dim}) does not match backbone.dim ({b.dim})",
            "generator.descriptor_dim",
        )
    want_pose = NUM_JOINTS * (3 if t.pose_include_confidence else 2)
    if g.pose_dim != want_pose:
        raise ConfigError(
            f"generator.pose_dim ({g.pose_dim}) must be {want_pose} when "
            f"trainer.pose_include_confidence={t.pose_include_confidence}",
            "generator.pose_dim",
        )
    if not (g.output_size == d.input_size == a.image_size):
        raise ConfigError(
            f"generator.output_size ({g.output_size}), discriminator.input_size "
            f"({d.input_size}) and augment.image_size ({a.image_size}) must agree",
            "generator.output_size",
        )
    if cfg.metrics.classifier not in ("synthetic", "reference"):
        raise ConfigError("metrics.classifier must be synthetic or reference", "metrics.classifier")
    return cfg


def validate_against_index(cfg, index):
    if cfg.discriminator.num_classes != index.num_identities:
        raise ConfigError(
            f"discriminator.num_classes ({cfg.discriminator.num_classes}) does not match the "
            f"manifest's {index.num_identities} identities",
            "discriminator.num_classes",
        )
    return cfg


def with_num_classes(cfg, n):
    return replace(cfg, discriminator=replace(cfg.discriminator, num_classes=n))


def dump_config(cfg):
    lines = []
    for name, sec in cfg.to_dict().items():
        lines.append(f"[{name}]")
        for key, val in sec.items():
            if isinstance(val, list):
                val = ", ".join(str(v) for v in val)
            lines.append(f"{key} = {val}")
        lines.append("")
    return "\n".join(lines)
