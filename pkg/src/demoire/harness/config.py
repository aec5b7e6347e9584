"""Run configuration: JSON file plus ``DEMOIRE_*`` environment overrides.

The file has three sections whose keys are exactly the fields of
:class:`~demoire.synth.SynthConfig`, :class:`~demoire.net.train.TrainConfig`
and :class:`~demoire.net.model.NetConfig`::

    {"synth": {"seed": 3, "output_size": 128},
     "train": {"lr": 0.0003, "weights": {"lambda_s": 10.0}},
     "net": {"base_channels": 16}}

Missing keys keep their defaults. An environment variable
``DEMOIRE_<SECTION>_<KEY>`` (nested keys joined by ``_``) overrides the
file; its value is parsed as JSON when possible, else taken as a string.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError
from ..net.model import NetConfig
from ..net.train import TrainConfig
from ..synth import SynthConfig

ENV_PREFIX = "DEMOIRE_"
SECTIONS = ("synth", "train", "net")


@dataclass(frozen=True)
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    net: NetConfig = field(default_factory=NetConfig)

    def to_dict(self) -> dict:
        return {"synth": self.synth.to_dict(), "train": self.train.to_dict(), "net": self.net.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        defaults = cls().to_dict()
        merged = {s: _merge(defaults[s], d.get(s, {}), s) for s in SECTIONS}
        return cls(
            SynthConfig.from_dict(merged["synth"]),
            TrainConfig.from_dict(merged["train"]),
            NetConfig.from_dict(merged["net"]),
        )

    def with_seed(self, seed: int) -> "RunConfig":
        d = self.to_dict()
        for s in SECTIONS:
            d[s]["seed"] = seed
        return RunConfig.from_dict(d)


def _merge(base: dict, update: dict, where: str) -> dict:
    if not isinstance(update, dict):
        raise ConfigError(f"section {where!r} must be a mapping")
    out = dict(base)
    for k, v in update.items():
        if k not in base:
            raise ConfigError(f"unknown key {where}.{k}")
        out[k] = _merge(base[k], v, f"{where}.{k}") if isinstance(base[k], dict) else v
    return out


def _env_paths(d: dict, prefix: tuple) -> dict:
    """Map upper-case env suffixes to key paths."""
    paths = {}
    for k, v in d.items():
        path = prefix + (k,)
        if isinstance(v, dict):
            paths.update(_env_paths(v, path))
        else:
            paths["_".join(path).upper()] = path
    return paths


def _parse_env_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_env(d: dict, env=None) -> dict:
    """Return a copy of the nested config dict with environment overrides applied."""
    env = os.environ if env is None else env
    d = json.loads(json.dumps(d))
    paths = _env_paths(RunConfig().to_dict(), ())
    for name, raw in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        suffix = name[len(ENV_PREFIX) :]
        if not suffix.split("_", 1)[0].lower() in SECTIONS:
            continue
        if suffix not in paths:
            raise ConfigError(f"environment variable {name} matches no config key")
        node = d
        *head, last = paths[suffix]
        for k in head:
            node = node.setdefault(k, {})
        node[last] = _parse_env_value(raw)
    return d


def load_config(path=None, env=None) -> RunConfig:
    d = {}
    if path is not None:
        try:
            d = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    try:
        return RunConfig.from_dict(apply_env(d, env))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
