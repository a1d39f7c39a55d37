"""Run configuration: dataclass sections addressed by flat ``section.field`` keys.

Config files are plain text, one ``key = value`` per line, ``#`` starts a
comment.  Tuples are comma-separated, booleans are true/false.  Unknown keys
are an error, so a typo never silently falls back to a default.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Tuple

from .data import SynthConfig
from .encoder import EncoderConfig
from .losses import LossConfig
from .metrics import EvalMode
from .mspac import MspacConfig
from .optim import OptimConfig


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 30
    P: int = 8
    M: int = 4
    seed: int = 0
    # 0 means floor(train images / batch size); see README for why the default is larger
    iters_per_epoch: int = 100

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("train.epochs must be >= 0")
        if self.P <= 0 or self.M <= 0:
            raise ValueError("train.P and train.M must be positive")
        if self.iters_per_epoch < 0:
            raise ValueError("train.iters_per_epoch must be >= 0")


SECTIONS: Dict[str, type] = {
    "data": SynthConfig,
    "encoder": EncoderConfig,
    "mspac": MspacConfig,
    "loss": LossConfig,
    "optim": OptimConfig,
    "train": TrainConfig,
    "eval": EvalMode,
}

# config-file spelling -> dataclass field, where the two differ
ALIASES = {"loss.lambda": "loss.lam"}
_REVERSE_ALIASES = {v: k for k, v in ALIASES.items()}


@dataclass
class RunConfig:
    data: SynthConfig = field(default_factory=SynthConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    mspac: MspacConfig = field(default_factory=MspacConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalMode = field(default_factory=EvalMode)
    out_dir: str = ""
    data_dir: str = ""

    def validate(self) -> "RunConfig":
        if (self.data.img_h, self.data.img_w) != (self.encoder.img_h, self.encoder.img_w):
            raise ConfigError(
                f"data image size {self.data.img_h}x{self.data.img_w} differs from "
                f"encoder input {self.encoder.img_h}x{self.encoder.img_w}"
            )
        try:
            self.mspac.check_map(self.encoder.out_h)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.train.P > self.data.n_ids:
            raise ConfigError(f"train.P={self.train.P} exceeds data.n_ids={self.data.n_ids}")
        return self

    def to_flat(self) -> Dict[str, Any]:
        flat: Dict[str, Any] = {}
        for section in SECTIONS:
            obj = getattr(self, section)
            for f in dataclasses.fields(obj):
                key = f"{section}.{f.name}"
                flat[_REVERSE_ALIASES.get(key, key)] = getattr(obj, f.name)
        flat["out_dir"] = self.out_dir
        flat["data_dir"] = self.data_dir
        return flat

    def dumps(self) -> str:
        return "".join(f"{k} = {format_value(v)}\n" for k, v in self.to_flat().items())


def known_keys() -> List[str]:
    return list(RunConfig().to_flat())


def format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(format_value(x) for x in v)
    return str(v)


def _field_types(cls: type) -> Dict[str, Any]:
    return typing.get_type_hints(cls)


def parse_value(raw: str, typ: Any, key: str) -> Any:
    raw = raw.strip()
    origin = typing.get_origin(typ)
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if origin in (tuple, Tuple):
            (inner, *_rest) = typing.get_args(typ) or (str,)
            return tuple(parse_value(part, inner, key) for part in raw.split(",") if part.strip())
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from None


def parse_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Raw ``key -> value string`` pairs; later lines win."""
    out: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def build(overrides: Mapping[str, Any] = (), base: RunConfig = None) -> RunConfig:
    """Apply string or typed ``overrides`` on top of ``base`` (defaults if omitted)."""
    flat = (base or RunConfig()).to_flat()
    valid = set(flat)
    unknown = sorted(set(dict(overrides)) - valid)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    flat.update(dict(overrides))
    kwargs: Dict[str, Any] = {}
    for section, cls in SECTIONS.items():
        types = _field_types(cls)
        values = {}
        for name, typ in types.items():
            key = _REVERSE_ALIASES.get(f"{section}.{name}", f"{section}.{name}")
            v = flat[key]
            values[name] = parse_value(v, typ, key) if isinstance(v, str) and typ is not str else v
        try:
            kwargs[section] = cls(**values)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return RunConfig(out_dir=str(flat["out_dir"]), data_dir=str(flat["data_dir"]), **kwargs).validate()


def load(path=None, overrides: Mapping[str, Any] = ()) -> RunConfig:
    merged: Dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        merged.update(parse_text(text, str(p)))
    merged.update(dict(overrides))
    return build(merged)


def parse_assignments(items: Iterable[str]) -> Dict[str, str]:
    """``["a.b=1", ...]`` -> ``{"a.b": "1"}``."""
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out
