"""Run configuration: defaults, flat config files, flag overrides.

Grammar of a config file: one ``key = value`` pair per line; blank lines
and ``#`` comments ignored. Keys are dotted paths into the corpus / model
/ train sections plus the top-level ``seed``. Unknown keys are rejected
before any side effect. Precedence is flag > file > default, and every
command prints (and persists) the effective configuration including the
source of each value.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from cirl.errors import InvalidConfig
from cirl.model import ModelConfig
from cirl.objective_trainer import TrainConfig
from cirl.synthcorpus.generate import CorpusConfig


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_str(text: str) -> str:
    return text


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


@dataclass
class RunConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval_k: tuple[int, ...] = (1, 5, 10, 50)
    eval_subset_k: tuple[int, ...] = (1, 2, 5)
    seed: int = 42

    def validate(self) -> None:
        self.corpus.validate()
        # the model consumes the corpus render geometry
        self.model.d_raw = self.corpus.d_raw
        self.model.validate()
        self.train.seed = self.seed
        self.train.validate()
        if not self.eval_k:
            raise InvalidConfig("eval.k_list must not be empty")
        if any(k < 1 for k in self.eval_k + self.eval_subset_k):
            raise InvalidConfig("recall cutoffs must be >= 1")


# key -> (section attribute, field name, parser); section None = RunConfig itself
_KEYS: dict[str, tuple[str | None, str, callable]] = {}
for _f in dataclasses.fields(CorpusConfig):
    _KEYS[f"corpus.{_f.name}"] = ("corpus", _f.name, _parse_float if _f.type == "float" else _parse_int)
for _f in dataclasses.fields(ModelConfig):
    if _f.name == "d_raw":
        continue  # derived from corpus.d_raw
    parser = _parse_float if _f.type == "float" else (_parse_str if _f.type == "str" else _parse_int)
    _KEYS[f"model.{_f.name}"] = ("model", _f.name, parser)
for _f in dataclasses.fields(TrainConfig):
    if _f.name == "seed":
        continue  # derived from the run seed
    parser = _parse_float if _f.type == "float" else _parse_int
    _KEYS[f"train.{_f.name}"] = ("train", _f.name, parser)
_KEYS["eval.k_list"] = (None, "eval_k", _parse_int_list)
_KEYS["eval.subset_k_list"] = (None, "eval_subset_k", _parse_int_list)
_KEYS["seed"] = (None, "seed", _parse_int)


def parse_config_file(path) -> dict[str, str]:
    """Read ``key = value`` lines; returns raw strings keyed by name."""
    raw: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise InvalidConfig(f"{path}:{line_no}: expected 'key = value'")
            key, value = (part.strip() for part in stripped.split("=", 1))
            if key in raw:
                raise InvalidConfig(f"{path}:{line_no}: duplicate key {key!r}")
            raw[key] = value
    return raw


def build_run_config(file_values: dict[str, str] | None = None,
                     flag_values: dict[str, str] | None = None) -> tuple[RunConfig, dict]:
    """Merge defaults, file values and flag values (ascending precedence).

    Returns (config, provenance) where provenance maps each known key to
    "default", "file" or "flag".
    """
    config = RunConfig()
    provenance = {key: "default" for key in _KEYS}
    for source_name, values in (("file", file_values), ("flag", flag_values)):
        if not values:
            continue
        for key, text in values.items():
            if key not in _KEYS:
                raise InvalidConfig(f"unknown config key {key!r}")
            section, attr, parser = _KEYS[key]
            try:
                value = parser(text)
            except ValueError as exc:
                raise InvalidConfig(f"bad value for {key}: {text!r}") from exc
            target = config if section is None else getattr(config, section)
            setattr(target, attr, value)
            provenance[key] = source_name
    config.validate()
    return config, provenance


def current_value(config: RunConfig, key: str):
    section, attr, _ = _KEYS[key]
    target = config if section is None else getattr(config, section)
    value = getattr(target, attr)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return value


def effective_config_text(config: RunConfig, provenance: dict | None = None) -> str:
    """Canonical dump; parseable by :func:`parse_config_file`."""
    lines = []
    for key in sorted(_KEYS):
        value = current_value(config, key)
        note = f"  # {provenance[key]}" if provenance else ""
        lines.append(f"{key} = {value}{note}")
    return "\n".join(lines) + "\n"
