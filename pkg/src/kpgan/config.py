"""Run configuration: INI-style ``[section]`` blocks of ``key = value`` pairs."""

import configparser
from dataclasses import asdict, dataclass, field, fields

from .corpus import ConfigError
from .training import TrainConfig


@dataclass
class CorpusConfig:
    vocab_size: int = 10000
    max_src_len: int = 200
    max_phrases: int = 20
    max_phrase_len: int = 6

    def __post_init__(self):
        if self.vocab_size <= 5:
            raise ConfigError("corpus.vocab_size must exceed 5")
        for name in ("max_src_len", "max_phrases", "max_phrase_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"corpus.{name} must be >= 1")


@dataclass
class ModelConfig:
    emb_dim: int = 64
    hidden_dim: int = 128
    disc_emb_dim: int = 64
    disc_hidden_dim: int = 128

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ConfigError(f"model.{f.name} must be >= 1")


@dataclass
class RunConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self):
        return {"corpus": asdict(self.corpus), "model": asdict(self.model), "train": asdict(self.train)}

    @classmethod
    def from_dict(cls, data):
        sections = {"corpus": CorpusConfig, "model": ModelConfig, "train": TrainConfig}
        unknown = set(data) - set(sections)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        built = {}
        for name, kind in sections.items():
            values = dict(data.get(name, {}))
            known = {f.name: f.type for f in fields(kind)}
            extra = set(values) - set(known)
            if extra:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
            built[name] = kind(**{k: _coerce(name, k, v, known[k]) for k, v in values.items()})
        return cls(**built)


def _coerce(section, key, value, kind):
    kind = kind if isinstance(kind, type) else {"int": int, "float": float}[kind]
    if isinstance(value, kind) and not isinstance(value, bool):
        return value
    try:
        if kind is int:
            return int(str(value).strip())
        return float(str(value).strip())
    except ValueError:
        raise ConfigError(f"{section}.{key}: expected {kind.__name__}, got {value!r}") from None


def load_config(path=None, overrides=()):
    """Read ``path`` (optional) then apply ``section.key=value`` overrides."""
    data = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            data[section] = dict(parser.items(section))
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        data.setdefault(section, {})[name] = value
    return RunConfig.from_dict(data)
