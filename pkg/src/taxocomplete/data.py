"""Corpus, vocabulary, embedding and configuration input/output."""
from __future__ import annotations

import configparser
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DimMismatch,
    DuplicateDocId,
    MalformedJson,
    UnknownLabel,
)

__all__ = [
    "Document",
    "EmbeddingTable",
    "Vocabulary",
    "load_corpus",
    "parse_corpus",
    "write_corpus",
    "tokenize",
    "split_words",
    "build_vocabulary",
    "load_embeddings",
    "DataConfig",
    "TrainConfig",
    "SyntheticSpec",
    "RunConfig",
    "load_config",
]

log = logging.getLogger(__name__)

PAD, OOV = "<pad>", "<oov>"
_WORD = re.compile(r"[^0-9a-z]+")


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    labels: tuple

    def to_json(self):
        return {"doc_id": self.doc_id, "text": self.text, "labels": list(self.labels)}


def parse_corpus(lines, taxonomy=None) -> list:
    docs, seen = [], set()
    for lineno, raw in enumerate(lines, 1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedJson(lineno, exc.msg) from None
        if not isinstance(obj, dict):
            raise MalformedJson(lineno, "expected a JSON object")
        missing = {"doc_id", "text", "labels"} - obj.keys()
        if missing:
            raise MalformedJson(lineno, f"missing keys {sorted(missing)}")
        doc_id, text, labels = obj["doc_id"], obj["text"], obj["labels"]
        if not isinstance(doc_id, str) or not isinstance(text, str) or not isinstance(labels, list):
            raise MalformedJson(lineno, "doc_id and text must be strings, labels a list")
        if doc_id in seen:
            raise DuplicateDocId(doc_id, lineno)
        seen.add(doc_id)
        if taxonomy is not None:
            for lab in labels:
                if not isinstance(lab, str) or lab not in taxonomy:
                    raise UnknownLabel(lab, doc_id)
        docs.append(Document(doc_id, text, tuple(labels)))
    return docs


def load_corpus(path, taxonomy=None) -> list:
    """Read a JSONL corpus; each line holds ``doc_id``, ``text`` and ``labels``."""
    with open(path, encoding="utf-8") as fh:
        docs = parse_corpus(fh, taxonomy)
    if not docs:
        log.warning("corpus %s is empty", path)
    return docs


def write_corpus(path, docs):
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps(d.to_json(), ensure_ascii=False) + "\n")


def split_words(text: str) -> list:
    return [w for w in _WORD.split(text.lower()) if w]


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple  # index = token id; 0 is PAD, 1 is OOV

    def __post_init__(self):
        object.__setattr__(self, "_index", {tok: i for i, tok in enumerate(self.tokens)})

    @property
    def index(self):
        return self._index

    def __len__(self):
        return len(self.tokens)

    def token(self, i):
        return self.tokens[i]

    def id(self, tok):
        return self.index.get(tok, 1)


def build_vocabulary(texts, min_freq=2) -> Vocabulary:
    counts = Counter(w for t in texts for w in split_words(t))
    kept = sorted(w for w, c in counts.items() if c >= min_freq)
    return Vocabulary((PAD, OOV) + tuple(kept))


def tokenize(text: str, vocab: Vocabulary, max_len=None) -> list:
    """Lower-case, split on non-alphanumeric runs and map to ids.

    Empty text maps to ``[PAD]``; unknown words map to the OOV id.
    """
    index = vocab.index
    ids = [index.get(w, 1) for w in split_words(text)]
    if max_len is not None:
        ids = ids[:max_len]
    return ids or [0]


@dataclass
class EmbeddingTable:
    vectors: dict
    dim: int

    def __len__(self):
        return len(self.vectors)

    def coverage(self, vocab: Vocabulary) -> float:
        words = [t for t in vocab.tokens[2:]]
        if not words:
            return 0.0
        return sum(w in self.vectors for w in words) / len(words)

    def rows_for(self, vocab: Vocabulary) -> dict:
        return {i: self.vectors[t] for i, t in enumerate(vocab.tokens) if t in self.vectors}


def load_embeddings(path, expected_dim: int) -> EmbeddingTable:
    """Read ``word v1 ... vd`` lines (GloVe text format)."""
    vectors = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            parts = raw.rstrip().split(" ")
            if not parts or not parts[0]:
                continue
            word, vals = parts[0], parts[1:]
            if len(vals) != expected_dim:
                raise DimMismatch(lineno, len(vals), expected_dim)
            try:
                vec = np.array([float(v) for v in vals])
            except ValueError:
                raise DimMismatch(lineno, len(vals), expected_dim) from None
            if not np.all(np.isfinite(vec)):
                raise DimMismatch(lineno, len(vals), expected_dim)
            if word in vectors:
                log.warning("duplicate embedding for %r on line %d; keeping the last", word, lineno)
            vectors[word] = vec
    return EmbeddingTable(vectors, expected_dim)


# -- configuration ---------------------------------------------------------

@dataclass(frozen=True)
class DataConfig:
    min_freq: int = 2
    test_fraction: float = 0.2


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    weight_decay: float = 1e-2
    epochs: int = 10
    batch_size: int = 16
    seed: int = 0
    finetune_epochs: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and weight_decay must be non-negative")
        if self.epochs < 0 or self.batch_size < 1 or self.finetune_epochs < 0:
            raise ConfigError("epochs, batch_size and finetune_epochs must be positive")


@dataclass(frozen=True)
class SyntheticSpec:
    depth: int = 3
    branching: int = 3
    multi_parent_prob: float = 0.0
    docs_per_task: int = 50
    vocab_size: int = 200
    signal_strength: int = 3
    noise_words: int = 8
    extra_path_prob: float = 0.3
    stop_early_prob: float = 0.0

    def __post_init__(self):
        if self.depth < 1 or self.branching < 1:
            raise ConfigError("depth and branching must be at least 1")
        if not 0.0 <= self.multi_parent_prob <= 1.0:
            raise ConfigError("multi_parent_prob must lie in [0, 1]")


_SECTIONS = {
    "model": "model",
    "loss": "loss",
    "train": "train",
    "decode": "decode",
    "data": "data",
    "synth": "synth",
}

# config keys whose names differ from the dataclass field
_ALIASES = {("loss", "adaptive_smoothing"): "adaptive"}


@dataclass(frozen=True)
class RunConfig:
    model: object
    loss: object
    train: TrainConfig
    decode: object
    data: DataConfig
    synth: SyntheticSpec

    @classmethod
    def default(cls):
        from .decode import BeamConfig
        from .loss import LossConfig
        from .model import ModelConfig
        return cls(ModelConfig(), LossConfig(), TrainConfig(), BeamConfig(), DataConfig(), SyntheticSpec())

    def to_dict(self):
        from dataclasses import asdict
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}

    def updated(self, section, **changes):
        changes = {k: v for k, v in changes.items() if v is not None}
        if not changes:
            return self
        return replace(self, **{section: replace(getattr(self, section), **changes)})


def _coerce(value: str, current):
    if isinstance(current, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value.strip()


def load_config(path=None, base: RunConfig | None = None) -> RunConfig:
    """Read an INI-style ``key = value`` file into a :class:`RunConfig`.

    Sections are ``[model]``, ``[loss]``, ``[train]``, ``[decode]``,
    ``[data]`` and ``[synth]``; keys are the field names of the matching
    config objects (``[loss] adaptive_smoothing`` maps to ``adaptive``).
    Unknown sections or keys are errors.
    """
    cfg = base or RunConfig.default()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    try:
        with open(Path(path), encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        obj = getattr(cfg, section)
        known = {f.name: f for f in fields(obj)}
        changes = {}
        for key, raw in parser.items(section):
            name = _ALIASES.get((section, key), key)
            if name not in known:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                changes[name] = _coerce(raw, getattr(obj, name))
            except ValueError as exc:
                raise ConfigError(f"{path}: [{section}] {key}: {exc}") from None
        try:
            cfg = replace(cfg, **{section: replace(obj, **changes)})
        except Exception as exc:  # validation errors from __post_init__
            raise ConfigError(f"{path}: [{section}]: {exc}") from None
    return cfg
