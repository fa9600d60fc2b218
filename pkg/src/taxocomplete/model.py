"""Shared encoder/decoder transformer with one generator head per task.

Documents go through a text encoder stack and an adapter into the label
width. Label paths go through a shared decoder stack (causal self-attention,
cross-attention to the document). A task-specific generator then runs one
more decoder block, in which prefix positions holding labels outside the
task are hidden from attention, and projects onto the task's labels plus a
STOP symbol.

Path inputs replace the global root with a BOS row of the label embedding;
the root is never predicted.
"""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import (
    EmbeddingDimMismatch,
    ModelError,
    PathTooLong,
    SequenceTooLong,
    UnknownTask,
)
from .tasks import TatDecomposition
from .taxonomy import Taxonomy

__all__ = [
    "STOP",
    "PAD_ID",
    "ModelConfig",
    "ModelParameters",
    "NextLabelDistribution",
    "ParamView",
    "generator_only",
    "init_parameters",
    "add_generator",
    "encode_text",
    "encode_batch",
    "decode_batch",
    "generator_logits",
    "forward",
    "next_label_probs",
    "trainable_parameters",
]

STOP = -1
PAD_ID = 0


@dataclass(frozen=True)
class ModelConfig:
    d_text: int = 32
    d_label: int = 64
    n_encoders: int = 2
    n_decoders: int = 2
    n_heads: int = 4
    vocab_size: int = 512
    max_text_len: int = 64
    max_path_len: int = 16
    label_smoothing: float = 0.01
    ff_mult: int = 2
    dropout: float = 0.0

    def __post_init__(self):
        for name in ("d_text", "d_label", "n_heads", "vocab_size", "max_text_len", "max_path_len", "ff_mult"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be positive")
        if self.d_text % self.n_heads or self.d_label % self.n_heads:
            raise ModelError("d_text and d_label must be divisible by n_heads")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ModelError("label_smoothing must lie in [0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError("dropout must lie in [0, 1)")

    @classmethod
    def full_scale(cls, vocab_size, max_text_len=512, max_path_len=16):
        return cls(d_text=300, d_label=600, n_encoders=6, n_decoders=6, n_heads=12,
                   vocab_size=vocab_size, max_text_len=max_text_len,
                   max_path_len=max_path_len, ff_mult=4)

    def to_dict(self):
        return asdict(self)


@dataclass
class ModelParameters:
    config: ModelConfig
    n_labels: int
    root: int
    tensors: dict
    # task id -> sorted member label ids, one entry per generator present
    task_members: dict = field(default_factory=dict)
    task_widths: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def bos(self):
        return self.n_labels

    @property
    def stop_row(self):
        return self.n_labels + 1

    def generator_tasks(self):
        return sorted(self.task_members)

    def member_index(self, task_id):
        if task_id not in self.task_members:
            raise UnknownTask(task_id)
        return {label: i for i, label in enumerate(self.task_members[task_id])}

    def n_outputs(self, task_id):
        if task_id not in self.task_members:
            raise UnknownTask(task_id)
        return len(self.task_members[task_id]) + 1

    def __getitem__(self, name):
        return self.tensors[name]

    def shared_names(self):
        return [n for n in self.tensors if not n.startswith("gen.")]

    def generator_names(self, task_id):
        prefix = f"gen.{task_id}."
        return [n for n in self.tensors if n.startswith(prefix)]

    def to_arrays(self):
        return {n: t.data for n, t in self.tensors.items()}

    def meta(self):
        return {
            "config": self.config.to_dict(),
            "n_labels": self.n_labels,
            "root": self.root,
            "seed": self.seed,
            "task_members": {str(k): list(v) for k, v in sorted(self.task_members.items())},
            "task_widths": {str(k): v for k, v in sorted(self.task_widths.items())},
        }

    @classmethod
    def from_arrays(cls, arrays, meta):
        cfg = ModelConfig(**meta["config"])
        tensors = {n: Tensor(np.array(a, dtype=np.float64)) for n, a in arrays.items()}
        return cls(cfg, meta["n_labels"], meta["root"], tensors,
                   {int(k): tuple(v) for k, v in meta["task_members"].items()},
                   {int(k): int(v) for k, v in meta["task_widths"].items()},
                   meta.get("seed", 0))

    def copy(self):
        return ModelParameters(self.config, self.n_labels, self.root,
                               {n: Tensor(t.data.copy()) for n, t in self.tensors.items()},
                               dict(self.task_members), dict(self.task_widths), self.seed)


@dataclass(frozen=True)
class NextLabelDistribution:
    task_id: int
    labels: tuple  # task members in id order, then STOP
    probs: np.ndarray
    tensor: Tensor | None = None

    def prob(self, label):
        return float(self.probs[self.labels.index(label)])

    def as_dict(self):
        return dict(zip(self.labels, self.probs.tolist()))


@dataclass(frozen=True)
class ParamView:
    name: str
    tensor: Tensor
    rows: np.ndarray | None = None  # restrict updates to these rows


@dataclass(frozen=True)
class generator_only:
    task_id: int


# -- initialisation --------------------------------------------------------

def _rng_for(seed, name):
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def _glorot(seed, name, fan_in, fan_out):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(_rng_for(seed, name).uniform(-a, a, size=(fan_in, fan_out)), requires_grad=True)


def _embed(seed, name, rows, dim):
    a = np.sqrt(3.0 / dim)
    return Tensor(_rng_for(seed, name).uniform(-a, a, size=(rows, dim)), requires_grad=True)


def _zeros(*shape):
    return Tensor(np.zeros(shape), requires_grad=True)


def _ones(*shape):
    return Tensor(np.ones(shape), requires_grad=True)


def _attn_params(out, seed, prefix, d):
    for w in ("wq", "wk", "wv", "wo"):
        out[f"{prefix}.{w}"] = _glorot(seed, f"{prefix}.{w}", d, d)


def _ln_params(out, prefix, d):
    out[f"{prefix}.g"] = _ones(d)
    out[f"{prefix}.b"] = _zeros(d)


def _ff_params(out, seed, prefix, d, mult):
    out[f"{prefix}.w1"] = _glorot(seed, f"{prefix}.w1", d, mult * d)
    out[f"{prefix}.b1"] = _zeros(mult * d)
    out[f"{prefix}.w2"] = _glorot(seed, f"{prefix}.w2", mult * d, d)
    out[f"{prefix}.b2"] = _zeros(d)


def _decoder_block_params(out, seed, prefix, cfg):
    d = cfg.d_label
    _attn_params(out, seed, f"{prefix}.self", d)
    _ln_params(out, f"{prefix}.ln1", d)
    _attn_params(out, seed, f"{prefix}.cross", d)
    _ln_params(out, f"{prefix}.ln2", d)
    _ff_params(out, seed, f"{prefix}.ff", d, cfg.ff_mult)
    _ln_params(out, f"{prefix}.ln3", d)


def _generator_params(seed, task_id, n_members, cfg):
    out = {}
    prefix = f"gen.{task_id}"
    _decoder_block_params(out, seed, f"{prefix}.dec", cfg)
    out[f"{prefix}.out.w"] = _glorot(seed, f"{prefix}.out.w", cfg.d_label, n_members + 1)
    out[f"{prefix}.out.b"] = _zeros(n_members + 1)
    return out


def init_parameters(cfg: ModelConfig, t: Taxonomy, d: TatDecomposition, seed: int = 0,
                    embeddings: dict | None = None, tasks=None) -> ModelParameters:
    """Randomly initialise every tensor from ``seed``.

    Each tensor draws from its own generator keyed by ``(seed, name)``, so a
    model built without some generator heads shares every other tensor
    bit-for-bit with the full model.

    Parameters
    ----------
    embeddings : dict, optional
        Maps vocabulary row ids to pretrained text vectors of width
        ``cfg.d_text``; those rows overwrite the random text embedding.
    tasks : iterable of int, optional
        Task ids that receive a generator; all tasks when omitted.
    """
    tensors = {}
    tensors["text_embedding"] = _embed(seed, "text_embedding", cfg.vocab_size, cfg.d_text)
    if embeddings:
        table = tensors["text_embedding"].data
        for row, vec in embeddings.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (cfg.d_text,):
                raise EmbeddingDimMismatch(
                    f"pretrained vector for row {row} has shape {vec.shape}, expected ({cfg.d_text},)")
            if not 0 <= row < cfg.vocab_size:
                raise EmbeddingDimMismatch(f"pretrained row {row} outside vocabulary of {cfg.vocab_size}")
            table[row] = vec
    for i in range(cfg.n_encoders):
        p = f"enc.{i}"
        _attn_params(tensors, seed, f"{p}.attn", cfg.d_text)
        _ln_params(tensors, f"{p}.ln1", cfg.d_text)
        _ff_params(tensors, seed, f"{p}.ff", cfg.d_text, cfg.ff_mult)
        _ln_params(tensors, f"{p}.ln2", cfg.d_text)
    tensors["adapter.w"] = _glorot(seed, "adapter.w", cfg.d_text, cfg.d_label)
    tensors["adapter.b"] = _zeros(cfg.d_label)
    tensors["label_embedding"] = _embed(seed, "label_embedding", len(t) + 2, cfg.d_label)
    for i in range(cfg.n_decoders):
        _decoder_block_params(tensors, seed, f"dec.{i}", cfg)

    params = ModelParameters(cfg, len(t), t.root, tensors, seed=seed)
    wanted = range(len(d)) if tasks is None else sorted(tasks)
    for task_id in wanted:
        add_generator(params, d, task_id)
    return params


def add_generator(params: ModelParameters, d: TatDecomposition, task_id: int):
    """Create (or re-create) the generator head of one task in place."""
    task = d.task(task_id)
    members = task.sorted_members
    params.tensors.update(_generator_params(params.seed, task.task_id, len(members), params.config))
    params.task_members[task.task_id] = members
    params.task_widths[task.task_id] = task.width
    return params


def drop_generator(params: ModelParameters, task_id: int):
    for name in params.generator_names(task_id):
        del params.tensors[name]
    params.task_members.pop(task_id, None)
    params.task_widths.pop(task_id, None)
    return params


# -- building blocks -------------------------------------------------------

def sinusoidal(length, dim):
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def _attention(P, prefix, xq, xkv, mask, n_heads):
    B, Lq, dim = xq.shape
    Lk = xkv.shape[1]
    dk = dim // n_heads
    q = (xq @ P[f"{prefix}.wq"]).reshape(B, Lq, n_heads, dk).transpose(0, 2, 1, 3)
    k = (xkv @ P[f"{prefix}.wk"]).reshape(B, Lk, n_heads, dk).transpose(0, 2, 3, 1)
    v = (xkv @ P[f"{prefix}.wv"]).reshape(B, Lk, n_heads, dk).transpose(0, 2, 1, 3)
    scores = (q @ k) * (1.0 / np.sqrt(dk))
    if mask is not None:
        scores = ad.mask_fill(scores, mask[:, None, :, :])
    att = ad.softmax(scores, axis=-1)
    ctx = (att @ v).transpose(0, 2, 1, 3).reshape(B, Lq, dim)
    return ctx @ P[f"{prefix}.wo"]


def _ln(P, prefix, x):
    return ad.layer_norm(x, P[f"{prefix}.g"], P[f"{prefix}.b"])


def _ff(P, prefix, x):
    h = ad.relu(x @ P[f"{prefix}.w1"] + P[f"{prefix}.b1"])
    return h @ P[f"{prefix}.w2"] + P[f"{prefix}.b2"]


def _drop(x, cfg, rng):
    return ad.dropout(x, cfg.dropout, rng) if rng is not None else x


def _decoder_block(P, prefix, cfg, y, mem, self_mask, cross_mask, rng=None):
    y = _ln(P, f"{prefix}.ln1", y + _drop(_attention(P, f"{prefix}.self", y, y, self_mask, cfg.n_heads), cfg, rng))
    y = _ln(P, f"{prefix}.ln2", y + _drop(_attention(P, f"{prefix}.cross", y, mem, cross_mask, cfg.n_heads), cfg, rng))
    return _ln(P, f"{prefix}.ln3", y + _drop(_ff(P, f"{prefix}.ff", y), cfg, rng))


# -- forward passes --------------------------------------------------------

def _pad_tokens(token_lists, cfg):
    seqs = []
    for toks in token_lists:
        toks = list(toks)
        if len(toks) > cfg.max_text_len:
            raise SequenceTooLong(f"document has {len(toks)} tokens, limit {cfg.max_text_len}")
        seqs.append(toks if toks else [PAD_ID])
    L = max(len(s) for s in seqs)
    ids = np.full((len(seqs), L), PAD_ID, dtype=np.int64)
    pad = np.ones((len(seqs), L), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        pad[i, :len(s)] = False
    if ids.max() >= cfg.vocab_size or ids.min() < 0:
        raise ModelError("token id outside the vocabulary")
    return ids, pad


def encode_batch(params: ModelParameters, token_lists, rng=None):
    """Encode several documents; returns ``(memory (B, L, d_label), key padding mask)``."""
    cfg, P = params.config, params.tensors
    ids, pad = _pad_tokens(token_lists, cfg)
    B, L = ids.shape
    x = ad.embedding_lookup(P["text_embedding"], ids) * np.sqrt(cfg.d_text)
    x = x + sinusoidal(L, cfg.d_text)
    mask = np.broadcast_to(pad[:, None, :], (B, L, L))
    for i in range(cfg.n_encoders):
        p = f"enc.{i}"
        x = _ln(P, f"{p}.ln1", x + _drop(_attention(P, f"{p}.attn", x, x, mask, cfg.n_heads), cfg, rng))
        x = _ln(P, f"{p}.ln2", x + _drop(_ff(P, f"{p}.ff", x), cfg, rng))
    mem = x @ P["adapter.w"] + P["adapter.b"]
    return mem, pad


def encode_text(params: ModelParameters, token_ids):
    """Contextual encoding of one document, shape ``(len, d_label)``.

    An empty document is encoded as a single padding token.
    """
    mem, _ = encode_batch(params, [token_ids])
    return mem[0]


def _path_inputs(params, prefixes):
    cfg = params.config
    K = max(len(p) for p in prefixes)
    if K > cfg.max_path_len:
        raise PathTooLong(f"path of length {K} exceeds max_path_len {cfg.max_path_len}")
    ids = np.full((len(prefixes), K), params.bos, dtype=np.int64)
    pad = np.ones((len(prefixes), K), dtype=bool)
    for i, p in enumerate(prefixes):
        if not p:
            raise PathTooLong("empty path prefix")
        ids[i, 1:len(p)] = p[1:]
        pad[i, :len(p)] = False
    return ids, pad


def decode_batch(params: ModelParameters, mem, mem_pad, prefixes, rng=None):
    """Run the shared decoder stack over label paths.

    ``mem`` holds one memory row per prefix (already gathered). Returns the
    decoder states ``(S, K, d_label)`` and the label ids and padding mask
    used as input.
    """
    cfg, P = params.config, params.tensors
    ids, pad = _path_inputs(params, prefixes)
    S, K = ids.shape
    y = ad.embedding_lookup(P["label_embedding"], ids) * np.sqrt(cfg.d_label)
    y = y + sinusoidal(K, cfg.d_label)
    causal = np.triu(np.ones((K, K), dtype=bool), 1)
    self_mask = causal[None, :, :] | pad[:, None, :]
    cross_mask = np.broadcast_to(mem_pad[:, None, :], (S, K, mem_pad.shape[1]))
    for i in range(cfg.n_decoders):
        y = _decoder_block(P, f"dec.{i}", cfg, y, mem, self_mask, cross_mask, rng)
    return y, ids, pad


def task_key_mask(params, ids, pad, task_id):
    """Attention mask of the task decoder: causal, padding, and out-of-task keys.

    The BOS position (the global root) is always visible.
    """
    members = np.zeros(params.n_labels + 2, dtype=bool)
    members[list(params.task_members[task_id])] = True
    members[params.bos] = True
    hidden = ~members[ids] | pad
    K = ids.shape[1]
    causal = np.triu(np.ones((K, K), dtype=bool), 1)
    return causal[None, :, :] | hidden[:, None, :]


def generator_logits(params: ModelParameters, task_id, y, mem, mem_pad, ids, pad, rng=None):
    """Task generator: masked decoder block and projection, ``(S, K, |T|+1)`` logits."""
    if task_id not in params.task_members:
        raise UnknownTask(task_id)
    cfg, P = params.config, params.tensors
    prefix = f"gen.{task_id}"
    mask = task_key_mask(params, ids, pad, task_id)
    cross_mask = np.broadcast_to(mem_pad[:, None, :], (ids.shape[0], ids.shape[1], mem_pad.shape[1]))
    h = _decoder_block(P, f"{prefix}.dec", cfg, y, mem, mask, cross_mask, rng)
    return h @ P[f"{prefix}.out.w"] + P[f"{prefix}.out.b"]


def _check_prefix(params, prefix):
    prefix = tuple(prefix)
    if not prefix or prefix[0] != params.root:
        raise ModelError("path prefix must start at the global root")
    if len(prefix) > params.config.max_path_len:
        raise PathTooLong(f"path of length {len(prefix)} exceeds max_path_len")
    return prefix


def forward(params: ModelParameters, memory: Tensor, path_prefix, task_id) -> NextLabelDistribution:
    """Distribution over the task's labels plus STOP following ``path_prefix``."""
    if task_id not in params.task_members:
        raise UnknownTask(task_id)
    prefix = _check_prefix(params, path_prefix)
    mem = memory.reshape(1, *memory.shape)
    mem_pad = np.zeros((1, memory.shape[0]), dtype=bool)
    y, ids, pad = decode_batch(params, mem, mem_pad, [prefix])
    logits = generator_logits(params, task_id, y, mem, mem_pad, ids, pad)
    probs = ad.softmax(logits[0, len(prefix) - 1], axis=-1)
    labels = params.task_members[task_id] + (STOP,)
    return NextLabelDistribution(task_id, labels, probs.data.copy(), probs)


def next_label_probs(params: ModelParameters, memory: Tensor, prefixes, task_id) -> np.ndarray:
    """Batched, gradient-free next-label probabilities, shape ``(n, |T|+1)``."""
    if task_id not in params.task_members:
        raise UnknownTask(task_id)
    prefixes = [_check_prefix(params, p) for p in prefixes]
    with ad.no_grad():
        n = len(prefixes)
        mem = Tensor(np.broadcast_to(memory.data, (n,) + memory.shape))
        mem_pad = np.zeros((n, memory.shape[0]), dtype=bool)
        y, ids, pad = decode_batch(params, mem, mem_pad, prefixes)
        logits = generator_logits(params, task_id, y, mem, mem_pad, ids, pad)
        last = np.array([len(p) - 1 for p in prefixes])
        out = ad.softmax(logits.data[np.arange(n), last], axis=-1)
    return out.data


def trainable_parameters(params: ModelParameters, scope="all") -> list:
    """Tensors that receive updates under ``scope``.

    ``"all"`` yields every tensor. ``generator_only(i)`` yields task ``i``'s
    generator plus the label-embedding rows of that task's labels; shared
    tensors and other generators are excluded.
    """
    if scope == "all":
        return [ParamView(n, t) for n, t in params.tensors.items()]
    if isinstance(scope, generator_only):
        i = scope.task_id
        if i not in params.task_members:
            raise UnknownTask(i)
        views = [ParamView(n, params.tensors[n]) for n in params.generator_names(i)]
        rows = np.array(params.task_members[i], dtype=np.int64)
        views.append(ParamView("label_embedding", params.tensors["label_embedding"], rows))
        return views
    raise ModelError(f"unknown parameter scope {scope!r}")
