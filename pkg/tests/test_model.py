import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CS, DB, LLMS, ML, NLP, RL, UNSUP, VOCAB
from oracles import FIG1_EDGES
from taxocomplete import autodiff as ad
from taxocomplete.autodiff import Tensor, grad_check
from taxocomplete.errors import (
    EmbeddingDimMismatch,
    ModelError,
    PathTooLong,
    SequenceTooLong,
    UnknownTask,
)
from taxocomplete.loss import LossConfig
from taxocomplete.model import (
    STOP,
    ModelConfig,
    decode_batch,
    encode_batch,
    encode_text,
    forward,
    generator_logits,
    generator_only,
    init_parameters,
    next_label_probs,
    task_key_mask,
    trainable_parameters,
)
from taxocomplete.tasks import decompose
from taxocomplete.taxonomy import Taxonomy, load_taxonomy
from taxocomplete.training import Example, batch_objective, training_pairs

SMALL = ModelConfig(d_text=8, d_label=8, n_encoders=1, n_decoders=1, n_heads=2, vocab_size=20,
                    max_text_len=12, max_path_len=6)


@pytest.fixture
def model(fig1, fig1_tasks):
    return init_parameters(SMALL, fig1, fig1_tasks, seed=3)


def test_same_seed_bit_identical(fig1, fig1_tasks):
    a = init_parameters(SMALL, fig1, fig1_tasks, seed=5)
    b = init_parameters(SMALL, fig1, fig1_tasks, seed=5)
    c = init_parameters(SMALL, fig1, fig1_tasks, seed=6)
    assert a.to_arrays().keys() == b.to_arrays().keys()
    assert all(np.array_equal(a[n].data, b[n].data) for n in a.tensors)
    assert not np.array_equal(a["adapter.w"].data, c["adapter.w"].data)


def test_pretrained_rows(fig1, fig1_tasks):
    cfg = ModelConfig(d_text=8, d_label=8, n_encoders=1, n_decoders=1, n_heads=2, vocab_size=5)
    base = init_parameters(cfg, fig1, fig1_tasks, seed=0)
    vecs = {2: np.full(8, 0.5), 4: np.arange(8.0)}
    got = init_parameters(cfg, fig1, fig1_tasks, seed=0, embeddings=vecs)
    diff = np.any(base["text_embedding"].data != got["text_embedding"].data, axis=1)
    assert diff.tolist() == [False, False, True, False, True]
    assert np.array_equal(got["text_embedding"].data[4], np.arange(8.0))
    with pytest.raises(EmbeddingDimMismatch):
        init_parameters(cfg, fig1, fig1_tasks, embeddings={1: np.ones(3)})


def test_config_validation():
    with pytest.raises(ModelError):
        ModelConfig(d_text=10, n_heads=4)
    full = ModelConfig.full_scale(vocab_size=100)
    assert (full.d_text, full.d_label, full.n_encoders, full.n_heads) == (300, 600, 6, 12)


def test_encode_shapes_and_order(model):
    mem = encode_text(model, [3, 4, 5, 6])
    assert mem.shape == (4, SMALL.d_label)
    assert np.all(np.isfinite(mem.data))
    swapped = encode_text(model, [4, 3, 5, 6])
    assert not np.allclose(mem.data, swapped.data)
    empty = encode_text(model, [])
    assert empty.shape == (1, SMALL.d_label)
    with pytest.raises(SequenceTooLong):
        encode_text(model, list(range(1, 14)))


def test_forward_support_and_sum(model, fig1_tasks):
    mem = encode_text(model, [1, 2, 3])
    dist = forward(model, mem, (CS,), 2)
    assert dist.labels == (ML, LLMS, RL, UNSUP, STOP)
    assert abs(dist.probs.sum() - 1) < 1e-9
    assert np.all((dist.probs > 0) & (dist.probs < 1))
    dist = forward(model, mem, (CS, ML, RL), 2)
    assert set(dist.labels) == set(fig1_tasks.task(2).members) | {STOP}
    with pytest.raises(UnknownTask):
        forward(model, mem, (CS,), 7)
    with pytest.raises(PathTooLong):
        forward(model, mem, (CS,) + (ML,) * 6, 2)


def test_batched_probs_match_single(model):
    mem = encode_text(model, [1, 2, 3])
    prefixes = [(CS,), (CS, ML), (CS, NLP, LLMS)]
    batch = next_label_probs(model, mem, prefixes, 2)
    for row, p in zip(batch, prefixes):
        assert np.allclose(row, forward(model, mem, p, 2).probs, rtol=0, atol=1e-12)


def test_task_mask_hides_out_of_task_positions(model):
    ids = np.array([[model.bos, NLP, LLMS]])
    pad = np.zeros((1, 3), dtype=bool)
    mask = task_key_mask(model, ids, pad, 2)[0]
    # the query at the last position sees BOS and LLMs, not NLP
    assert mask[2].tolist() == [False, True, False]
    task0 = task_key_mask(model, ids, pad, 0)[0]
    assert task0[2].tolist() == [False, False, False]


def _decoder_inputs(model, prefix):
    mem, mem_pad = encode_batch(model, [[1, 2, 3]])
    y, ids, pad = decode_batch(model, mem, mem_pad, [prefix])
    return mem, mem_pad, y, ids, pad


def test_masked_position_is_never_read(model):
    mem, mem_pad, y, ids, pad = _decoder_inputs(model, (CS, NLP, LLMS))
    poked = y.data.copy()
    poked[0, 1] = np.random.default_rng(0).normal(size=poked.shape[-1]) * 100
    with ad.no_grad():
        base = generator_logits(model, 2, y, mem, mem_pad, ids, pad).data
        moved = generator_logits(model, 2, Tensor(poked), mem, mem_pad, ids, pad).data
        # in task(NLP) the same position is visible and the change propagates
        base0 = generator_logits(model, 0, y, mem, mem_pad, ids, pad).data
        moved0 = generator_logits(model, 0, Tensor(poked), mem, mem_pad, ids, pad).data
    assert np.array_equal(base[0, [0, 2]], moved[0, [0, 2]])
    assert not np.allclose(base0[0, 2], moved0[0, 2])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2), st.integers(0, 2**31))
def test_generator_isolation(task, seed):
    t = load_taxonomy(FIG1_EDGES)
    d = decompose(t)
    model = init_parameters(SMALL, t, d, seed=1)
    mem = encode_text(model, [4, 5])
    others = [j for j in range(3) if j != task]
    before = {j: forward(model, mem, (CS,), j).probs for j in others}
    rng = np.random.default_rng(seed)
    for name in model.generator_names(task):
        model[name].data += rng.normal(size=model[name].shape)
    for j in others:
        assert np.array_equal(before[j], forward(model, mem, (CS,), j).probs)


def test_trainable_parameter_views(model, fig1_tasks):
    everything = trainable_parameters(model, "all")
    assert {v.name for v in everything} == set(model.tensors)
    views = trainable_parameters(model, generator_only(2))
    names = {v.name for v in views}
    assert names == set(model.generator_names(2)) | {"label_embedding"}
    assert not any(n.startswith(("gen.0.", "gen.1.")) for n in names)
    rows = [v.rows for v in views if v.name == "label_embedding"][0]
    assert rows.tolist() == sorted(fig1_tasks.task(2).members)
    n_gen = sum(model[n].data.size for n in model.generator_names(2))
    counted = sum(v.tensor.data.size if v.rows is None else len(v.rows) * v.tensor.shape[1] for v in views)
    assert counted == n_gen + 4 * SMALL.d_label
    with pytest.raises(UnknownTask):
        trainable_parameters(model, generator_only(9))


def _toy():
    t = Taxonomy(["r", "a", "b", "a1", "a2", "b1"], [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (1, 5)])
    d = decompose(t)
    cfg = ModelConfig(d_text=4, d_label=4, n_encoders=1, n_decoders=1, n_heads=2, vocab_size=6,
                      max_text_len=5, max_path_len=4)
    return t, d, init_parameters(cfg, t, d, seed=11)


def test_full_loss_gradient_two_task_toy():
    t, d, params = _toy()
    assert len(d) == 2
    docs = [Example("x", (1, 2, 3), frozenset({0, 1, 3})),
            Example("y", (4, 5), frozenset({0, 1, 2, 5}))]
    batch = [(ex, training_pairs(t, d, ex.labels)) for ex in docs]
    cfg = LossConfig(0.1)
    worst = 0.0
    for name, tensor in params.tensors.items():
        def f(_):
            loss, _, _ = batch_objective(params, t, batch, cfg)
            return loss
        worst = max(worst, grad_check(f, tensor, h=1e-5))
    assert worst < 1e-4


def test_loss_ignores_labels_outside_task(fig1, fig1_tasks):
    # same model, plus an extra label that only lives in another task
    big = load_taxonomy(FIG1_EDGES + [("Database", "Indexing")])
    dbig = decompose(big)
    a = init_parameters(SMALL, fig1, fig1_tasks, seed=2)
    b = init_parameters(SMALL, big, dbig, seed=2)
    for name in a.tensors:
        if name == "label_embedding":
            rows = b[name].data
            rows[:8] = a[name].data[:8]
            rows[b.bos] = a[name].data[a.bos]
            rows[b.stop_row] = a[name].data[a.stop_row]
        elif not name.startswith("gen.1."):
            b[name].data[...] = a[name].data
    ex = Example("d", (1, 2), frozenset({CS, ML, RL}))
    la, _, _ = batch_objective(a, fig1, [(ex, training_pairs(fig1, fig1_tasks, ex.labels))], LossConfig())
    lb, _, _ = batch_objective(b, big, [(ex, training_pairs(big, dbig, ex.labels))], LossConfig())
    assert la.item() == lb.item()
