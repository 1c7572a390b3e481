import math

import numpy as np
import pytest

from sewgpt import autograd as ag
from sewgpt.codec import END, START, ParamClass, QuantConfig, TokenSeq, positional_meta
from sewgpt.conditioning import CondEmbedding
from sewgpt.errors import ConfigError, TokenOutOfRange
from sewgpt.gradcheck import TINY, gradcheck, random_batch
from sewgpt.model import (ModelConfig, as_tensors, batch_loss, check_params, embed_tokens,
                          forward, init_params, make_batch, nll_loss, param_shapes)
from sewgpt.sampling import choose_token, SamplerOptions
from sewgpt.train import loss_and_grads, mean_loss

SMALL = ModelConfig(n_layers=2, d_model=16, n_heads=4, vocab_size=64, K=2, max_panels=3,
                    d_cond_in=8)


def seq(ids, K=SMALL.K, V=SMALL.vocab_size):
    ids = list(ids)
    return TokenSeq(tuple(ids), positional_meta(ids, K), V)


def random_seq(rng, panels=2, cfg=SMALL):
    body = rng.integers(3, cfg.vocab_size, panels * cfg.panel_len).tolist()
    return seq([START] + body + [END])


def test_config_invariants():
    assert ModelConfig().max_seq_len == 2 + 119 * 12
    assert ModelConfig().d_pos == ModelConfig().d_feature == 64
    with pytest.raises(ConfigError):
        ModelConfig(d_model=10, n_heads=4)
    with pytest.raises(ConfigError):
        ModelConfig(max_seq_len=100)


def test_param_shapes_and_check():
    p = init_params(SMALL, 0)
    check_params(p, SMALL)
    assert p["slot_emb"].shape == (SMALL.panel_len, 16)
    assert p["panel_emb"].shape == (SMALL.max_panels + 1, 16)
    assert p["cls_emb"].shape == (6, 16)
    assert all(v.dtype == np.float32 for v in p.values())
    del p["head.b"]
    with pytest.raises(ConfigError):
        check_params(p, SMALL)
    off = ModelConfig(**{**SMALL.to_dict(), "slot_embedding": False})
    assert "slot_emb" not in param_shapes(off)


def test_embedding_zero_tables(rng):
    p = init_params(SMALL, 0)
    for k in ("tok_emb", "cls_emb", "panel_emb", "slot_emb"):
        p[k][:] = 0
    assert not embed_tokens(p, SMALL, random_seq(rng)).any()


def test_embedding_is_sum_of_lookups(rng):
    p = init_params(SMALL, 1)
    s = random_seq(rng)
    rows = embed_tokens(p, SMALL, s)
    for t in rng.integers(0, len(s), 10):
        panel, cls = s.meta[t]
        slot = 0 if cls == ParamClass.Special else (t - 1) % SMALL.panel_len
        want = (p["tok_emb"][s.ids[t]] + p["cls_emb"][cls] + p["panel_emb"][panel]
                + p["slot_emb"][slot])
        assert np.allclose(rows[t], want)


def test_identical_tokens_identical_rows(rng):
    p = init_params(SMALL, 1)
    a, b = random_seq(rng), random_seq(rng)
    b = seq(b.ids[:5] + a.ids[5:6] + b.ids[6:])
    assert np.array_equal(embed_tokens(p, SMALL, a)[5], embed_tokens(p, SMALL, b)[5])


def test_embed_rejects_out_of_vocab(rng):
    p = init_params(SMALL, 1)
    s = random_seq(rng)
    bad = TokenSeq(s.ids[:-1] + (SMALL.vocab_size,), s.meta, SMALL.vocab_size)
    with pytest.raises(TokenOutOfRange):
        embed_tokens(p, SMALL, bad)


def test_causality(rng):
    p = init_params(SMALL, 2)
    cond = CondEmbedding(rng.standard_normal(16))
    s = random_seq(rng)
    base = forward(p, SMALL, s, cond)
    assert np.isfinite(base).all()
    for t in rng.integers(1, len(s), 5):
        ids = list(s.ids)
        ids[t] = 3 + (ids[t] - 2) % (SMALL.vocab_size - 3)
        out = forward(p, SMALL, seq(ids), cond)
        assert np.array_equal(out[:t], base[:t])
        assert not np.allclose(out[t:], base[t:])


def test_conditioning_matters(rng):
    p = init_params(SMALL, 2)
    s = random_seq(rng)
    a = forward(p, SMALL, s, CondEmbedding(rng.standard_normal(16)))
    b = forward(p, SMALL, s, None)
    assert not np.allclose(a, b)


def test_reduced_model_is_affine(rng):
    """With every block weight zeroed, logits are LN(embedding) @ W + b."""
    p = init_params(SMALL, 3)
    for name in p:
        if name.startswith("h"):
            p[name][:] = 0
    s = random_seq(rng)
    x = embed_tokens(p, SMALL, s).astype(np.float64)
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    want = ((x - mu) / np.sqrt(var + 1e-5) * p["ln_f.g"] + p["ln_f.b"]) @ p["head.w"] + p["head.b"]
    got = forward(p, SMALL, s, CondEmbedding(rng.standard_normal(16)))
    assert np.allclose(got, want, atol=1e-4)


def test_loss_uniform_is_log_v():
    logits = np.zeros((7, 2004))
    assert nll_loss(logits, np.arange(7)) == pytest.approx(math.log(2004))


def test_loss_confident_is_zero():
    t = np.array([5, 9, 1, 1])
    logits = np.zeros((4, 20))
    logits[np.arange(4), t] = 50
    assert nll_loss(logits, t) == pytest.approx(0, abs=1e-12)


def test_loss_five_tokens_by_hand():
    logits = np.array([[0.0, 1, 2], [1, 1, 1], [3, 0, 0], [0, 0, 5], [2, 1, 0]])
    t = np.array([2, 0, 1, 2, 1])
    by_hand = []
    for row, k in zip(logits, t):
        by_hand.append(-(row[k] - math.log(sum(math.exp(v) for v in row))))
    assert nll_loss(logits, t) == pytest.approx(sum(by_hand) / 5, rel=1e-12)
    mask = [1, 1, 0, 1, 0]
    assert nll_loss(logits, t, mask) == pytest.approx(
        (by_hand[0] + by_hand[1] + by_hand[3]) / 3, rel=1e-12)


def test_loss_length_mismatch():
    with pytest.raises(ValueError):
        nll_loss(np.zeros((3, 4)), [0, 1])


def test_padding_is_masked(rng):
    p = init_params(SMALL, 4, dtype=np.float64)
    short, long = random_seq(rng, 1), random_seq(rng, 2)
    raw = rng.standard_normal((2, 8))
    both = batch_loss(as_tensors(p), SMALL, make_batch([short, long], SMALL.K, raw)).data
    a = batch_loss(as_tensors(p), SMALL, make_batch([short], SMALL.K, raw[:1])).data
    b = batch_loss(as_tensors(p), SMALL, make_batch([long], SMALL.K, raw[1:])).data
    na, nb = len(short) - 1, len(long) - 1
    assert both == pytest.approx((a * na + b * nb) / (na + nb), rel=1e-10)


def test_random_init_loss_near_log_v(rng):
    cfg = ModelConfig()
    p = init_params(cfg, 0)
    data = []
    for _ in range(4):
        body = rng.integers(3, cfg.vocab_size, 2 * cfg.panel_len).tolist()
        data.append((seq([START] + body + [END], 14, 2004), rng.standard_normal(1024)))
    assert abs(mean_loss(p, cfg, data) / math.log(2004) - 1) < 0.05


def test_gradcheck_tiny():
    res = gradcheck(TINY, n_coords=100)
    assert res.max_rel_error < 1e-4
    assert len({n.split("[")[0] for n in res.names}) == len(init_params(TINY))


def test_projection_gradient_finite_differences():
    rng = np.random.default_rng(5)
    params = init_params(TINY, 5, dtype=np.float64)
    batch = random_batch(TINY, rng)
    _, grads = loss_and_grads(params, TINY, batch)
    h = 1e-4
    for name in ("cond.w1", "cond.b1", "cond.w2", "cond.b2"):
        p = params[name]
        for _ in range(5):
            idx = tuple(int(rng.integers(0, s)) for s in p.shape)
            old = p[idx]
            p[idx] = old + h
            up = float(batch_loss(as_tensors(params), TINY, batch).data)
            p[idx] = old - h
            down = float(batch_loss(as_tensors(params), TINY, batch).data)
            p[idx] = old
            num = (up - down) / (2 * h)
            assert grads[name][idx] == pytest.approx(num, rel=1e-4, abs=1e-9)


def test_argmax_invariant_to_shift(rng):
    z = rng.standard_normal(50)
    opts = SamplerOptions()
    g = np.random.default_rng(0)
    assert choose_token(z, opts, g) == choose_token(z + 123.0, opts, g)


def test_sampler_masks_start_and_pad():
    z = np.zeros(10)
    z[0] = z[1] = 100
    assert choose_token(z, SamplerOptions(), np.random.default_rng(0)) not in (0, 1)


def test_top_k_one_is_greedy(rng):
    z = rng.standard_normal(40)
    opts = SamplerOptions(temperature=1.0, top_k=1, seed=3)
    g = np.random.default_rng(3)
    assert all(choose_token(z, opts, g) == int(np.argmax(z[2:]) + 2) for _ in range(20))


def test_layer_norm_float32_path():
    x = ag.Tensor(np.random.default_rng(0).standard_normal((2, 8)).astype(np.float32))
    out = ag.layer_norm(x, ag.Tensor(np.ones(8, np.float32)), ag.Tensor(np.zeros(8, np.float32)))
    assert out.data.dtype == np.float32


def test_quant_and_model_vocab_agree():
    assert ModelConfig().vocab_size == QuantConfig().vocab_size
