import numpy as np
import pytest

from sewgpt.codec import END, START, TokenSeq, positional_meta
from sewgpt.errors import TrainingDiverged
from sewgpt.model import ModelConfig, init_params
from sewgpt.optim import Adam
from sewgpt.train import TrainConfig, batch_schedule, loss_and_grads, train
from sewgpt.model import make_batch

SMALL = ModelConfig(n_layers=1, d_model=16, n_heads=2, vocab_size=64, K=2, max_panels=2,
                    d_cond_in=8)


def toy_data(n=4, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        ids = [START] + rng.integers(3, 64, SMALL.panel_len).tolist() + [END]
        out.append((TokenSeq(tuple(ids), positional_meta(ids, SMALL.K), 64),
                    rng.standard_normal(8)))
    return out


def test_adam_first_step_is_lr_sign():
    g = np.array([3.0, -1e-3, 250.0, -7.0])
    p = {"w": np.zeros(4)}
    Adam(lr=0.01).step(p, {"w": g})
    assert np.allclose(p["w"], -0.01 * np.sign(g), rtol=1e-4)


def test_adam_quadratic_moves_toward_minimum():
    p = {"w": np.array([0.0])}
    opt = Adam(lr=0.01)
    prev = abs(p["w"][0] - 3)
    for _ in range(200):
        opt.step(p, {"w": 2 * (p["w"] - 3)})
        dist = abs(p["w"][0] - 3)
        assert dist <= prev
        prev = dist
    assert p["w"][0] > 1.5


def test_adam_missing_gradient_is_zero():
    p = {"w": np.ones(2), "u": np.ones(2)}
    Adam(lr=0.1).step(p, {"w": np.ones(2), "u": None})
    assert p["u"].tolist() == [1, 1]


def test_batch_schedule_covers_each_epoch():
    rng = np.random.default_rng(0)
    batches = list(batch_schedule(8, 4, 6, rng))
    assert len(batches) == 6
    for e in range(3):
        assert sorted(np.concatenate(batches[2 * e:2 * e + 2]).tolist()) == list(range(8))


def test_training_reduces_loss():
    params = init_params(SMALL, 0)
    hist = train(params, SMALL, TrainConfig(lr=3e-3, steps=60), toy_data())
    assert np.mean(hist[-5:]) < np.mean(hist[:5])


def test_training_is_deterministic():
    runs = []
    for _ in range(2):
        params = init_params(SMALL, 0)
        train(params, SMALL, TrainConfig(lr=1e-3, steps=10, seed=7), toy_data())
        runs.append(params)
    assert all(np.array_equal(runs[0][k], runs[1][k]) for k in runs[0])


def test_callback_stops_early():
    params = init_params(SMALL, 0)
    hist = train(params, SMALL, TrainConfig(steps=50), toy_data(), lambda s, l: s == 3)
    assert len(hist) == 3


def test_divergence_is_reported():
    params = init_params(SMALL, 0)
    params["head.b"][0] = np.nan
    data = toy_data(2)
    batch = make_batch([d[0] for d in data], SMALL.K, np.stack([d[1] for d in data]))
    with pytest.raises(TrainingDiverged):
        loss_and_grads(params, SMALL, batch)


def test_train_config_round_trip():
    t = TrainConfig(lr=2e-4, betas=(0.8, 0.99))
    assert TrainConfig.from_dict(t.to_dict()) == t


def test_evaluate_matches_mean_loss_and_counts_hits():
    from sewgpt.model import as_tensors, batch_loss
    from sewgpt.train import evaluate
    params = init_params(SMALL, 0, dtype=np.float64)
    data = toy_data(3)
    loss, acc = evaluate(params, SMALL, data, batch_size=8)
    batch = make_batch([d[0] for d in data], SMALL.K, np.stack([d[1] for d in data]))
    assert loss == pytest.approx(float(batch_loss(as_tensors(params), SMALL, batch).data))
    assert 0 <= acc < 0.2
    # a constant head is right everywhere except at END
    params["head.w"][:] = 0
    params["head.b"][:] = 0
    params["head.b"][5] = 10
    ids = [START] + [5] * SMALL.panel_len + [END]
    one = [(TokenSeq(tuple(ids), positional_meta(ids, SMALL.K), 64), np.zeros(8))]
    n = len(ids) - 1
    assert evaluate(params, SMALL, one)[1] == pytest.approx((n - 1) / n)
