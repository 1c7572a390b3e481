import numpy as np
import pytest

from sewgpt import autograd as ag


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def check(op, *shapes, seed=0, atol=1e-6):
    rng = np.random.default_rng(seed)
    arrays = [rng.standard_normal(s) for s in shapes]
    weights = None

    def value():
        nonlocal weights
        out = op(*[ag.Tensor(a) for a in arrays]).data
        if weights is None:
            weights = np.random.default_rng(seed + 1).standard_normal(out.shape)
        return float((out * weights).sum())
    value()
    ts = [ag.Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = op(*ts)
    out.backward(weights)
    for t, a in zip(ts, arrays):
        assert np.allclose(t.grad, numeric_grad(value, a), atol=atol), op


@pytest.mark.parametrize("op,shapes", [
    (ag.add, [(3, 4), (4,)]),
    (ag.mul, [(2, 3, 4), (1, 3, 1)]),
    (ag.matmul, [(2, 3, 4), (4, 5)]),
    (ag.matmul, [(2, 2, 3, 4), (2, 2, 4, 3)]),
    (ag.linear, [(2, 3, 4), (4, 5), (5,)]),
    (lambda x: ag.reshape(x, (6, 2)), [(3, 4)]),
    (lambda x: ag.transpose(x, (2, 0, 1)), [(2, 3, 4)]),
    (ag.layer_norm, [(2, 3, 5), (5,), (5,)]),
    (ag.gelu, [(3, 4)]),
    (ag.softmax, [(3, 5)]),
])
def test_op_gradients(op, shapes):
    check(op, *shapes)


def test_masked_softmax_gradient():
    mask = np.tril(np.ones((4, 4), dtype=bool))
    check(lambda x: ag.softmax(x, mask), (2, 4, 4))


def test_embedding_gradient_accumulates_repeats():
    table = ag.Tensor(np.zeros((5, 2)), requires_grad=True)
    out = ag.embedding(table, np.array([[1, 1, 3]]))
    out.backward(np.ones((1, 3, 2)))
    assert table.grad.tolist() == [[0, 0], [2, 2], [0, 0], [1, 1], [0, 0]]


def test_cross_entropy_gradient():
    rng = np.random.default_rng(3)
    logits = rng.standard_normal((2, 3, 6))
    targets = rng.integers(0, 6, (2, 3))
    w = np.array([[1, 1, 0], [1, 0, 0]], dtype=float)
    f = lambda: float(ag.cross_entropy(ag.Tensor(logits), targets, w).data)  # noqa: E731
    t = ag.Tensor(logits.copy(), requires_grad=True)
    ag.cross_entropy(t, targets, w).backward()
    assert np.allclose(t.grad, numeric_grad(f, logits), atol=1e-7)


def test_softmax_rows():
    x = np.random.default_rng(0).standard_normal((4, 7)) * 30
    p = ag.softmax(ag.Tensor(x)).data
    assert np.allclose(p.sum(-1), 1, atol=1e-6) and (p >= 0).all()
    mask = np.tril(np.ones((4, 7), dtype=bool))
    pm = ag.softmax(ag.Tensor(x), mask).data
    assert np.allclose(pm.sum(-1), 1, atol=1e-6)
    assert (pm[~mask] == 0).all()


def test_shared_node_gradient():
    x = ag.Tensor(np.array([2.0, 3.0]), requires_grad=True)
    y = ag.mul(x, x)
    z = ag.add(y, x)
    z.backward()
    assert x.grad.tolist() == [5.0, 7.0]


def test_no_grad_graph():
    out = ag.add(ag.Tensor(np.ones(2)), ag.Tensor(np.ones(2)))
    assert not out.requires_grad and out._parents == ()
