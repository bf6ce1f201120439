import numpy as np
import pytest

from aigc_edge.neural import (AdamState, DenseNet, adam_step, backward,
                              forward, init_dense, load_net, save_net,
                              sigmoid, sigmoid_grad, soft_update, zero_grads)


def rand_net(dims, seed=0):
    return init_dense(dims, np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

def test_identity_relu_layer():
    net = DenseNet([np.eye(2)], [np.zeros(2)], ["relu"])
    out, _ = forward(net, np.array([1.0, -1.0]))
    assert np.array_equal(out, [1.0, 0.0])


def test_zero_weights_pass_bias():
    net = DenseNet([np.zeros((3, 2))], [np.array([1.0, -2.0, 0.5])], ["relu"])
    out, _ = forward(net, np.array([5.0, 7.0]))
    assert np.array_equal(out, [1.0, 0.0, 0.5])


def test_forward_matches_straightline_oracle():
    net = rand_net([4, 8, 8, 3], seed=3)
    rng = np.random.default_rng(9)
    x = rng.standard_normal((5, 4))
    # independent straight-line reimplementation
    h = x
    for w, b, tag in zip(net.weights, net.biases, net.activations):
        h = h @ w.T + b
        if tag == "relu":
            h = np.where(h > 0, h, 0.0)
    out, _ = forward(net, x)
    assert np.allclose(out, h, rtol=1e-12, atol=0)


def test_forward_shape_handling():
    net = rand_net([4, 6, 2])
    o1, _ = forward(net, np.zeros(4))
    o2, _ = forward(net, np.zeros((7, 4)))
    assert o1.shape == (2,)
    assert o2.shape == (7, 2)
    with pytest.raises(ValueError):
        forward(net, np.zeros(5))


def test_bad_architectures_rejected():
    with pytest.raises(ValueError):
        DenseNet([np.eye(2)], [np.zeros(2)], ["tanh"])
    with pytest.raises(ValueError):
        DenseNet([np.eye(2), np.ones((2, 3))], [np.zeros(2), np.zeros(2)],
                 ["relu", "identity"])
    with pytest.raises(ValueError):
        DenseNet([np.eye(2)], [np.zeros(3)], ["relu"])


def test_glorot_init_bounds():
    net = rand_net([100, 50], seed=1)
    bound = np.sqrt(6.0 / 150)
    assert np.all(np.abs(net.weights[0]) <= bound)
    assert np.std(net.weights[0]) > 0.4 * bound
    assert np.array_equal(net.biases[0], np.zeros(50))


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def test_linear_layer_gradient_exact():
    w = np.array([[1.0, 2.0], [3.0, 4.0]])
    net = DenseNet([w], [np.zeros(2)], ["identity"])
    x = np.array([0.7, -1.3])
    _, cache = forward(net, x)
    grads, gin = backward(net, cache, np.array([1.0, 0.0]))
    # dy_0/dW_0j = x_j exactly
    assert np.array_equal(grads[0][0], np.array([[0.7, -1.3], [0.0, 0.0]]))
    assert np.array_equal(gin, w[0])


def test_relu_blocks_gradient_at_negative_preactivation():
    net = DenseNet([np.eye(1)], [np.array([-5.0])], ["relu"])
    _, cache = forward(net, np.array([1.0]))
    grads, gin = backward(net, cache, np.array([1.0]))
    assert grads[0][0][0, 0] == 0.0
    assert gin[0] == 0.0


def _fd_check(net, x, h=1e-5):
    """Max relative error of analytic vs central-difference gradients."""
    def scalar(n):
        out, _ = forward(n, x)
        return float(np.sum(out))

    out, cache = forward(net, x)
    grads, _ = backward(net, cache, np.ones_like(out))
    worst = 0.0
    rng = np.random.default_rng(5)
    for li, (gw, gb) in enumerate(grads):
        for arr, ana in ((net.weights[li], gw), (net.biases[li], gb)):
            for _ in range(10):
                idx = tuple(rng.integers(s) for s in arr.shape)
                keep = arr[idx]
                arr[idx] = keep + h
                up = scalar(net)
                arr[idx] = keep - h
                dn = scalar(net)
                arr[idx] = keep
                fd = (up - dn) / (2 * h)
                scale = max(abs(fd), abs(ana[idx]), 1e-8)
                worst = max(worst, abs(fd - ana[idx]) / scale)
    return worst


def test_gradient_matches_finite_differences():
    net = rand_net([5, 16, 16, 3], seed=7)
    x = np.random.default_rng(11).standard_normal((4, 5))
    assert _fd_check(net, x) < 1e-4


def test_input_gradient_matches_finite_differences():
    net = rand_net([6, 12, 1], seed=2)
    x = np.random.default_rng(3).standard_normal(6)
    out, cache = forward(net, x)
    _, gin = backward(net, cache, np.ones(1))
    h = 1e-6
    for j in range(6):
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        fd = (forward(net, xp)[0].sum() - forward(net, xm)[0].sum()) / (2 * h)
        assert gin[j] == pytest.approx(fd, rel=1e-4, abs=1e-8)


def test_batched_gradients_sum_over_batch():
    net = rand_net([3, 5, 2], seed=4)
    x = np.random.default_rng(6).standard_normal((8, 3))
    _, cache = forward(net, x)
    gall, _ = backward(net, cache, np.ones((8, 2)))
    acc = zero_grads(net)
    for row in x:
        _, c1 = forward(net, row)
        g1, _ = backward(net, c1, np.ones(2))
        for (aw, ab), (gw, gb) in zip(acc, g1):
            aw += gw
            ab += gb
    for (aw, ab), (gw, gb) in zip(acc, gall):
        assert np.allclose(aw, gw, rtol=1e-12)
        assert np.allclose(ab, gb, rtol=1e-12)


# ---------------------------------------------------------------------------
# adam
# ---------------------------------------------------------------------------

def test_adam_first_step_moves_by_lr():
    net = DenseNet([np.zeros((1, 1))], [np.zeros(1)], ["identity"])
    adam = AdamState(net, lr=0.1)
    grads = [(np.array([[1.0]]), np.array([0.0]))]
    adam_step(adam, net, grads)
    # bias-corrected first step: -lr * g / (|g| + ~eps) ~= -lr * sign(g)
    assert net.weights[0][0, 0] == pytest.approx(-0.1, rel=1e-6)


def test_adam_zero_gradient_no_move():
    net = rand_net([2, 3], seed=8)
    before = [p.copy() for p in net.parameters()]
    adam_step(AdamState(net, lr=0.1), net, zero_grads(net))
    for b, p in zip(before, net.parameters()):
        assert np.array_equal(b, p)


def test_adam_descends_quadratic():
    # loss = 0.5 * ||W||^2, gradient = W
    net = DenseNet([np.array([[2.0, -1.0]])], [np.array([0.5])], ["identity"])
    adam = AdamState(net, lr=1e-2)
    def loss():
        return 0.5 * sum(float(np.sum(p ** 2)) for p in net.parameters())
    losses = [loss()]
    for _ in range(2):
        grads = [(net.weights[0].copy(), net.biases[0].copy())]
        adam_step(adam, net, grads)
        losses.append(loss())
    assert losses[1] < losses[0]
    assert losses[2] < losses[1]


def test_adam_rejects_nan():
    net = rand_net([2, 2], seed=0)
    bad = [(np.full((2, 2), np.nan), np.zeros(2))]
    with pytest.raises(FloatingPointError):
        adam_step(AdamState(net, lr=0.1), net, bad)


# ---------------------------------------------------------------------------
# target updates
# ---------------------------------------------------------------------------

def test_soft_update_rate_one_copies():
    a, b = rand_net([3, 4], 1), rand_net([3, 4], 2)
    soft_update(a, b, 1.0)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert np.array_equal(pa, pb)


def test_soft_update_paper_rate():
    tgt = DenseNet([np.zeros((1, 1))], [np.zeros(1)], ["identity"])
    src = DenseNet([np.ones((1, 1))], [np.ones(1)], ["identity"])
    soft_update(tgt, src, 0.005)
    assert tgt.weights[0][0, 0] == pytest.approx(0.005, abs=1e-15)


def test_soft_update_geometric_decay():
    tgt = DenseNet([np.zeros((1, 1))], [np.zeros(1)], ["identity"])
    src = DenseNet([np.ones((1, 1))], [np.ones(1)], ["identity"])
    rate, n = 0.01, 50
    for _ in range(n):
        soft_update(tgt, src, rate)
    assert tgt.weights[0][0, 0] == pytest.approx(1 - (1 - rate) ** n, abs=1e-12)


# ---------------------------------------------------------------------------
# persistence / misc
# ---------------------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    net = rand_net([4, 7, 2], seed=13)
    path = tmp_path / "net.npz"
    save_net(net, path)
    back = load_net(path)
    assert back.activations == net.activations
    for pa, pb in zip(net.parameters(), back.parameters()):
        assert np.array_equal(pa, pb)
    x = np.random.default_rng(1).standard_normal(4)
    assert np.array_equal(forward(net, x)[0], forward(back, x)[0])


def test_sigmoid_stability_and_grad():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(800.0) == pytest.approx(1.0)
    assert sigmoid(-800.0) == pytest.approx(0.0, abs=1e-300)
    xs = np.linspace(-20, 20, 101)
    ys = sigmoid(xs)
    fd = np.gradient(ys, xs)
    assert np.allclose(sigmoid_grad(ys)[1:-1], fd[1:-1], atol=2e-2)
    assert sigmoid(np.array([[0.0]])).shape == (1, 1)
