import numpy as np
import pytest

from roughnet.errors import NumericalError, ParseError, ValidationError
from roughnet.neuralnet import (FeedforwardNet, TrainConfig, TrainHistory, accuracy, elu, evaluate, gradients,
                                load_net, msle_loss, save_net, train)
from roughnet.preprocess import Preprocessor


def fd_check(net, X, Y, h=1e-6):
    """Max relative gap between analytic and central-difference gradients."""
    _, grads = gradients(net, X, Y)
    g = np.concatenate([a.ravel() for a in grads])
    theta = net.flat()
    fd = np.empty_like(theta)
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        fd[i] = (msle_loss(Y, net.with_flat(up).predict(X)) - msle_loss(Y, net.with_flat(dn).predict(X))) / (2 * h)
    scale = np.maximum(np.abs(fd), np.abs(g).max() * 1e-3)
    return np.max(np.abs(g - fd) / scale)


def random_case(seed):
    rng = np.random.default_rng(seed)
    net = FeedforwardNet.init(seed=seed, output_gain=0.1)
    net.b1 = rng.normal(0, 0.3, 6)
    net.b2 = rng.uniform(0.1, 0.5, 6)
    X = rng.normal(size=(16, 54))
    Y = rng.uniform(-0.6, 0.6, (16, 6))
    return net, X, Y


def test_parameter_count():
    net = FeedforwardNet.init()
    assert net.n_params == 372
    assert net.shape == (54, 6, 6)


def test_bias_passthrough():
    net = FeedforwardNet.zeros()
    net.W2 = np.eye(6)
    net.b2 = np.arange(6.0)
    assert np.array_equal(net.predict(np.random.default_rng(0).normal(size=(3, 54))), np.tile(np.arange(6.0), (3, 1)))


def test_forward_formula_and_input_check():
    net, X, _ = random_case(0)
    assert np.allclose(net.predict(X), elu(X @ net.W1 + net.b1) @ net.W2 + net.b2)
    with pytest.raises(ValidationError):
        net.predict(np.full((1, 54), np.nan))


def test_msle_values():
    y = np.array([[0.5, 0.0]])
    assert msle_loss(y, y) == 0
    assert msle_loss(y, np.array([[0.0, 0.0]])) == pytest.approx(np.log(1.5) ** 2)
    with pytest.raises(ValidationError):
        msle_loss(np.array([-1.2]), np.array([0.0]))


def test_gradients_match_finite_differences():
    # over 20 random nets/batches the median gap is within 1e-5, and so is the worst one
    gaps = [fd_check(*random_case(s)) for s in range(20)]
    assert np.median(gaps) <= 1e-5
    assert max(gaps) <= 1e-5


def test_zero_gradient_at_perfect_fit():
    net, X, _ = random_case(3)
    Y = net.predict(X[:1])
    loss, grads = gradients(net, X[:1], Y)
    assert loss == 0 and all(np.all(g == 0) for g in grads)


def test_gradient_invariant_to_duplication():
    net, X, Y = random_case(4)
    _, g1 = gradients(net, X[:1], Y[:1])
    _, g2 = gradients(net, np.repeat(X[:1], 2, 0), np.repeat(Y[:1], 2, 0))
    assert all(np.allclose(a, b, rtol=1e-14, atol=0) for a, b in zip(g1, g2))


def test_zero_learning_rate_is_noop():
    net, X, Y = random_case(5)
    out, hist = train(net, X, Y, TrainConfig(epochs=3, learning_rate=0.0, final_learning_rate=None))
    assert np.array_equal(out.flat(), net.flat())
    assert len(hist) == 3


def test_learning_rate_schedule():
    cfg = TrainConfig(learning_rate=1e-2, final_learning_rate=1e-3)
    assert cfg.rate(0, 100) == 1e-2 and cfg.rate(99, 100) == pytest.approx(1e-3)
    assert TrainConfig(final_learning_rate=None).rate(50, 100) == TrainConfig().learning_rate


def test_training_deterministic_and_improves(wide_small):
    pre = Preprocessor.fit(wide_small.features, 1)
    X, Y = pre.transform(wide_small.features), wide_small.labels
    net0 = FeedforwardNet.init_for(Y, seed=2)
    cfg = TrainConfig(epochs=15, batch_size=64, seed=2)
    a, ha = train(net0, X, Y, cfg, wide_small.box.width)
    b, hb = train(net0, X, Y, cfg, wide_small.box.width)
    assert np.array_equal(a.flat(), b.flat()) and ha.val_loss == hb.val_loss
    assert len(ha) == 15
    assert msle_loss(Y, a.predict(X), clamp=True) < msle_loss(Y, net0.predict(X), clamp=True)


def test_dropout_runs_and_config_checks(wide_small):
    X = np.random.default_rng(0).normal(size=(64, 54))
    net, hist = train(FeedforwardNet.init_for(wide_small.labels[:64]), X, wide_small.labels[:64],
                      TrainConfig(epochs=2, dropout=0.6))
    assert np.all(np.isfinite(net.flat()))
    with pytest.raises(ValidationError):
        TrainConfig(dropout=1.0)
    with pytest.raises(ValidationError):
        TrainConfig(validation_fraction=-0.1)


def test_non_finite_loss_aborts():
    net, X, Y = random_case(6)
    net.W1[:] = 1e308
    with pytest.raises(NumericalError, match="epoch 1, batch 1"):
        with np.errstate(all="ignore"):
            train(net, X, Y, TrainConfig(epochs=1))


def test_evaluate_perfect_predictor():
    Y = np.random.default_rng(0).uniform(-0.5, 0.5, (10, 6))
    e = evaluate(None, None, Y, np.ones(6), predictions=Y)
    assert np.array_equal(e.errors, np.zeros(6)) and e.accuracy == 1.0
    assert accuracy(Y, Y + 0.04, np.ones(6)) == 1.0
    assert accuracy(Y, Y + 0.06, np.ones(6)) == 0.0


def test_net_and_history_files(tmp_path):
    net, _, _ = random_case(7)
    save_net(net, tmp_path / "n.txt")
    assert np.array_equal(load_net(tmp_path / "n.txt").flat(), net.flat())
    (tmp_path / "bad.txt").write_text("roughnet-net 1\nshape 54 6 6\nW1 1 2\n")
    with pytest.raises(ParseError):
        load_net(tmp_path / "bad.txt")
    h = TrainHistory([1.0, 0.5], [1.1, 0.6], [0.1, 0.2], [0.1, 0.3])
    h.to_csv(tmp_path / "h.csv")
    back = TrainHistory.from_csv(tmp_path / "h.csv")
    assert back.val_loss == h.val_loss and back.train_acc == h.train_acc
