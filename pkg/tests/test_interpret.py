import itertools
from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughnet.errors import SamplingError, ValidationError
from roughnet.interpret import (AttributionResult, LimeConfig, aggregate_heatmap, deeplift_rescale, gradient_input,
                                lime_explain, lrp_epsilon, overall_heatmap, shapley_exact, shapley_global,
                                shapley_sampled)
from roughnet.interpret.backprop import deeplift_phi, lrp_phi
from roughnet.interpret.base import mask_inputs
from roughnet.interpret.heatmap import heatmap_svg, read_heatmap_csv, write_heatmap_csv
from roughnet.interpret.lime import instance_rng, sample_masks
from roughnet.neuralnet import FeedforwardNet, elu


def linear_net(seed=0, n_in=54):
    """Positive weights and zero biases: on positive inputs the ELU is the identity."""
    rng = np.random.default_rng(seed)
    return FeedforwardNet(rng.uniform(0.1, 1, (n_in, 6)), np.zeros(6), rng.uniform(0.1, 1, (6, 6)), np.zeros(6))


def random_net(seed=0, n_in=54):
    rng = np.random.default_rng(seed)
    net = FeedforwardNet.init(n_in=n_in, seed=seed)
    net.b1, net.b2 = rng.normal(0, 0.5, 6), rng.normal(0, 0.5, 6)
    return net


def shapley_by_orderings(f, x, ref):
    """Independent oracle: average marginal contributions over every ordering."""
    m = len(x)
    phi = np.zeros(m)
    for order in itertools.permutations(range(m)):
        z = ref.copy()
        prev = f(z[None, :])[0]
        for k in order:
            z[k] = x[k]
            cur = f(z[None, :])[0]
            phi[k] += cur - prev
            prev = cur
    return phi / factorial(m)


# --- Gradient * Input -----------------------------------------------------------

def test_gradient_input_linear_and_zero():
    net = linear_net()
    x = np.random.default_rng(1).uniform(0.1, 1, 54)
    W = net.W1 @ net.W2
    for j in range(6):
        r = gradient_input(net, x, j)
        assert np.allclose(r.phi, W[:, j] * x, rtol=1e-12)
        assert r.phi.sum() == pytest.approx(net.predict(x[None])[0, j], rel=1e-12)
    assert np.all(gradient_input(random_net(), np.zeros(54), 3).phi == 0)


def test_gradient_factor_matches_finite_differences():
    net = random_net(2)
    x = np.random.default_rng(2).normal(size=54)
    g = net.input_gradient(x, 4)
    h = 1e-6
    fd = np.array([(net.predict((x + h * e)[None])[0, 4] - net.predict((x - h * e)[None])[0, 4]) / (2 * h)
                   for e in np.eye(54)])
    assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3 * np.abs(fd).max())) <= 1e-5


# --- DeepLIFT ---------------------------------------------------------------------

def test_deeplift_linear_equals_gradient_input():
    net = linear_net(3)
    x = np.random.default_rng(3).uniform(0.1, 1, 54)
    assert np.allclose(deeplift_rescale(net, x, 2).phi, gradient_input(net, x, 2).phi, rtol=1e-12)


def test_deeplift_at_baseline_is_zero():
    net = random_net(4)
    b = np.random.default_rng(4).normal(size=54)
    assert np.all(deeplift_rescale(net, b, 0, baseline=b).phi == 0)


def test_deeplift_completeness_random():
    net = random_net(5)
    X = np.random.default_rng(5).normal(size=(100, 54))
    for j in range(6):
        res = deeplift_rescale(net, X, j)
        resid = [abs(r.phi.sum() - (r.prediction - r.base)) for r in res]
        assert max(resid) <= 1e-6
        assert res[0].base == pytest.approx(net.predict(np.zeros((1, 54)))[0, j])


def test_rescale_falls_back_to_gradient():
    net = random_net(6)
    x = np.random.default_rng(6).normal(size=54)
    b = x.copy()
    b[0] += 1e-13  # pre-activation differences far below the rescale tolerance
    phi = deeplift_phi(net, x, b, 1)[0]
    g = net.input_gradient(x, 1)
    assert np.allclose(phi, g * (x - b), rtol=1e-6, atol=1e-20)


# --- LRP ------------------------------------------------------------------------------

def test_lrp_conservation_linear_positive():
    net = linear_net(7)
    x = np.random.default_rng(7).uniform(0.1, 1, 54)
    r = lrp_epsilon(net, x, 1, eps_rel=1e-12)
    assert r.phi.sum() == pytest.approx(r.prediction, rel=1e-9)
    assert abs(r.extra["absorbed"]) <= 1e-9


def test_lrp_single_path():
    net = FeedforwardNet.zeros()
    net.W1[7, 2] = 1.5
    net.W2[2, 4] = 2.0
    x = np.random.default_rng(8).uniform(0.1, 1, 54)
    r = lrp_epsilon(net, x, 4)
    assert np.count_nonzero(r.phi) == 1 and r.phi[7] > 0
    assert r.phi[7] == pytest.approx(r.prediction, rel=1e-3)


def test_lrp_absorbed_share_matches_direct_sum():
    net = random_net(9)
    X = np.random.default_rng(9).normal(size=(20, 54))
    eps_rel = 1e-2
    phi, absorbed = lrp_phi(net, X, 0, eps_rel)
    # direct evaluation of the epsilon rule, unit by unit
    for x, ph, ab in zip(X, phi, absorbed):
        z = x @ net.W1 + net.b1
        h = elu(z)
        out = h @ net.W2 + net.b2
        y = out[0]
        eo = eps_rel * np.abs(out).mean()
        eh = eps_rel * np.abs(z).mean()
        rk = h * net.W2[:, 0] * y / (y + eo * np.sign(y))
        expected = sum(rk[k] * (z[k] - net.b1[k]) / (z[k] + eh * (1 if z[k] >= 0 else -1)) for k in range(6))
        assert ph.sum() == pytest.approx(expected, rel=1e-10)
        assert ab == pytest.approx(1 - expected / y, rel=1e-8, abs=1e-12)


# --- dummy axiom across methods -----------------------------------------------------

def test_dummy_feature_gets_zero():
    net = random_net(10)
    net.W1[5] = 0.0
    x = np.random.default_rng(10).normal(size=54)
    assert gradient_input(net, x, 0).phi[5] == 0
    assert deeplift_rescale(net, x, 0).phi[5] == 0
    assert lrp_epsilon(net, x, 0).phi[5] == 0
    r = shapley_exact(net.predict, x, np.zeros(54), 0, features=[3, 4, 5, 6])
    assert abs(r.phi[5]) <= 1e-12


# --- exact Shapley ------------------------------------------------------------------------

def test_shapley_additive():
    g = [np.sin, np.cos, np.exp, np.square]
    f = lambda X: sum(gi(X[:, i]) for i, gi in enumerate(g))  # noqa: E731
    x, m = np.array([0.3, -1.0, 0.5, 2.0]), np.array([0.1, 0.2, -0.3, 0.0])
    phi = shapley_exact(f, x, m, 0).phi
    assert np.allclose(phi, [gi(x[i]) - gi(m[i]) for i, gi in enumerate(g)], atol=1e-12)


def test_shapley_symmetry_and_efficiency():
    f = lambda X: X[:, 0] * X[:, 1] + np.tanh(X[:, 2])  # noqa: E731
    x, ref = np.array([1.3, 1.3, 0.4]), np.zeros(3)
    r = shapley_exact(f, x, ref, 0)
    assert r.phi[0] == pytest.approx(r.phi[1], abs=1e-14)
    assert r.phi.sum() == pytest.approx(f(x[None])[0] - f(ref[None])[0], abs=1e-10)


def test_shapley_matches_enumeration_oracle():
    rng = np.random.default_rng(11)
    A = rng.normal(size=(3, 3))
    f = lambda X: np.tanh(X @ A).prod(axis=1) + X[:, 0] ** 2 * X[:, 2]  # noqa: E731
    x, ref = rng.normal(size=3), rng.normal(size=3)
    assert np.allclose(shapley_exact(f, x, ref, 0).phi, shapley_by_orderings(f, x, ref), atol=1e-12)


def test_shapley_size_limit():
    with pytest.raises(ValidationError, match="shapley_sampled"):
        shapley_exact(lambda X: X.sum(1), np.ones(13), np.zeros(13), 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10_000))
def test_shapley_axioms_random_functions(m, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, 3))
    dummy = rng.integers(m)
    A[dummy] = 0.0
    f = lambda X: np.sin(X @ A).sum(axis=1) + (X @ A[:, 0]) ** 2  # noqa: E731
    x, ref = rng.normal(size=m), rng.normal(size=m)
    r = shapley_exact(f, x, ref, 0)
    assert abs(r.phi.sum() - (f(x[None])[0] - f(ref[None])[0])) <= 1e-10
    assert abs(r.phi[dummy]) <= 1e-12
    # symmetry: duplicate a feature's weights and values
    if m >= 3:
        a, b = [i for i in range(m) if i != dummy][:2]
        A[b] = A[a]
        x[b], ref[b] = x[a], ref[a]
        r = shapley_exact(f, x, ref, 0)
        assert abs(r.phi[a] - r.phi[b]) <= 1e-10


def test_shapley_sampled_converges():
    net = random_net(12, n_in=6)
    x, ref = np.random.default_rng(12).normal(size=(2, 6))
    exact = shapley_exact(net.predict, x, ref, 2).phi
    est = shapley_sampled(net.predict, x, ref, 2, n_permutations=400, seed=1)
    assert est.phi.sum() == pytest.approx(exact.sum(), abs=1e-10)  # every permutation is efficient
    assert np.sqrt(np.mean((est.phi - exact) ** 2)) <= 0.05 * np.sqrt(np.mean(exact ** 2))


# --- Deep-SHAP-style global Shapley ------------------------------------------------------------

def test_global_shap_self_baseline_and_linear():
    net = random_net(13)
    x = np.random.default_rng(13).normal(size=(1, 54))
    assert np.allclose(shapley_global(net, x, x, 0)[0].phi, 0)
    lin = linear_net(14)
    rng = np.random.default_rng(14)
    bg, X = rng.uniform(0.1, 1, (30, 54)), rng.uniform(0.1, 1, (3, 54))
    W = lin.W1 @ lin.W2
    for r, x in zip(shapley_global(lin, bg, X, 1), X):
        assert np.allclose(r.phi, W[:, 1] * (x - bg.mean(0)), rtol=1e-10)
        ex = shapley_exact(lin.predict, x, np.zeros(54), 1, features=np.arange(12)).phi
        assert np.allclose(ex[:12], W[:12, 1] * x[:12], rtol=1e-10)
    with pytest.raises(ValidationError):
        shapley_global(net, np.empty((0, 54)), x, 0)


def test_global_shap_close_to_exact_on_toy_net():
    net = FeedforwardNet.init(n_in=8, seed=15)
    rng = np.random.default_rng(15)
    bg, X = rng.normal(size=(200, 8)), rng.normal(size=(50, 8))
    est = np.array([r.phi for r in shapley_global(net, bg, X, 0)])
    exact = np.array([shapley_exact(net.predict, x, bg, 0).phi for x in X])
    assert np.sqrt(np.mean((est - exact) ** 2)) <= 0.05 * np.sqrt(np.mean(exact ** 2))
    # both are efficient against the background-mean prediction
    base = net.predict(bg)[:, 0].mean()
    assert np.allclose(est.sum(1), net.predict(X)[:, 0] - base, atol=1e-10)
    assert np.allclose(exact.sum(1), net.predict(X)[:, 0] - base, atol=1e-10)


# --- LIME ---------------------------------------------------------------------------------

def test_lime_linear_limit():
    rng = np.random.default_rng(16)
    w, x = rng.normal(size=54), rng.normal(size=54)
    r = lime_explain(lambda X: X @ w, x, np.zeros(54), 0, LimeConfig(n_samples=5000))
    assert np.max(np.abs(r.phi - w * x)) <= 1e-2
    assert r.extra["r2"] > 0.999 and r.base == pytest.approx(0.0, abs=1e-2)


def test_lime_no_op_feature_and_determinism():
    rng = np.random.default_rng(17)
    net = random_net(17)
    ref = rng.normal(size=54)
    x = rng.normal(size=54)
    x[9] = ref[9]
    cfg = LimeConfig(n_samples=2000, seed=4)
    a = lime_explain(net.predict, x, ref, 3, cfg, instance=5)
    b = lime_explain(net.predict, x, ref, 3, cfg, instance=5)
    assert np.array_equal(a.phi, b.phi)
    assert abs(a.phi[9]) <= 0.05 * np.abs(a.phi).max()


def test_lime_degenerate_sample():
    seed = next(s for s in range(100) if np.all(sample_masks(1, 2, instance_rng(s, 0)) == 1))
    with pytest.raises(SamplingError):
        lime_explain(lambda X: X[:, 0], np.ones(1), np.zeros(1), 0, LimeConfig(n_samples=2, seed=seed))


def test_mask_inputs():
    x, ref = np.arange(4.0), -np.ones(4)
    assert np.array_equal(mask_inputs(x, ref, np.ones(4)), x)
    assert np.array_equal(mask_inputs(x, ref, [1, 0, 1, 0]), [0, -1, 2, -1])


# --- heat maps ----------------------------------------------------------------------------------

def test_heatmap_singleton_zero_and_mixed():
    phi = np.random.default_rng(18).normal(size=54)
    hm = aggregate_heatmap([AttributionResult("lrp", 0, 0, phi)])
    assert np.array_equal(hm.values, np.abs(phi).reshape(9, 6))
    assert hm.top(1)[0] == [(k, t) for k, t in [hm.grid.cells()[int(np.argmax(np.abs(phi)))]]][0]
    zero = aggregate_heatmap([AttributionResult("lrp", 0, i, np.zeros(54)) for i in range(3)])
    assert np.all(zero.values == 0)
    with pytest.raises(ValidationError):
        aggregate_heatmap([AttributionResult("lrp", 0, 0, phi), AttributionResult("shap", 0, 1, phi)])
    with pytest.raises(ValidationError):
        aggregate_heatmap([AttributionResult("lrp", 0, 0, phi), AttributionResult("lrp", 1, 1, phi)])
    total = overall_heatmap([hm, hm])
    assert np.array_equal(total.values, 2 * hm.values) and total.output == "overall"


def test_heatmap_files(tmp_path):
    phi = np.arange(54.0)
    hm = aggregate_heatmap([AttributionResult("deeplift", 2, 0, phi)])
    write_heatmap_csv(hm, tmp_path / "h.csv")
    assert np.array_equal(read_heatmap_csv(tmp_path / "h.csv").values, hm.values)
    svg = heatmap_svg(hm)
    assert svg.count('class="cell"') == 54
    assert "K=0.6" in svg and "K=1.4" in svg and "T=0.6" in svg and "T=2" in svg
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
