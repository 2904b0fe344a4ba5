"""Propagation-based attributions for the one-hidden-layer network.

All three methods are closed form for a single ELU layer, so they are
vectorised over instances: ``X`` may be one 54-vector or an (n, 54) matrix.
"""

from __future__ import annotations

import numpy as np

from roughnet.interpret.base import AttributionResult, output_index
from roughnet.neuralnet import FeedforwardNet, elu, elu_grad

RESCALE_TOL = 1e-9
LRP_EPS_REL = 1e-4


def _results(method, j, phi, pred, base=None, extra=None, first=0):
    out = []
    for i in range(len(phi)):
        ex = {k: float(v[i]) for k, v in (extra or {}).items()}
        b = None if base is None else float(base[i])
        out.append(AttributionResult(method, j, first + i, phi[i], b, float(pred[i]), ex))
    return out


def gradient_input_phi(net: FeedforwardNet, X, j):
    X = np.atleast_2d(np.asarray(X, float))
    z = X @ net.W1 + net.b1
    grad = (elu_grad(z) * net.W2[:, j]) @ net.W1.T
    return grad * X


def gradient_input(net: FeedforwardNet, x, j, first=0):
    """phi_i = x_i * d yhat_j / d x_i with the analytic gradient."""
    j = output_index(j)
    X = np.atleast_2d(np.asarray(x, float))
    res = _results("gradient_input", j, gradient_input_phi(net, X, j), net.predict(X)[:, j], first=first)
    return res[0] if np.ndim(x) == 1 else res


def rescale_multipliers(net: FeedforwardNet, X, B):
    """Delta elu / Delta z per hidden unit, with the gradient where Delta z vanishes.

    ``X`` and ``B`` broadcast against each other; returns (multipliers, dz).
    """
    z = X @ net.W1 + net.b1
    z0 = B @ net.W1 + net.b1
    dz = z - z0
    small = np.abs(dz) < RESCALE_TOL
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(small, elu_grad(z), (elu(z) - elu(z0)) / np.where(small, 1.0, dz))
    return m, dz


def deeplift_phi(net: FeedforwardNet, X, B, j):
    X = np.atleast_2d(np.asarray(X, float))
    B = np.atleast_2d(np.asarray(B, float))
    m, _ = rescale_multipliers(net, X, B)
    return (X - B) * ((m * net.W2[:, j]) @ net.W1.T)


def deeplift_rescale(net: FeedforwardNet, x, j, baseline=None, first=0):
    """Rescale-rule DeepLIFT against ``baseline`` (zero vector by default).

    Completeness: sum(phi) = yhat_j(x) - yhat_j(baseline), with phi_0 the latter.
    """
    j = output_index(j)
    X = np.atleast_2d(np.asarray(x, float))
    b = np.zeros(X.shape[1]) if baseline is None else np.asarray(baseline, float)
    phi = deeplift_phi(net, X, b, j)
    pred = net.predict(X)[:, j]
    base = np.full(len(X), net.predict(b[None, :])[0, j])
    res = _results("deeplift", j, phi, pred, base, first=first)
    return res[0] if np.ndim(x) == 1 else res


def _stabilise(z, eps):
    return z + eps * np.where(z >= 0, 1.0, -1.0)


def _share(num, den):
    """num / den, with no relevance passed where den is exactly zero (an all-zero layer)."""
    safe = np.where(den == 0, 1.0, den)
    return np.where(den == 0, 0.0, num / safe)


def lrp_phi(net: FeedforwardNet, X, j, eps_rel=LRP_EPS_REL):
    """Epsilon-rule relevances (n, 54) and the share of yhat_j absorbed by biases and eps.

    The stabiliser of each layer is ``eps_rel`` times the mean absolute
    pre-activation of that layer at the instance.
    """
    X = np.atleast_2d(np.asarray(X, float))
    z = X @ net.W1 + net.b1
    h = elu(z)
    out = h @ net.W2 + net.b2
    y = out[:, j]
    eps_out = eps_rel * np.abs(out).mean(axis=1)
    eps_hid = eps_rel * np.abs(z).mean(axis=1, keepdims=True)
    r_hidden = h * net.W2[:, j] * _share(y, _stabilise(y, eps_out))[:, None]
    phi = X * (_share(r_hidden, _stabilise(z, eps_hid)) @ net.W1.T)
    total = phi.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        absorbed = np.where(y != 0, 1.0 - total / y, 0.0)
    return phi, absorbed


def lrp_epsilon(net: FeedforwardNet, x, j, eps_rel=LRP_EPS_REL, first=0):
    """LRP with the epsilon rule; ``extra['absorbed']`` is 1 - sum(phi)/yhat_j."""
    j = output_index(j)
    X = np.atleast_2d(np.asarray(x, float))
    phi, absorbed = lrp_phi(net, X, j, eps_rel)
    res = _results("lrp", j, phi, net.predict(X)[:, j], extra={"absorbed": absorbed}, first=first)
    return res[0] if np.ndim(x) == 1 else res
