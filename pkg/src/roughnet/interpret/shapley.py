"""Shapley attributions: exact enumeration, permutation sampling and Deep-SHAP.

For a feature set N and value function v(S) = f(h_x(S)),

    phi_k = sum_{S subset N \\ {k}} |S|! (M - |S| - 1)! / M! * (v(S + k) - v(S)).

v(S) uses either one reference vector or, with a background matrix, the mean
prediction over background rows with the absent features taken from each row.
"""

from __future__ import annotations

from math import factorial

import numpy as np

from roughnet.errors import ValidationError
from roughnet.interpret.backprop import deeplift_phi
from roughnet.interpret.base import AttributionResult, evaluate_output, output_index
from roughnet.interpret.lime import instance_rng
from roughnet.neuralnet import FeedforwardNet

MAX_EXACT = 12
N_BACKGROUND = 1000


def _value(f, x, background, masks, j, features):
    """v(S) for each mask row; masks index into ``features``."""
    masks = np.asarray(masks, bool)
    vals = np.empty(len(masks))
    for start in range(0, len(masks), 256):
        block = masks[start : start + 256]
        # (mask, background, feature)
        X = np.broadcast_to(background, (len(block),) + background.shape).copy()
        keep = np.zeros((len(block), x.size), bool)
        keep[:, features] = block
        X = np.where(keep[:, None, :], x, X)
        y = evaluate_output(f, X.reshape(-1, x.size), j).reshape(len(block), len(background))
        vals[start : start + len(block)] = y.mean(axis=1)
    return vals


def _as_background(reference, x):
    b = np.atleast_2d(np.asarray(reference, float))
    if b.shape[1] != x.size or len(b) == 0:
        raise ValidationError("reference/background must have rows of the instance's length")
    return b


def shapley_exact(f, x, reference, j, features=None, instance=0) -> AttributionResult:
    """Exact Shapley values over ``features`` (all features by default, at most 12).

    Features outside ``features`` stay at x. ``reference`` is a vector or a
    background matrix. phi has full length with zeros outside ``features``.
    """
    j = output_index(j)
    x = np.asarray(x, float)
    features = np.arange(x.size) if features is None else np.asarray(features, int)
    m = len(features)
    if m > MAX_EXACT:
        raise ValidationError(f"exact Shapley over {m} features is too costly (max {MAX_EXACT}); "
                              "use shapley_sampled or shapley_global")
    bg = _as_background(reference, x)
    codes = np.arange(2**m)
    masks = (codes[:, None] >> np.arange(m)) & 1
    v = _value(f, x, bg, masks, j, features)
    sizes = masks.sum(axis=1)
    w = np.array([factorial(s) * factorial(m - s - 1) / factorial(m) if s < m else 0.0 for s in range(m + 1)])
    phi = np.zeros(x.size)
    for k in range(m):
        without = codes[(codes >> k) & 1 == 0]
        phi[features[k]] = np.sum(w[sizes[without]] * (v[without | (1 << k)] - v[without]))
    return AttributionResult("shapley_exact", j, instance, phi, float(v[0]), float(v[-1]))


def shapley_sampled(f, x, reference, j, n_permutations=200, seed=0, instance=0) -> AttributionResult:
    """Permutation-sampling estimate over all features (Monte Carlo, unbiased)."""
    j = output_index(j)
    if n_permutations < 1:
        raise ValidationError("n_permutations must be positive")
    x = np.asarray(x, float)
    m = x.size
    bg = _as_background(reference, x)
    rng = instance_rng(seed, instance)
    phi = np.zeros(m)
    base = None
    for _ in range(n_permutations):
        order = rng.permutation(m)
        masks = np.zeros((m + 1, m), bool)
        for step, k in enumerate(order):
            masks[step + 1 :, k] = True
        v = _value(f, x, bg, masks, j, np.arange(m))
        phi[order] += np.diff(v)
        base = v[0]
    return AttributionResult("shapley_sampled", j, instance, phi / n_permutations, float(base), float(v[-1]),
                             {"n_permutations": n_permutations})


def choose_background(data, n=N_BACKGROUND, seed=0):
    """Up to ``n`` rows of ``data`` drawn without replacement, in their original order."""
    data = np.atleast_2d(np.asarray(data, float))
    if len(data) == 0:
        raise ValidationError("empty background")
    if len(data) <= n:
        return data
    idx = np.sort(np.random.default_rng(seed).choice(len(data), n, replace=False))
    return data[idx]


def shapley_global(net: FeedforwardNet, background, instances, j, first=0):
    """Deep-SHAP style: rescale-rule attributions averaged over background baselines.

    Each result satisfies sum(phi) = yhat_j(x) - mean_b yhat_j(b), with that
    mean stored as phi_0.
    """
    j = output_index(j)
    bg = np.atleast_2d(np.asarray(background, float))
    if len(bg) == 0:
        raise ValidationError("empty background")
    X = np.atleast_2d(np.asarray(instances, float))
    base = float(net.predict(bg)[:, j].mean())
    pred = net.predict(X)[:, j]
    out = []
    for i, x in enumerate(X):
        phi = deeplift_phi(net, x[None, :], bg, j).mean(axis=0)
        out.append(AttributionResult("shap", j, first + i, phi, base, float(pred[i]),
                                     {"n_background": len(bg)}))
    return out
