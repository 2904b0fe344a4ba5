"""LIME on binary simplified inputs with a Huber surrogate.

Masks z' in {0,1}^M are drawn uniformly; z'_i = 1 keeps feature i of the
instance and z'_i = 0 replaces it with the reference value. The surrogate
g(z') = phi_0 + sum_i z'_i phi_i is a Huber regression of f(h_x(z')) on z',
weighted by the proximity exp(-d^2 / sigma^2), d = ||1 - z'||.

A model is locally interpretable when some g of this form stays within a
small error of f on a neighbourhood of x; we do not certify that, but report
the weighted R^2 of the fit as a fidelity measure.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import HuberRegressor

from roughnet.errors import SamplingError, ValidationError
from roughnet.interpret.base import AttributionResult, evaluate_output, mask_inputs, output_index


@dataclass(frozen=True)
class LimeConfig:
    n_samples: int = 5000
    kernel_width: float | None = None  # None means 0.75 * sqrt(M)
    huber_epsilon: float = 1.35
    huber_alpha: float = 1e-8
    max_iter: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValidationError("LIME needs at least two samples")
        if self.huber_epsilon < 1.0:
            raise ValidationError("Huber epsilon must be at least 1")

    def width(self, m):
        return 0.75 * np.sqrt(m) if self.kernel_width is None else float(self.kernel_width)


def instance_rng(seed, instance):
    """Per-instance generator, independent of the order instances are processed in."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(instance)]))


def sample_masks(m, n, rng):
    """Uniform binary masks; the first row is the unperturbed instance."""
    z = rng.integers(0, 2, size=(n, m)).astype(float)
    z[0] = 1.0
    return z


def weighted_r2(y, yfit, w):
    ybar = np.average(y, weights=w)
    ss_tot = np.sum(w * (y - ybar) ** 2)
    if ss_tot == 0:
        return 1.0 if np.allclose(y, yfit) else 0.0
    return float(1.0 - np.sum(w * (y - yfit) ** 2) / ss_tot)


def lime_explain(f, x, reference, j, cfg: LimeConfig = LimeConfig(), instance=0) -> AttributionResult:
    """Explain output ``j`` of the prediction function ``f`` at ``x``."""
    j = output_index(j)
    x = np.asarray(x, float)
    m = x.size
    z = sample_masks(m, cfg.n_samples, instance_rng(cfg.seed, instance))
    if np.all(z == z[0]):
        raise SamplingError("all LIME samples are identical; increase n_samples")
    y = evaluate_output(f, mask_inputs(x, reference, z), j)
    d2 = np.sum((1.0 - z) ** 2, axis=1)
    w = np.exp(-d2 / cfg.width(m) ** 2)
    reg = HuberRegressor(epsilon=cfg.huber_epsilon, alpha=cfg.huber_alpha, max_iter=cfg.max_iter)
    reg.fit(z, y, sample_weight=w)
    yfit = reg.predict(z)
    extra = {
        "r2": weighted_r2(y, yfit, w),
        "local_prediction": float(reg.predict(np.ones((1, m)))[0]),
        "range_low": float(y.min()),
        "range_high": float(y.max()),
    }
    return AttributionResult("lime", j, instance, reg.coef_, float(reg.intercept_), float(y[0]), extra)


def _lime_job(args):
    f, x, reference, j, cfg, instance = args
    return lime_explain(f, x, reference, j, cfg, instance)


def lime_many(f, X, reference, j, cfg: LimeConfig = LimeConfig(), workers=1, first=0):
    """LIME for every row of X; ``f`` must be picklable when ``workers`` > 1."""
    jobs = [(f, x, reference, j, cfg, first + i) for i, x in enumerate(np.atleast_2d(X))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_lime_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [_lime_job(a) for a in jobs]
