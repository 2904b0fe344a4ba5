import numpy as np
import pytest
from scipy.special import gamma

from roughnet.dataset import NARROW
from roughnet.errors import ValidationError
from roughnet.mc import KernelWeights, McConfig, martingale_check, mc_call_price, simulate_terminal
from roughnet.pricer.fourier import call_price
from roughnet.pricer.params import RoughHestonParams

MID = RoughHestonParams.from_array(NARROW.midpoint)
FAST = McConfig(n_paths=20_000, n_steps=100, seed=11)


def test_config_validation():
    with pytest.raises(ValidationError):
        McConfig(n_paths=500)
    with pytest.raises(ValidationError):
        McConfig(n_steps=10)
    with pytest.raises(ValidationError):
        McConfig(n_paths=1001)


def test_kernel_weights():
    kw = KernelWeights.build(0.65, 0.01, 100)
    assert np.all(kw.weights > 0)
    assert np.argmax(kw.weights) == 0  # the most recent step carries the largest weight
    # the weights integrate the kernel exactly: their sum is t^alpha / Gamma(alpha + 1)
    assert kw.weights.sum() == pytest.approx(1.0**0.65 / gamma(1.65), rel=1e-12)


def test_determinism_and_martingale():
    a = simulate_terminal(MID, 1.0, FAST)
    b = simulate_terminal(MID, 1.0, FAST)
    assert np.array_equal(a.spots, b.spots)
    mean, se = martingale_check(a)
    assert abs(mean - 1.0) <= 4 * se
    assert 0.0 <= a.truncated_fraction <= 1.0


def test_deterministic_variance_limit():
    # nu and kappa tiny: variance stays at v0, so log S_T ~ N(-v0 T / 2, v0 T)
    p = RoughHestonParams(-0.5, 0.04, 1e-8, 0.04, 1e-8, 0.1)
    s = simulate_terminal(p, 1.0, McConfig(n_paths=20_000, n_steps=50, seed=3, antithetic=False))
    logs = np.log(s.spots)
    n = len(logs)
    var = logs.var(ddof=1)
    se = var * np.sqrt(2.0 / (n - 1))
    assert abs(var - 0.04) <= 4 * se


def test_zero_strike_and_monotone_in_strike():
    s = simulate_terminal(MID, 1.0, FAST)
    est0, se0 = mc_call_price(MID, 0.0, 1.0, sample=s)
    assert abs(est0 - 1.0) <= 3 * se0
    est, se = mc_call_price(MID, np.array([0.8, 1.0, 1.2]), 1.0, sample=s)
    assert np.all(np.diff(est) < 0)


def test_agrees_with_fourier_at_midpoint():
    est, se = mc_call_price(MID, 1.0, 1.0, FAST)
    assert abs(est - call_price(MID, 1.0, 1.0)) <= 3 * se


def test_workers_do_not_change_result():
    cfg = McConfig(n_paths=20_000, n_steps=50, seed=2)
    a = simulate_terminal(MID, 0.6, cfg, workers=1)
    b = simulate_terminal(MID, 0.6, cfg, workers=2)
    assert np.array_equal(a.spots, b.spots)
