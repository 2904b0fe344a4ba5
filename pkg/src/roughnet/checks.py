"""Self-checks of the Fourier pricer against independent references.

Two references are used: the classical Heston closed form when H = 1/2, and the
Monte Carlo oracle for genuinely rough parameters. ``price_scale`` multiplies
the Fourier prices before comparison; it exists so tests can confirm that a
corrupted pricer is caught.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from roughnet.dataset import NARROW, ParameterBox
from roughnet.mc import McConfig, mc_call_price
from roughnet.pricer.blackscholes import implied_vol_array
from roughnet.pricer.fourier import PricerConfig, call_prices
from roughnet.pricer.heston import heston_call
from roughnet.pricer.params import RoughHestonParams, SmileGrid

HESTON_VOL_TOL = 1e-3
MC_SE_TOL = 3.0


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""

    def as_dict(self):
        return asdict(self)


def midpoint_params(box: ParameterBox = NARROW) -> RoughHestonParams:
    return RoughHestonParams.from_array(box.midpoint)


def heston_vols(params: RoughHestonParams, grid: SmileGrid):
    K = np.asarray(grid.strikes)[:, None]
    T = np.asarray(grid.maturities)[None, :]
    prices = np.array([[heston_call(k, t, params.v0, params.kappa, params.theta, params.kappa * params.nu,
                                    params.rho) for t in grid.maturities] for k in grid.strikes])
    return implied_vol_array(prices, K, T)


def heston_check(params: RoughHestonParams, grid: SmileGrid = SmileGrid(),
                 config: PricerConfig = PricerConfig(), price_scale=1.0) -> Check:
    """Max absolute implied-vol gap to classical Heston over the grid (H forced to 1/2)."""
    params = replace(params, hurst=0.5)
    prices, _ = call_prices([params], grid, config)
    K = np.asarray(grid.strikes)[:, None]
    T = np.asarray(grid.maturities)[None, :]
    ours = implied_vol_array(prices[0] * price_scale, K, T)
    gap = np.abs(ours - heston_vols(params, grid))
    i, j = np.unravel_index(np.argmax(gap), gap.shape)
    return Check("heston_h05_max_vol_gap", float(gap.max()), HESTON_VOL_TOL, bool(gap.max() <= HESTON_VOL_TOL),
                 f"worst cell K={grid.strikes[i]}, T={grid.maturities[j]}")


def mc_check(params: RoughHestonParams, moneyness=1.0, maturity=1.0, config: PricerConfig = PricerConfig(),
             mc_cfg: McConfig = McConfig(), price_scale=1.0) -> Check:
    """Fourier price against the MC estimate, in standard errors."""
    grid = SmileGrid((moneyness,), (maturity,))
    prices, _ = call_prices([params], grid, config)
    fourier = float(prices[0, 0, 0]) * price_scale
    est, se = mc_call_price(params, moneyness, maturity, mc_cfg)
    z = abs(fourier - est) / se
    return Check("fourier_vs_mc_se", float(z), MC_SE_TOL, bool(z <= MC_SE_TOL),
                 f"fourier={fourier:.6f} mc={est:.6f} se={se:.2e} paths={mc_cfg.n_paths}")


def validate_pricer(box: ParameterBox = NARROW, grid: SmileGrid = SmileGrid(),
                    config: PricerConfig = PricerConfig(), mc_cfg: McConfig = McConfig(), price_scale=1.0):
    p = midpoint_params(box)
    return [heston_check(p, grid, config, price_scale), mc_check(p, 1.0, 1.0, config, mc_cfg, price_scale)]
