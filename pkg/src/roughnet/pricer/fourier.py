"""European call prices by Lewis-type Fourier inversion and implied-vol surfaces.

With spot 1 and zero rates,

    C(K, T) = 1 - sqrt(K)/pi * int_0^inf Re[exp(i u k) phi_T(u - i/2)] du / (u^2 + 1/4)

where k = log(1/K). The integral is truncated to [0, u_max] and evaluated with
Gauss-Legendre nodes. Every node needs one Riccati solve; a single solve up to
the longest maturity serves every strike and maturity of the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, replace

import numpy as np

from roughnet.errors import AccuracyError, NumericalError, RoughNetError, ValidationError
from roughnet.pricer.blackscholes import implied_vol_array
from roughnet.pricer.params import RoughHestonParams, SmileGrid, VolSurface
from roughnet.pricer.riccati import adams_solve, grid_indices, log_char_from_integrals, running_integrals


PANEL_EDGES = (0.0, 0.01, 0.04, 0.16, 0.5, 1.0)


def _split(n, parts):
    return [len(c) for c in np.array_split(np.arange(n), parts)]


@dataclass(frozen=True)
class PricerConfig:
    steps_per_year: int = 200
    n_nodes: int = 128
    u_max: float = 200.0
    tail_tol: float = 1e-8
    # fraction of [0, u_max] treated as the tail when estimating truncation error
    tail_fraction: float = 0.1

    def __post_init__(self):
        if self.steps_per_year < 1 or self.n_nodes < 2 * (len(PANEL_EDGES) - 1) or not self.u_max > 0:
            raise ValidationError(f"invalid pricer config {self}")

    def nodes(self):
        """Composite Gauss-Legendre nodes and weights on [0, u_max].

        Panels are geometrically graded towards u = 0, where the integrand
        varies on the scale of the pole of 1/(u^2 + 1/4) and of the total
        variance; nodes are shared out evenly between panels.
        """
        edges = self.u_max * np.array(PANEL_EDGES)
        us, ws = [], []
        for (lo, hi), n in zip(zip(edges[:-1], edges[1:]), _split(self.n_nodes, len(edges) - 1)):
            x, w = np.polynomial.legendre.leggauss(n)
            us.append(lo + 0.5 * (hi - lo) * (x + 1.0))
            ws.append(0.5 * (hi - lo) * w)
        return np.concatenate(us), np.concatenate(ws)

    def time_grid(self, horizon):
        n = max(2, int(round(self.steps_per_year * horizon)))
        return horizon / n, n

    def as_dict(self):
        return asdict(self)

    def refined(self):
        """Wider, denser quadrature used to retry rows that fail the default one."""
        return replace(self, u_max=4 * self.u_max, n_nodes=4 * self.n_nodes)


def _param_arrays(params_list):
    arr = np.array([[p.rho, p.v0, p.kappa, p.theta, p.nu, p.alpha] for p in params_list])
    return arr.T


def lewis_log_char(params_list, maturities, config: PricerConfig):
    """log phi_T(u - i/2) at every node: shape (P, n_nodes, len(maturities))."""
    mats = np.asarray(maturities, dtype=float)
    horizon = float(mats.max())
    dt, n_steps = config.time_grid(horizon)
    idx = grid_indices(mats, dt)
    rho, v0, kappa, theta, nu, alpha = _param_arrays(params_list)
    u, _ = config.nodes()
    a = np.broadcast_to(u - 0.5j, (len(params_list), u.size))
    psi, rhs = adams_solve(a, kappa, rho, nu, alpha, dt, n_steps)
    i1, i1ma = running_integrals(psi, rhs, dt)
    return log_char_from_integrals(
        i1[:, :, idx], i1ma[:, :, idx], theta[:, None, None], kappa[:, None, None], v0[:, None, None]
    )


def lewis_prices(logphi, strikes, config: PricerConfig):
    """Call prices (P, nK, nT) and absolute tail estimates from precomputed log phi."""
    u, w = config.nodes()
    K = np.asarray(strikes, dtype=float)
    k = -np.log(K)
    # (P, N, 1, T) * (1, N, nK, 1)
    osc = np.exp(1j * u[:, None] * k[None, :])[None, :, :, None]
    integrand = (osc * np.exp(logphi)[:, :, None, :]).real / (u * u + 0.25)[None, :, None, None]
    scale = np.sqrt(K)[None, :, None] / np.pi
    integral = np.einsum("n,pnkt->pkt", w, integrand)
    tail_mask = u >= (1.0 - config.tail_fraction) * config.u_max
    tail = np.einsum("n,pnkt->pkt", w * tail_mask, np.abs(integrand))
    return 1.0 - scale * integral, scale * tail


def call_prices(params_list, grid: SmileGrid, config: PricerConfig = PricerConfig()):
    logphi = lewis_log_char(params_list, grid.maturities, config)
    if not np.all(np.isfinite(logphi.real)):
        raise NumericalError("non-finite characteristic function")
    prices, tail = lewis_prices(logphi, grid.strikes, config)
    return prices, tail


def _check_prices(prices, tail, grid, config):
    if np.any(tail > config.tail_tol):
        i, j = np.unravel_index(np.argmax(tail), tail.shape)
        raise AccuracyError(
            f"Fourier truncation tail {tail[i, j]:.3g} exceeds {config.tail_tol:g} "
            f"at K={grid.strikes[i]}, T={grid.maturities[j]}"
        )


def call_price(params: RoughHestonParams, moneyness: float, maturity: float,
               config: PricerConfig = PricerConfig()) -> float:
    if not (moneyness > 0 and maturity > 0):
        raise ValidationError("moneyness and maturity must be positive")
    grid = SmileGrid((moneyness,), (maturity,))
    prices, tail = call_prices([params], grid, config)
    _check_prices(prices[0], tail[0], grid, config)
    return float(prices[0, 0, 0])


def _surface_values(prices, grid):
    K = np.asarray(grid.strikes)[:, None]
    T = np.asarray(grid.maturities)[None, :]
    return implied_vol_array(prices, K, T)


def surface(params: RoughHestonParams, grid: SmileGrid = SmileGrid(),
            config: PricerConfig = PricerConfig()) -> VolSurface:
    prices, tail = call_prices([params], grid, config)
    _check_prices(prices[0], tail[0], grid, config)
    try:
        vols = _surface_values(prices[0], grid)
    except RoughNetError as exc:
        raise type(exc)(f"{exc} (params {params})") from exc
    meta = {"hurst_clamped": params.clamped, "effective_hurst": params.effective_hurst}
    return VolSurface(grid, vols, meta)


def surfaces(params_list, grid: SmileGrid = SmileGrid(), config: PricerConfig = PricerConfig(),
             retry: bool = True):
    """Implied-vol surfaces for a batch of parameter sets.

    Returns (values, errors): values has shape (P, nK, nT) with NaN rows where
    pricing failed, errors maps row index to the exception message. Rows that
    fail are retried once, alone, with ``config.refined()`` when ``retry``.
    """
    params_list = list(params_list)
    out = np.full((len(params_list),) + grid.shape, np.nan)
    errors = {}
    try:
        prices, tail = call_prices(params_list, grid, config)
    except NumericalError as exc:
        if len(params_list) == 1:
            errors[0] = str(exc)
        else:
            # a divergence anywhere poisons the batch; redo one row at a time
            for i, p in enumerate(params_list):
                row, err = surfaces([p], grid, config, retry=False)
                out[i] = row[0]
                errors.update({i: m for m in err.values()})
    else:
        for i in range(len(params_list)):
            try:
                _check_prices(prices[i], tail[i], grid, config)
                out[i] = _surface_values(prices[i], grid)
            except RoughNetError as exc:
                errors[i] = str(exc)
    if retry:
        for i in list(errors):
            row, err = surfaces([params_list[i]], grid, config.refined(), retry=False)
            if not err:
                out[i] = row[0]
                del errors[i]
    return out, errors
