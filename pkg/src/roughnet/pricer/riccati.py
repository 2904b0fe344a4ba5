"""Fractional Riccati-Volterra solver for the rough Heston characteristic function.

We solve psi = I^alpha F(a, psi) with

    F(a, x) = -a(a + i)/2 + kappa (i a rho nu - 1) x + (kappa nu)^2 x^2 / 2

using the fractional Adams predictor-corrector scheme on a uniform grid. The
characteristic function of log S_T is then

    phi_T(a) = exp(theta kappa * int_0^T psi ds + v0 * I^{1-alpha} psi(T)).

Since psi = I^alpha F, the fractional integral I^{1-alpha} psi equals the plain
integral of F(a, psi), which is what we accumulate (trapezoid rule).

The core routine is vectorised over a batch of parameter sets and a batch of
frequencies per set; the per-step convolution is a batched mat-vec.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import gamma

from roughnet.errors import GridAlignmentError, RiccatiDivergenceError, ValidationError
from roughnet.pricer.params import RoughHestonParams


@dataclass(frozen=True)
class RiccatiSolution:
    alpha: float
    time_step: float
    psi: np.ndarray = field(repr=False)
    running_i1: np.ndarray = field(repr=False)
    running_i1ma: np.ndarray = field(repr=False)

    @property
    def times(self):
        return self.time_step * np.arange(np.shape(self.psi)[-1])


def riccati_rhs(a, x, kappa, rho, nu):
    return -0.5 * a * (a + 1j) + kappa * (1j * a * rho * nu - 1.0) * x + 0.5 * (kappa * nu) ** 2 * x * x


def _adams_weights(alpha, n_steps):
    """Predictor weights b_m, corrector weights c_m and the j=0 boundary term.

    alpha has shape (P,); every returned array has a leading P axis.
    """
    alpha = alpha[:, None]
    m = np.arange(n_steps + 2, dtype=float)[None, :]
    pa = m**alpha
    pa1 = m ** (alpha + 1.0)
    b = pa[:, 1:] - pa[:, :-1]  # m = 0..n
    c = pa1[:, 2:] + pa1[:, :-2] - 2.0 * pa1[:, 1:-1]  # m = 0..n-1
    k = m[:, : n_steps]
    a0 = k ** (alpha + 1.0) - (k - alpha) * (k + 1.0) ** alpha  # k = 0..n-1
    return b[:, : n_steps], c, a0


def adams_solve(a, kappa, rho, nu, alpha, dt, n_steps, implicit=True):
    """Solve the batched Riccati-Volterra equation.

    Parameters
    ----------
    a : complex array, shape (P, N)
        Frequencies, N per parameter set.
    kappa, rho, nu, alpha : arrays, shape (P,)
    dt : float
    n_steps : int
    implicit : bool
        Solve the corrector equation exactly (it is quadratic in the new value)
        instead of evaluating F at the predictor. The plain PECE step is unstable
        for high frequencies with H near 0 and large kappa*nu.

    Returns
    -------
    psi, rhs : complex arrays of shape (P, N, n_steps + 1)
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise ValidationError("frequencies must have shape (P, N)")
    P, N = a.shape
    kappa, rho, nu, alpha = (np.asarray(v, dtype=float).reshape(P, 1) for v in (kappa, rho, nu, alpha))

    b, c, a0 = _adams_weights(alpha[:, 0], n_steps)
    pred_scale = dt ** alpha / gamma(alpha + 1.0)
    corr_scale = dt ** alpha / gamma(alpha + 2.0)
    # reversed so that slice [n-1-k:] pairs weight m=k-j with history j=0..k
    b_rev = np.ascontiguousarray((b * pred_scale)[:, ::-1]).astype(complex)[:, :, None]
    c_rev = np.ascontiguousarray((c * corr_scale)[:, ::-1]).astype(complex)[:, :, None]
    a0_fix = (a0 - c) * corr_scale  # boundary correction for the j = 0 term

    psi = np.zeros((P, N, n_steps + 1), dtype=complex)
    rhs = np.empty_like(psi)
    rhs[:, :, 0] = riccati_rhs(a, 0.0, kappa, rho, nu)
    top = n_steps - 1
    # F(a, x) = A + B x + D x^2
    A = -0.5 * a * (a + 1j)
    B = kappa * (1j * a * rho * nu - 1.0)
    D = 0.5 * (kappa * nu) ** 2
    cA, cB, cD = corr_scale * A, corr_scale * B, corr_scale * D
    lin = 1.0 - cB
    for k in range(n_steps):
        hist = rhs[:, :, : k + 1]
        corr = np.matmul(hist, c_rev[:, top - k :])[:, :, 0]
        corr += a0_fix[:, k : k + 1] * rhs[:, :, 0]
        if implicit:
            # x = corr + c F(x)  <=>  cD x^2 - lin x + (corr + cA) = 0; take the root
            # that tends to (corr + cA)/lin as D -> 0, in cancellation-free form
            q = corr + cA
            disc = np.sqrt(lin * lin - 4.0 * cD * q)
            den = np.where(np.abs(lin + disc) >= np.abs(lin - disc), lin + disc, lin - disc)
            new = 2.0 * q / den
        else:
            pred = np.matmul(hist, b_rev[:, top - k :])[:, :, 0]
            new = corr + corr_scale * riccati_rhs(a, pred, kappa, rho, nu)
        if not np.all(np.isfinite(new)):
            raise RiccatiDivergenceError(f"Riccati solve diverged at step {k + 1}", step=k + 1)
        psi[:, :, k + 1] = new
        rhs[:, :, k + 1] = riccati_rhs(a, new, kappa, rho, nu)
    return psi, rhs


def running_integrals(psi, rhs, dt):
    """(int_0^t psi ds, I^{1-alpha} psi(t)) on the grid, via the trapezoid rule."""
    i1 = cumulative_trapezoid(psi, dx=dt, axis=-1, initial=0.0)
    i1ma = cumulative_trapezoid(rhs, dx=dt, axis=-1, initial=0.0)
    return i1, i1ma


def solve_riccati(a, params: RoughHestonParams, horizon: float, n_steps: int) -> RiccatiSolution:
    if not horizon > 0:
        raise ValidationError(f"horizon must be positive, got {horizon}")
    if int(n_steps) != n_steps or n_steps < 2:
        raise ValidationError(f"n_steps must be an integer >= 2, got {n_steps}")
    n_steps = int(n_steps)
    dt = horizon / n_steps
    p = params
    freqs = np.atleast_1d(np.asarray(a, dtype=complex))
    psi, rhs = adams_solve(
        freqs[None, :], np.array([p.kappa]), np.array([p.rho]), np.array([p.nu]), np.array([p.alpha]), dt, n_steps
    )
    i1, i1ma = running_integrals(psi, rhs, dt)
    if np.ndim(a) == 0:
        return RiccatiSolution(p.alpha, dt, psi[0, 0], i1[0, 0], i1ma[0, 0])
    return RiccatiSolution(p.alpha, dt, psi[0], i1[0], i1ma[0])


def grid_indices(maturities, dt, tol=1e-9):
    """Map maturities onto the uniform time grid, or raise if one falls between points."""
    mats = np.asarray(maturities, dtype=float)
    if np.any(mats <= 0):
        raise ValidationError("maturities must be positive")
    idx = np.rint(mats / dt)
    if np.any(np.abs(idx * dt - mats) > tol * np.maximum(1.0, mats)):
        raise GridAlignmentError(f"maturities {mats.tolist()} are not multiples of time step {dt}")
    return idx.astype(int)


def log_char_from_integrals(i1, i1ma, theta, kappa, v0):
    return theta * kappa * i1 + v0 * i1ma


def char_fn(params: RoughHestonParams, a, maturities, n_steps: int):
    """phi_T(a) for each T in ``maturities`` from one solve to max(maturities).

    A scalar ``a`` gives shape (len(maturities),); an array of frequencies gives
    (len(a), len(maturities)).
    """
    mats = np.atleast_1d(np.asarray(maturities, dtype=float))
    horizon = float(mats.max())
    sol = solve_riccati(a, params, horizon, n_steps)
    idx = grid_indices(mats, sol.time_step)
    logphi = log_char_from_integrals(
        sol.running_i1[..., idx], sol.running_i1ma[..., idx], params.theta, params.kappa, params.v0
    )
    return np.exp(logphi)
