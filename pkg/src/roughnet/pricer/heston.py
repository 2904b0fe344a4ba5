"""Closed-form classical Heston pricing, used as the H = 1/2 oracle.

This path shares no code with the Riccati solver or the Lewis quadrature: the
characteristic function uses the "little trap" closed form and prices come from
the two-probability representation integrated with adaptive quadrature.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad


def heston_log_char(u, T, v0, kappa, theta, sigma, rho):
    """E[exp(i u log S_T)] for S_0 = 1, zero rates; u may be complex."""
    u = np.asarray(u, dtype=complex)
    beta = kappa - 1j * rho * sigma * u
    d = np.sqrt(beta**2 + sigma**2 * (1j * u + u**2))
    g = (beta - d) / (beta + d)
    edt = np.exp(-d * T)
    D = (beta - d) / sigma**2 * (1.0 - edt) / (1.0 - g * edt)
    C = kappa * theta / sigma**2 * ((beta - d) * T - 2.0 * np.log((1.0 - g * edt) / (1.0 - g)))
    return C + D * v0


def heston_riccati_integrals(u, T, v0, kappa, theta, sigma, rho):
    """Closed-form (int_0^T psi ds, psi(T)) for the classical Riccati ODE."""
    u = complex(u)
    beta = kappa - 1j * rho * sigma * u
    d = np.sqrt(beta**2 + sigma**2 * (1j * u + u**2))
    g = (beta - d) / (beta + d)
    edt = np.exp(-d * T)
    psi_T = (beta - d) / sigma**2 * (1.0 - edt) / (1.0 - g * edt)
    int_psi = ((beta - d) * T - 2.0 * np.log((1.0 - g * edt) / (1.0 - g))) / sigma**2
    return int_psi, psi_T


def heston_call(K, T, v0, kappa, theta, sigma, rho):
    """Spot-normalised call price C = P1 - K P2."""
    k = np.log(K)

    def phi(u):
        return np.exp(heston_log_char(u, T, v0, kappa, theta, sigma, rho))

    def p1_integrand(u):
        return (np.exp(-1j * u * k) * phi(u - 1j) / (1j * u)).real

    def p2_integrand(u):
        return (np.exp(-1j * u * k) * phi(u) / (1j * u)).real

    opts = dict(limit=400, epsabs=1e-13, epsrel=1e-12)
    i1 = quad(p1_integrand, 0.0, np.inf, **opts)[0]
    i2 = quad(p2_integrand, 0.0, np.inf, **opts)[0]
    p1 = 0.5 + i1 / np.pi
    p2 = 0.5 + i2 / np.pi
    return p1 - K * p2
