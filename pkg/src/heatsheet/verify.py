"""Deterministic checks of the closed forms against independent computations."""
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from . import _kernels
from .invariant import (_bridge_cdf_series, _bridge_cdf_theta, bm_sup_cdf, bridge_sup_cdf,
                        bridge_sup_samples)
from .rng import RngStream
from .spectral import DEFAULT_TRUNCATION, green_kernel, sigma2, sine_basis, stationary_variance


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    note: str = ""

    def to_dict(self):
        return {"name": self.name, "value": float(self.value), "tolerance": float(self.tolerance),
                "passed": bool(self.passed), "note": self.note}


def _le(name, value, tol, note=""):
    return Check(name, float(value), tol, bool(value <= tol), note)


def chapman_kolmogorov(trunc=DEFAULT_TRUNCATION, n_nodes=1025, pairs=((0.05, 0.05), (0.05, 0.2), (0.1, 0.3))):
    """max |int G(t,x,z) G(s,z,y) dz - G(t+s,x,y)| over a grid of (x, y)."""
    z = np.linspace(0.0, 1.0, n_nodes)
    xs = np.linspace(0.05, 0.95, 19)
    worst = 0.0
    for t, s in pairs:
        gx = green_kernel(t, xs[:, None], z[None, :], trunc)  # (nx, nz)
        gy = green_kernel(s, z[:, None], xs[None, :], trunc)  # (nz, ny)
        lhs = integrate.simpson(gx[:, :, None] * gy[None, :, :], x=z, axis=1)
        rhs = green_kernel(t + s, xs[:, None], xs[None, :], trunc)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst


def sigma2_quadrature(t, x, trunc=DEFAULT_TRUNCATION, n_nodes=2049):
    """int_0^t int_0^1 G(r, x, v)^2 dv dr by Simpson in v and adaptive quadrature in r."""
    v = np.linspace(0.0, 1.0, n_nodes)
    lam = trunc.eigenvalues
    phi_x = sine_basis(x, trunc.k_max)
    phi_v = sine_basis(v, trunc.k_max)

    def inner(r):
        g = phi_v @ (phi_x * np.exp(-lam * r))
        return integrate.simpson(g * g, x=v)

    val, _ = integrate.quad(inner, 0.0, t, limit=400, epsabs=1e-15, epsrel=1e-13, points=[1e-3, 1e-2])
    return val


def bm_sup_samples(n, n_x=64, seed=0, batch=100_000):
    """Exact samples of sup_{[0,1]} |B| for Brownian motion (grid walk plus bridge extremes)."""
    out = np.empty(n)
    h = 1.0 / n_x
    for b, start in enumerate(range(0, n, batch)):
        m = min(n, start + batch) - start
        g = RngStream(seed, b, "bmsup").generator()
        steps = g.standard_normal((m, n_x)) * np.sqrt(h)
        path = np.zeros((m, n_x + 1))
        np.cumsum(steps, axis=1, out=path[:, 1:])
        u1 = 1.0 - g.random((m, n_x))
        u2 = 1.0 - g.random((m, n_x))
        out[start:start + m] = _kernels.bridge_sup(path, u1, u2, 1.0, h)
    return out


def run_suite(seed=0, mc_n=1_000_000, h_mc_n=1_000_000, trunc=DEFAULT_TRUNCATION):
    """Every closed-form check, each with its tolerance and pass flag."""
    checks = []
    checks.append(_le("chapman_kolmogorov_residual", chapman_kolmogorov(trunc), 1e-8,
                      "K_max=128, 1025-node Simpson, t,s >= 0.05"))
    worst = 0.0
    for t, x in ((0.01, 0.5), (0.1, 0.3), (1.0, 0.5), (0.5, 0.9)):
        worst = max(worst, abs(float(sigma2(t, x, trunc)) - sigma2_quadrature(t, x, trunc)))
    checks.append(_le("sigma2_vs_double_quadrature", worst, 1e-10))
    # the truncated series misses sum_{k > K} phi_k^2 / (2 lam_k) <= 1 / (pi^2 K)
    gap = max(abs(float(sigma2(20.0, x, trunc)) - float(stationary_variance(x))) for x in (0.1, 0.5, 0.7))
    checks.append(_le("sigma2_long_time_limit", gap, 1 / (np.pi**2 * trunc.k_max)))

    r = np.linspace(0.15, 0.5, 200)
    checks.append(_le("F_series_vs_theta_dual", np.abs(_bridge_cdf_series(r) - _bridge_cdf_theta(r)).max(), 1e-12))
    # below R ~ 0.04 F underflows double precision, so the grid starts at 0.1
    grid = np.linspace(0.1, 4.0, 100)
    f = bridge_sup_cdf(grid)
    checks.append(Check("F_strictly_increasing", float(np.diff(f).min()), 0.0,
                        bool(np.all(np.diff(f) > 0) and np.all((f > 0) & (f < 1)))))
    checks.append(_le("F(1)_reference", abs(bridge_sup_cdf(1.0) - 0.7300), 5e-5))
    checks.append(_le("H(1)_reference", abs(bm_sup_cdf(1.0) - 0.3707), 1e-4))
    margin = min(bridge_sup_cdf(R) - bm_sup_cdf(R / 2) for R in (0.5, 1.0, 2.0))
    checks.append(Check("F(R)_ge_H(R/2)", margin, 0.0, bool(margin >= 0)))
    checks.append(_le("H_large_x_limit", abs(1 - bm_sup_cdf(8.0)), 1e-12))

    sups = bridge_sup_samples(mc_n, 64, seed)
    ks = stats.kstest(sups, bridge_sup_cdf).statistic
    checks.append(_le("F_vs_monte_carlo_ks", ks, 1.63 / np.sqrt(mc_n), f"n={mc_n} exact bridge sups"))
    hs = bm_sup_samples(h_mc_n, 64, seed)
    ks_h = stats.kstest(hs, bm_sup_cdf).statistic
    checks.append(_le("H_vs_monte_carlo_ks", ks_h, 1.63 / np.sqrt(h_mc_n), f"n={h_mc_n} exact motion sups"))
    return checks
