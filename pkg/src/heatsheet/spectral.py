"""Closed-form evaluators for the Dirichlet heat kernel on [0, 1].

Everything here is built on the sine eigenbasis ``phi_k(x) = sqrt(2) sin(k pi x)``
with eigenvalues ``lambda_k = pi^2 k^2``.  All functions are pure and
vectorised over their spatial arguments.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import simpson

from .errors import DegeneracyError, DomainError, PrecisionError

PI2 = np.pi**2
TAIL_TOL = 1e-14


@dataclass(frozen=True)
class Truncation:
    """Number of retained sine modes and the smallest supported time."""

    k_max: int = 128
    t_min: float = 1e-3

    def __post_init__(self):
        if int(self.k_max) < 1:
            raise DomainError("k_max must be >= 1")
        if self.t_min <= 0:
            raise DomainError("t_min must be positive")
        if self.tail_bound(self.t_min) >= TAIL_TOL:
            raise PrecisionError(
                f"k_max={self.k_max} leaves a kernel tail of {self.tail_bound(self.t_min):.2e} "
                f"at t_min={self.t_min}; raise k_max"
            )

    @property
    def modes(self):
        return np.arange(1, self.k_max + 1)

    @property
    def eigenvalues(self):
        return PI2 * self.modes.astype(float) ** 2

    def tail_bound(self, t):
        """Upper bound on sum_{k > k_max} exp(-pi^2 k^2 t)."""
        if t <= 0:
            return np.inf
        k = self.k_max + 1
        ratio = np.exp(-PI2 * (2 * k + 1) * t)
        return float(np.exp(-PI2 * k * k * t) / (1.0 - ratio))

    def check(self, t):
        tail = self.tail_bound(t)
        if tail >= TAIL_TOL:
            raise PrecisionError(
                f"series tail {tail:.2e} at t={t} exceeds {TAIL_TOL:g}; increase k_max (now {self.k_max})"
            )


DEFAULT_TRUNCATION = Truncation()


class SpaceTimePoint(NamedTuple):
    t: float
    x: float


class GaussianMarginal(NamedTuple):
    """Law of u(t, x): N(mean, variance * I_d)."""

    mean: np.ndarray
    variance: float

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        d = self.mean.shape[-1]
        r2 = np.sum((z - self.mean) ** 2, axis=-1)
        return (2 * np.pi * self.variance) ** (-d / 2) * np.exp(-r2 / (2 * self.variance))


def sine_basis(x, k_max):
    """phi_k(x) for k = 1..k_max; shape ``x.shape + (k_max,)``."""
    x = np.asarray(x, dtype=float)
    k = np.arange(1, k_max + 1)
    return np.sqrt(2.0) * np.sin(np.pi * x[..., None] * k)


def _check_unit(x, name="x"):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > 1):
        raise DomainError(f"{name} must lie in [0, 1]")
    return x


def green_kernel(t, x, y, trunc=DEFAULT_TRUNCATION):
    """Truncated Dirichlet heat kernel G(t, x, y)."""
    if t <= 0:
        raise DomainError("green_kernel needs t > 0")
    trunc.check(t)
    x = _check_unit(x)
    y = _check_unit(y, "y")
    decay = np.exp(-trunc.eigenvalues * t)
    return np.sum(decay * sine_basis(x, trunc.k_max) * sine_basis(y, trunc.k_max), axis=-1)


def _as_components(values):
    values = np.asarray(values, dtype=float)
    return values[:, None] if values.ndim == 1 else values


def sine_coefficients(u0, k_max, n_nodes=None):
    """Sine coefficients <u0_i, phi_k>, shape (d, k_max).

    ``u0`` is either a callable evaluated on ``n_nodes`` equispaced nodes
    (default ``2 k_max + 1``) or an array of samples on an equispaced grid of
    [0, 1] including both endpoints, shape (n,) or (n, d).  Integration is by
    composite Simpson.
    """
    if callable(u0):
        n_nodes = 2 * k_max + 1 if n_nodes is None else n_nodes
        nodes = np.linspace(0.0, 1.0, n_nodes)
        samples = _as_components(u0(nodes))
    else:
        samples = _as_components(u0)
        nodes = np.linspace(0.0, 1.0, samples.shape[0])
    if samples.shape[0] < 3:
        raise DomainError("need at least 3 samples of u0")
    phi = sine_basis(nodes, k_max)
    return simpson(samples.T[:, :, None] * phi[None], x=nodes, axis=1)


def semigroup_coeffs(coeffs, t):
    """Apply the heat semigroup exactly in mode space."""
    coeffs = np.asarray(coeffs, dtype=float)
    k = np.arange(1, coeffs.shape[-1] + 1)
    return coeffs * np.exp(-PI2 * k**2 * t)


def reconstruct(coeffs, x):
    """Field values sum_k a_{i,k} phi_k(x); shape ``x.shape + (d,)``."""
    coeffs = np.asarray(coeffs, dtype=float)
    phi = sine_basis(x, coeffs.shape[-1])
    return phi @ coeffs.T


def semigroup_apply(u0, t, x, trunc=DEFAULT_TRUNCATION, coeffs=None):
    """lambda(t, x) = int_0^1 G(t, x, v) u0(v) dv, one value per component.

    Pass precomputed sine coefficients through ``coeffs`` to skip quadrature.
    """
    if t < 0:
        raise DomainError("semigroup_apply needs t >= 0")
    x = _check_unit(x)
    if coeffs is None:
        coeffs = sine_coefficients(u0, trunc.k_max)
    return reconstruct(semigroup_coeffs(coeffs, t), x)


def sigma2(t, x, trunc=DEFAULT_TRUNCATION):
    """Var(u_i(t, x)) of the stochastic convolution, truncated closed form."""
    x = np.asarray(x, dtype=float)
    if t < 0:
        raise DomainError("sigma2 needs t >= 0")
    lam = trunc.eigenvalues
    weights = -np.expm1(-2 * lam * t) / (2 * lam)
    return np.sum(sine_basis(x, trunc.k_max) ** 2 * weights, axis=-1)


def stationary_variance(x):
    """Pointwise variance of the invariant Gaussian law: x(1 - x)/2."""
    x = np.asarray(x, dtype=float)
    return x * (1.0 - x) / 2.0


def cov_v(t, x, s, y, trunc=DEFAULT_TRUNCATION):
    """Cov(v_i(t, x), v_i(s, y)) for one component of the stochastic convolution."""
    if t < 0 or s < 0:
        raise DomainError("cov_v needs t, s >= 0")
    lam = trunc.eigenvalues
    # e^{-lam(t+s)}(e^{2 lam min} - 1) rewritten to avoid overflow
    weights = (np.exp(-lam * abs(t - s)) - np.exp(-lam * (t + s))) / (2 * lam)
    phi_x = sine_basis(x, trunc.k_max)
    phi_y = sine_basis(y, trunc.k_max)
    return np.sum(phi_x * phi_y * weights, axis=-1)


def marginal(t, x, u0, trunc=DEFAULT_TRUNCATION, d=None):
    """Gaussian law of u(t, x) for the drift-free equation."""
    if t <= 0:
        raise DomainError("marginal law needs t > 0")
    trunc.check(t)
    mean = _mean(u0, t, x, trunc, d)
    return GaussianMarginal(mean, float(sigma2(t, x, trunc)))


def _mean(u0, t, x, trunc, d):
    if u0 is None:
        return np.zeros(d or 1)
    return np.atleast_1d(semigroup_apply(u0, t, x, trunc))


def marginal_density(t, x, u0, z, trunc=DEFAULT_TRUNCATION):
    """Density of u(t, x) at z for the drift-free equation started at u0."""
    return marginal(t, x, u0, trunc).pdf(z)


def joint_covariance(t, x, s, y, trunc=DEFAULT_TRUNCATION):
    """2x2 covariance of (v_i(t, x), v_i(s, y))."""
    a = float(sigma2(t, x, trunc))
    b = float(sigma2(s, y, trunc))
    c = float(cov_v(t, x, s, y, trunc))
    return np.array([[a, c], [c, b]])


def joint_density_v(t, x, s, y, z1, z2, trunc=DEFAULT_TRUNCATION):
    """Joint density of (v(t, x), v(s, y)) at (z1, z2); product over components."""
    if (t, x) == (s, y):
        raise DomainError("joint density needs distinct points")
    if t <= 0 or s <= 0:
        raise DomainError("joint density needs positive times")
    trunc.check(min(t, s))
    cov = joint_covariance(t, x, s, y, trunc)
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] ** 2
    if det < 1e-300:
        raise DegeneracyError(
            f"covariance of v at ({t}, {x}) and ({s}, {y}) is singular (det={det:.3e})"
        )
    z1 = np.atleast_1d(np.asarray(z1, dtype=float))
    z2 = np.atleast_1d(np.asarray(z2, dtype=float))
    d = z1.shape[-1]
    inv = np.array([[cov[1, 1], -cov[0, 1]], [-cov[0, 1], cov[0, 0]]]) / det
    quad = inv[0, 0] * z1**2 + 2 * inv[0, 1] * z1 * z2 + inv[1, 1] * z2**2
    return (2 * np.pi) ** (-d) * det ** (-d / 2) * np.exp(-0.5 * np.sum(quad, axis=-1))


def parabolic_metric(p1, p2):
    """|t - s|^{1/2} + |x - y|."""
    (t, x), (s, y) = p1, p2
    return abs(t - s) ** 0.5 + abs(x - y)


def regularity_constants(t0, trunc=DEFAULT_TRUNCATION):
    """Constants (c1, c2) bounding the space and time Lipschitz moduli of lambda.

    For ||u0||_inf <= N and t, s >= t0:
    |lambda(t,x) - lambda(t,y)| <= c1 N |x - y| and
    |lambda(t,x) - lambda(s,x)| <= c2 N |t - s|.
    """
    k = trunc.modes.astype(float)
    decay = np.exp(-PI2 * k**2 * t0)
    return 2 * np.pi * np.sum(k * decay), 2 * PI2 * np.sum(k**2 * decay)
