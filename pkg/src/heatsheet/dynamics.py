"""Spectral simulation of the stochastic heat system.

The field is stored as sine coefficients ``a[r, i, k]`` (replica, component,
mode).  Each mode of the stochastic convolution is an Ornstein-Uhlenbeck
process and is advanced exactly; the drift grad U is treated explicitly
(exponential Euler):

    a <- e^{-lam dt} a + (1 - e^{-lam dt}) / lam * <grad U(u), phi_k> + N(0, v_k)

with ``v_k = (1 - e^{-2 lam dt}) / (2 lam)``.  With U = 0 the scheme is exact
in law for any dt.
"""
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import ConfigError, DomainError, IntegrationError, StateError
from .potential import Zero
from .rng import as_generator
from .spectral import PI2, DEFAULT_TRUNCATION

log = logging.getLogger(__name__)

NOISE_BUFFER_BYTES = 32 * 2**20


def ou_mode_step(a, k, dt, rng, noise=True):
    """Exact OU transition of mode k over dt."""
    if dt <= 0:
        raise DomainError("dt must be positive")
    lam = PI2 * k * k
    decay = np.exp(-lam * dt)
    out = decay * np.asarray(a, dtype=float)
    if noise:
        var = -np.expm1(-2 * lam * dt) / (2 * lam)
        out = out + np.sqrt(var) * rng.standard_normal(np.shape(out))
    return out


@dataclass
class ModeState:
    """Sine coefficients of the field at one time; coeffs has shape (d, k_max)."""

    coeffs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if not np.all(np.isfinite(self.coeffs)):
            raise StateError("mode coefficients must be finite")

    def field(self, x):
        """Values u(time, x), shape ``x.shape + (d,)``."""
        return spectral.reconstruct(self.coeffs, x)


def convolution_variances(t, k_max):
    lam = PI2 * np.arange(1, k_max + 1, dtype=float) ** 2
    return -np.expm1(-2 * lam * t) / (2 * lam)


def sample_convolution(t, trunc=DEFAULT_TRUNCATION, rng=None, d=1, n=None):
    """Exact draw of the stochastic convolution v(t, .) in mode space.

    Returns a ModeState, or an array (n, d, k_max) of coefficients when ``n``
    is given.
    """
    if t <= 0:
        raise DomainError("sample_convolution needs t > 0")
    rng = as_generator(rng, "conv")
    sd = np.sqrt(convolution_variances(t, trunc.k_max))
    if n is None:
        return ModeState(sd * rng.standard_normal((d, trunc.k_max)), t)
    return sd * rng.standard_normal((n, d, trunc.k_max))


def stationary_coefficients(k_max, rng, d=1, n=1):
    """Mode coefficients drawn from the invariant law of the linear equation."""
    lam = PI2 * np.arange(1, k_max + 1, dtype=float) ** 2
    return rng.standard_normal((n, d, k_max)) / np.sqrt(2 * lam)


def grid_nodes(n_x):
    return np.linspace(0.0, 1.0, n_x + 1)


def trapezoid_weights(n_x):
    w = np.full(n_x + 1, 1.0 / n_x)
    w[0] = w[-1] = 0.5 / n_x
    return w


class Stepper:
    """Exponential-Euler transition for a batch of mode states."""

    def __init__(self, pot, dt, trunc=DEFAULT_TRUNCATION, n_x=128, check_bounds=True):
        if dt <= 0:
            raise DomainError("dt must be positive")
        pot.certify()
        if not pot.is_zero and dt > 1e-2:
            raise ConfigError(f"dt={dt} too large for a drifted run (need dt <= 1e-2)")
        if n_x < 2 * trunc.k_max:
            log.debug("n_x=%d below the recommended 2*k_max=%d", n_x, 2 * trunc.k_max)
        self.pot = pot
        self.dt = float(dt)
        self.trunc = trunc
        self.n_x = int(n_x)
        self.check_bounds = check_bounds
        lam = trunc.eigenvalues
        self.decay = np.exp(-lam * dt)
        self.gain = -np.expm1(-lam * dt) / lam
        self.noise_sd = np.sqrt(-np.expm1(-2 * lam * dt) / (2 * lam))
        self.x = grid_nodes(n_x)
        self.phi = spectral.sine_basis(self.x, trunc.k_max).T.copy()  # (K, n_x+1)
        self.phi[:, 0] = 0.0
        self.phi[:, -1] = 0.0
        self.project = (trapezoid_weights(n_x)[:, None] * self.phi.T).copy()  # (n_x+1, K)

    @property
    def k_max(self):
        return self.trunc.k_max

    def field(self, a):
        """Grid values (R, d, n_x+1) from coefficients (R, d, K)."""
        r, d, k = a.shape
        return (a.reshape(r * d, k) @ self.phi).reshape(r, d, -1)

    def drift_coeffs(self, u, step=None):
        """Projected drift (R, d, K) from grid values (R, d, n_x+1)."""
        g = np.moveaxis(self.pot.grad(np.moveaxis(u, 1, -1)), -1, 1)
        if not np.all(np.isfinite(g)):
            raise IntegrationError(f"non-finite drift at step {step}", step=step)
        if self.check_bounds and np.max(np.abs(g), initial=0.0) > self.pot.grad_sup * (1 + 1e-12) + 1e-300:
            raise IntegrationError(f"|grad U| exceeded its certified bound at step {step}", step=step)
        r, d, n = g.shape
        return (g.reshape(r * d, n) @ self.project).reshape(r, d, -1)

    def step(self, a, xi=None, drift=None, step=None):
        out = a * self.decay
        if drift is not None:
            out += self.gain * drift
        if xi is not None:
            out += self.noise_sd * xi
        if not np.all(np.isfinite(out)):
            raise IntegrationError(f"non-finite state at step {step}", step=step)
        return out


class NoiseBuffer:
    """Per-replica standard normals, drawn in chunks from each replica's own stream."""

    def __init__(self, gens, shape):
        self.gens = list(gens)
        self.shape = tuple(shape)
        per_step = 8 * int(np.prod(shape))
        self.chunk = int(max(4, min(256, NOISE_BUFFER_BYTES // max(1, per_step * len(self.gens)))))
        self.buf = np.empty((len(self.gens), self.chunk) + self.shape)
        self.pos = np.full(len(self.gens), self.chunk)

    def draw(self, idx):
        idx = np.asarray(idx)
        for r in idx[self.pos[idx] >= self.chunk]:
            self.buf[r] = self.gens[r].standard_normal((self.chunk,) + self.shape)
            self.pos[r] = 0
        out = self.buf[idx, self.pos[idx]]
        self.pos[idx] += 1
        return out


class BatchSimulator:
    """Advance many independent replicas in lockstep.

    ``gens`` holds one generator per replica.  When ``weight_pot`` is given the
    simulation itself is driftless and the exact discrete-time likelihood
    ratio of the ``weight_pot`` chain is accumulated in ``log_weight``.
    """

    def __init__(self, stepper, a0, gens, noise=True, weight_pot=None, keep_noise=False):
        self.stepper = stepper
        self.a = np.array(a0, dtype=float, copy=True)
        if self.a.ndim != 3:
            raise DomainError("initial coefficients must have shape (R, d, K)")
        self.n = self.a.shape[0]
        self.noise = NoiseBuffer(gens, self.a.shape[1:]) if noise else None
        self.n_step = 0
        self.weight_stepper = None
        if weight_pot is not None:
            if not stepper.pot.is_zero:
                raise ConfigError("likelihood weights need driftless base dynamics")
            self.weight_stepper = Stepper(weight_pot, stepper.dt, stepper.trunc, stepper.n_x)
            self.log_weight = np.zeros(self.n)
        self.kept_noise = [] if keep_noise else None

    @property
    def time(self):
        return self.n_step * self.stepper.dt

    def field(self, idx=None):
        a = self.a if idx is None else self.a[idx]
        return self.stepper.field(a)

    def advance(self, idx=None, u=None):
        """One step for replicas ``idx`` (all when None).

        ``u`` may carry the already reconstructed grid values of those replicas.
        """
        idx = np.arange(self.n) if idx is None else np.asarray(idx)
        a = self.a[idx]
        st = self.stepper
        xi = self.noise.draw(idx) if self.noise is not None else None
        drift = None
        if not st.pot.is_zero or self.weight_stepper is not None:
            if u is None:
                u = st.field(a)
        if not st.pot.is_zero:
            drift = st.drift_coeffs(u, self.n_step)
        if self.weight_stepper is not None:
            ws = self.weight_stepper
            b = ws.drift_coeffs(u, self.n_step)
            shift = ws.gain * b / ws.noise_sd
            self.log_weight[idx] += np.sum(shift * xi - 0.5 * shift**2, axis=(1, 2))
        if self.kept_noise is not None:
            self.kept_noise.append(xi.copy())
        self.a[idx] = st.step(a, xi, drift, self.n_step)
        self.n_step += 1


@dataclass
class GridPath:
    """Space-time lattice of field values for one realisation."""

    times: np.ndarray
    values: np.ndarray  # (n_times, n_x+1, d)
    dt: float
    seed: dict = field(default_factory=dict)
    noise: np.ndarray = None  # (n_times-1, d, k_max) standard normals of each step
    k_max: int = None

    @property
    def grid(self):
        return grid_nodes(self.values.shape[1] - 1)

    @property
    def n_x(self):
        return self.values.shape[1] - 1

    @property
    def d(self):
        return self.values.shape[2]

    def to_bytes(self):
        head = struct.pack("<QQQd", self.d, self.n_x, len(self.times), self.dt)
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    def write(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, raw):
        d, n_x, n_times, dt = struct.unpack("<QQQd", raw[:32])
        values = np.frombuffer(raw[32:], dtype="<f8").reshape(n_times, n_x + 1, d)
        return cls(np.arange(n_times) * dt, values.astype(float), dt)

    @classmethod
    def read(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def initial_coefficients(u0, trunc, d):
    """Sine coefficients (d, K) of u0; None means u0 = 0."""
    if u0 is None:
        return np.zeros((d, trunc.k_max))
    coeffs = spectral.sine_coefficients(u0, trunc.k_max)
    if coeffs.shape[0] != d:
        coeffs = np.broadcast_to(coeffs, (d, trunc.k_max)).copy()
    return coeffs


def n_steps_for(T, dt):
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise DomainError(f"horizon {T} is not a multiple of dt={dt}")
    return n


def integrate(u0, pot=None, T=1.0, dt=1e-3, trunc=DEFAULT_TRUNCATION, n_x=128, rng=None,
              noise=True, keep_noise=False, d=None):
    """Simulate one path on [0, T] and record the field at every step."""
    pot = Zero(d or 1) if pot is None else pot
    d = pot.d
    stepper = Stepper(pot, dt, trunc, n_x)
    n = n_steps_for(T, dt)
    a0 = initial_coefficients(u0, trunc, d)[None]
    gen = as_generator(rng, "noise")
    sim = BatchSimulator(stepper, a0, [gen], noise=noise, keep_noise=keep_noise)
    values = np.empty((n + 1, n_x + 1, d))
    for i in range(n):
        u = sim.field()
        values[i] = u[0].T
        sim.advance(u=u)
    values[n] = sim.field()[0].T
    kept = np.concatenate(sim.kept_noise) if keep_noise and noise else None
    seed = {"rng": repr(rng) if not hasattr(rng, "bit_generator") else "generator"}
    return GridPath(np.arange(n + 1) * dt, values, dt, seed, kept, trunc.k_max)


def girsanov_weight(path, pot, trunc=None):
    """Likelihood ratio of the ``pot``-drifted scheme against the driftless one.

    The path must come from driftless dynamics with stored step noise.  The
    weight is the exact ratio of the two Gaussian transition chains,
    ``exp(sum (g b xi / s) - 1/2 (g b / s)^2)`` over steps, components and modes,
    where b are the projected drift coefficients along the path, g the
    exponential-Euler gain and s the per-mode noise scale.  As dt -> 0 this
    is the exponential martingale exp(int b.dW - 1/2 int |b|^2).
    """
    if path.noise is None:
        raise StateError("path carries no stored noise increments; rerun with keep_noise=True")
    k_max = path.k_max if trunc is None else trunc.k_max
    trunc = trunc or spectral.Truncation(k_max)
    stepper = Stepper(pot, path.dt, trunc, path.n_x)
    u = np.moveaxis(path.values[:-1], -1, 1)  # (n, d, n_x+1)
    b = stepper.drift_coeffs(u)
    shift = stepper.gain * b / stepper.noise_sd
    return float(np.exp(np.sum(shift * path.noise - 0.5 * shift**2)))
