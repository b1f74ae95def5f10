"""Invariant measure: Brownian-bridge base laws, Gibbs tilting, sup-norm laws.

Two base laws are provided.  ``standard`` is d independent Brownian bridges
(covariance min(x, y) - xy per component).  ``stationary`` is the invariant
law of the linear equation with unit noise, whose covariance is half of
that.  The Gibbs measure tilts a base law by exp(2 int_0^1 U(phi(x)) dx).

Bridge samples are synthesised on the grid x_j = j / n_x from the discrete
sine modes of the grid, which makes the grid marginals exact.  Between grid
nodes the path is a Brownian bridge, so its sup-norm is sampled exactly from
the conditional law of each segment's maximum and minimum.
"""
from dataclasses import dataclass

import numpy as np
from scipy import fft, stats
from scipy.special import ndtr

from . import _kernels
from .dynamics import (BatchSimulator, Stepper, initial_coefficients, n_steps_for,
                       sample_convolution, trapezoid_weights)
from .errors import DomainError, EfficiencyError
from .potential import Zero
from .rng import RngStream, as_generator, generators
from .spectral import DEFAULT_TRUNCATION, Truncation, semigroup_coeffs, sine_basis

MODES = {"standard": 1.0, "stationary": 0.5}
MIN_ACCEPTANCE = 1e-4
MAX_PROPOSALS = 1_000_000


def _var_rate(mode):
    try:
        return MODES[mode]
    except KeyError:
        raise DomainError(f"unknown base mode {mode!r}; use 'standard' or 'stationary'") from None


@dataclass
class BridgeSample:
    """Grid values (n, n_x+1, d) of pinned paths with their exact sup-norms."""

    values: np.ndarray
    sup: np.ndarray
    mode: str

    @property
    def grid_sup(self):
        return np.abs(self.values).max(axis=(1, 2))

    def __len__(self):
        return self.values.shape[0]

    def subset(self, mask):
        return BridgeSample(self.values[mask], self.sup[mask], self.mode)


def grid_mode_sd(n_x):
    """Standard deviations of the discrete sine modes of a grid Brownian bridge."""
    h = 1.0 / n_x
    k = np.arange(1, n_x)
    return h / (2.0 * np.sin(k * np.pi * h / 2.0))


def sample_bridge(mode="standard", n_x=128, rng=None, n=1, d=1, trunc=None, exact_sup=True):
    """Draw n pinned paths of the chosen base law on the grid j / n_x.

    By default the discrete sine modes of the grid are used, which makes the
    grid marginals exact and allows an exact sup-norm draw.  Passing
    ``trunc`` instead sums the continuum series phi_k(x) xi_k sd / (k pi)
    over k <= trunc.k_max; its ``sup`` is then the grid maximum.
    """
    rate = _var_rate(mode)
    if n_x < 2:
        raise DomainError("n_x must be >= 2")
    gen = as_generator(rng, "bridge")
    values = np.zeros((n, n_x + 1, d))
    if trunc is not None:
        k = trunc.modes
        xi = gen.standard_normal((n, d, len(k)))
        basis = sine_basis(np.arange(n_x + 1) / n_x, trunc.k_max).T
        basis[:, [0, -1]] = 0.0
        values[:] = np.moveaxis((xi * (np.sqrt(rate) / (k * np.pi))) @ basis, 1, -1)
        return BridgeSample(values, np.abs(values).max(axis=(1, 2)), mode)
    sd = grid_mode_sd(n_x) * np.sqrt(rate)
    xi = gen.standard_normal((n, d, n_x - 1))
    # values_j = sum_k sd_k xi_k sqrt(2) sin(k pi j / n_x); DST-I carries a factor 2
    inner = fft.dst(sd * xi, type=1, axis=-1) / np.sqrt(2.0)
    values[:, 1:-1, :] = np.moveaxis(inner, 1, -1)
    if exact_sup:
        sup = path_sup(values, rate, gen)
    else:
        sup = np.abs(values).max(axis=(1, 2))
    return BridgeSample(values, sup, mode)


def path_sup(values, rate, gen):
    """Exact draw of sup_x |phi(x)| given grid values of a bridge with variance rate ``rate``."""
    n, npts, d = values.shape
    rows = np.ascontiguousarray(np.moveaxis(values, -1, 1).reshape(n * d, npts))
    u_max = 1.0 - gen.random((n * d, npts - 1))
    u_min = 1.0 - gen.random((n * d, npts - 1))
    sups = _kernels.bridge_sup(rows, u_max, u_min, float(rate), 1.0 / (npts - 1))
    return sups.reshape(n, d).max(axis=1)


def bridge_sup_samples(n, n_x=64, rng=None, batch=100_000, mode="standard"):
    """Exact samples of sup |B0| for the chosen base law (d = 1)."""
    out = np.empty(n)
    for b, start in enumerate(range(0, n, batch)):
        stop = min(n, start + batch)
        gen = RngStream(_seed_of(rng), b, "bsup").generator()
        out[start:stop] = sample_bridge(mode, n_x, gen, n=stop - start).sup
    return out


def _seed_of(rng):
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    if rng is None:
        return 0
    return int(as_generator(rng).integers(2**63))


def bridge_sup_cdf(R):
    """P(sup |B0| <= R) for a standard Brownian bridge B0."""
    R = np.asarray(R, dtype=float)
    if np.any(R <= 0):
        raise DomainError("bridge_sup_cdf needs R > 0")
    small = R < 0.2
    out = np.empty_like(R)
    out[small] = _bridge_cdf_theta(R[small])
    out[~small] = _bridge_cdf_series(R[~small])
    return out if out.ndim else float(out)


def _bridge_cdf_series(R, terms=60):
    k = np.arange(1, terms + 1)
    R = np.asarray(R, dtype=float)[..., None]
    return 1.0 + 2.0 * np.sum((-1.0) ** k * np.exp(-2.0 * k**2 * R**2), axis=-1)


def _bridge_cdf_theta(R, terms=60):
    k = np.arange(1, terms + 1)
    R = np.asarray(R, dtype=float)[..., None]
    return np.sqrt(2 * np.pi) / R[..., 0] * np.sum(np.exp(-((2 * k - 1) ** 2) * np.pi**2 / (8 * R**2)), axis=-1)


def bm_sup_cdf(x):
    """P(sup_{[0,1]} |B| <= x) for standard Brownian motion B."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("bm_sup_cdf needs x > 0")
    big = x > 1.5
    out = np.empty_like(x)
    out[~big] = _bm_cdf_series(x[~big])
    out[big] = _bm_cdf_reflection(x[big])
    return out if out.ndim else float(out)


def _bm_cdf_series(x, terms=60):
    k = np.arange(terms)
    x = np.asarray(x, dtype=float)[..., None]
    body = (-1.0) ** k / (2 * k + 1) * np.exp(-((2 * k + 1) ** 2) * np.pi**2 / (8 * x**2))
    return 4.0 / np.pi * np.sum(body, axis=-1)


def _bm_cdf_reflection(x, terms=30):
    # sum over k of (-1)^k [Phi((2k+1)x) - Phi((2k-1)x)]
    k = np.arange(-terms, terms + 1)
    x = np.asarray(x, dtype=float)[..., None]
    return np.sum((-1.0) ** np.abs(k) * (ndtr((2 * k + 1) * x) - ndtr((2 * k - 1) * x)), axis=-1)


@dataclass
class TiltResult:
    """Outcome of a rejection run; ``record`` rows are (log tilt, accepted) per proposal."""

    draws: list
    proposals: int
    accepted: int
    record: np.ndarray

    @property
    def acceptance_rate(self):
        return self.accepted / self.proposals

    @property
    def acceptance_se(self):
        p = self.acceptance_rate
        return float(np.sqrt(p * (1 - p) / self.proposals))

    @property
    def accepted_log_tilt(self):
        return self.record[self.record[:, 1] > 0, 0]

    @property
    def proposal_log_tilt(self):
        return self.record[:, 0]


def rejection_tilt(propose, log_tilt, log_bound, n_target, gen, batch=2000,
                   max_proposals=MAX_PROPOSALS, min_rate=MIN_ACCEPTANCE):
    """Rejection sampler for a base law tilted by exp(log_tilt) <= exp(log_bound).

    ``propose(k)`` returns k base draws and ``log_tilt(draws)`` their log
    density ratios.  Accepted draws are returned as (batch, indices) pairs.
    """
    kept, rows = [], []
    accepted = proposals = 0
    while accepted < n_target:
        draws = propose(batch)
        lt = np.asarray(log_tilt(draws), dtype=float)
        if np.any(lt > log_bound + 1e-9):
            raise DomainError("log tilt exceeded its certified bound")
        flags = gen.random(len(lt)) < np.exp(lt - log_bound)
        keep = np.flatnonzero(flags)
        need = n_target - accepted
        # proposals after the last needed acceptance are discarded unseen
        used = len(lt) if len(keep) < need else int(keep[need - 1]) + 1
        proposals += used
        rows.append(np.column_stack([lt[:used], flags[:used]]))
        idx = keep[:need]
        if len(idx):
            kept.append((draws, idx))
            accepted += len(idx)
        if proposals >= max_proposals and accepted / proposals < min_rate:
            raise EfficiencyError(
                f"acceptance rate {accepted / proposals:.2e} after {proposals} proposals; "
                "rescale the potential or use a different base law"
            )
    return TiltResult(kept, proposals, accepted, np.vstack(rows))


@dataclass
class GibbsSampleBatch:
    samples: BridgeSample
    tilt: TiltResult
    potential: object
    proposal_sup: np.ndarray = None

    @property
    def proposals(self):
        return self.tilt.proposals

    @property
    def accepted(self):
        return self.tilt.accepted

    @property
    def acceptance_rate(self):
        return self.tilt.acceptance_rate

    @property
    def acceptance_se(self):
        return self.tilt.acceptance_se

    def to_dict(self):
        lt = self.tilt.record[:, 0] / 2.0
        acc = self.tilt.record[:, 1] > 0
        return {
            "potential": self.potential.to_dict(), "mode": self.samples.mode,
            "proposals": self.proposals, "accepted": self.accepted,
            "acceptance_rate": self.acceptance_rate, "acceptance_se": self.acceptance_se,
            "mean_int_u_accepted": float(lt[acc].mean()), "mean_int_u_proposed": float(lt.mean()),
        }

    def raw_rows(self):
        """(sup-norm, int U, accepted flag) per proposal."""
        return np.column_stack([self.proposal_sup, self.tilt.record[:, 0] / 2.0, self.tilt.record[:, 1]])


def integral_u(pot, values):
    """Trapezoid approximation of int_0^1 U(phi(x)) dx for each sample."""
    n_x = values.shape[1] - 1
    return pot.value(values) @ trapezoid_weights(n_x)


def gibbs_sample(pot=None, mode="stationary", n_target=1000, n_x=128, rng=None, d=None, batch=2000, trunc=None):
    """Exact draws from the tilted measure exp(2 int U) base(d phi) / Z.

    With ``trunc`` the base law is the truncated sine series (the law the
    spectral dynamics can reach) instead of the grid-exact bridge.
    """
    pot = Zero(d or 1) if pot is None else pot
    pot.certify()
    _var_rate(mode)
    gen = as_generator(rng, "gibbs")
    sups = []

    def propose(k):
        s = sample_bridge(mode, n_x, gen, n=k, d=pot.d, trunc=trunc)
        sups.append(s.sup)
        return s

    def log_tilt(s):
        return 2.0 * integral_u(pot, s.values)

    res = rejection_tilt(propose, log_tilt, 2.0 * pot.sup_u, n_target, gen,
                         batch=min(batch, max(n_target, 64)))
    values = np.concatenate([s.values[i] for s, i in res.draws])
    sup = np.concatenate([s.sup[i] for s, i in res.draws])
    proposal_sup = np.concatenate(sups)[: res.proposals]
    return GibbsSampleBatch(BridgeSample(values, sup, mode), res, pot, proposal_sup)


def ball_mass(pot=None, R=1.0, mode="standard", n=10_000, rng=None, d=None, n_x=128):
    """Monte Carlo mass of {||phi||_inf < R} and its complement under the tilted law."""
    if R <= 0:
        raise DomainError("ball_mass needs R > 0")
    batch = gibbs_sample(pot, mode, n, n_x, rng, d)
    inside = batch.samples.sup < R
    p = float(inside.mean())
    se = float(np.sqrt(p * (1 - p) / n))
    return {"inside": p, "inside_se": se, "outside": 1.0 - p, "outside_se": se,
            "n": n, "R": R, "mode": mode, "acceptance_rate": batch.acceptance_rate}


def _sup_norm_at(pot, u0, t, n, seed, purpose, dt, n_x, trunc, d):
    """Grid sup-norms of n independent solutions at time t."""
    a0 = initial_coefficients(u0, trunc, d)
    if pot.is_zero:
        coeffs = semigroup_coeffs(a0, t)[None] + sample_convolution(
            t, trunc, RngStream(seed, 0, purpose).generator(), d=d, n=n)
        stepper = Stepper(pot, t, trunc, n_x)
    else:
        stepper = Stepper(pot, dt, trunc, n_x)
        sim = BatchSimulator(stepper, np.repeat(a0[None], n, axis=0), generators(seed, range(n), purpose))
        for _ in range(n_steps_for(t, dt)):
            sim.advance()
        coeffs = sim.a
    return np.abs(stepper.field(coeffs)).max(axis=(1, 2))


def ergodic_check(pot=None, u0=None, t1=5.0, t2=10.0, n=2000, rng=0, dt=1e-2, n_x=64,
                  trunc=None, d=None, gibbs_mode="stationary"):
    """Two-sample KS comparisons of ||u(t, .)||_inf at t1, t2 and under the Gibbs law.

    Independent replica sets are used for t1 and t2.  Zero-drift runs are
    sampled exactly at the target time; drifted runs use exponential Euler.
    """
    if min(t1, t2) < 5:
        raise DomainError("ergodic_check needs t1, t2 >= 5")
    pot = Zero(d or 1) if pot is None else pot
    trunc = trunc or Truncation(min(n_x, DEFAULT_TRUNCATION.k_max))
    seed = _seed_of(rng)
    s1 = _sup_norm_at(pot, u0, t1, n, seed, "erg_t1", dt, n_x, trunc, pot.d)
    s2 = _sup_norm_at(pot, u0, t2, n, seed, "erg_t2", dt, n_x, trunc, pot.d)
    # the reference uses the same truncated base law as the simulation: grid
    # sup-norms are sensitive to the modes beyond k_max
    gibbs = gibbs_sample(pot, gibbs_mode, n, n_x, RngStream(seed, 0, "erg_gib").generator(), trunc=trunc)
    g = gibbs.samples.grid_sup
    ks12 = stats.ks_2samp(s1, s2)
    ks2g = stats.ks_2samp(s2, g)
    return {
        "t1": t1, "t2": t2, "n": n,
        "ks_t1_t2": float(ks12.statistic), "p_t1_t2": float(ks12.pvalue),
        "ks_t2_gibbs": float(ks2g.statistic), "p_t2_gibbs": float(ks2g.pvalue),
        "mean_sup_t1": float(s1.mean()), "mean_sup_t2": float(s2.mean()), "mean_sup_gibbs": float(g.mean()),
    }
