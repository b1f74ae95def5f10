"""Riesz capacity of bounded sets by discrete energy minimisation.

For beta > 0 the capacity is ``1 / min_mu sum_ij mu_i mu_j k_beta(|p_i - p_j|)``
over probability vectors on a point discretisation of the set.  The self
interaction of a point is replaced by ``k_beta(h / 2)`` with ``h`` the
covering radius, which over-estimates the energy, so the returned capacity
is biased low.  Negative orders follow the convention Cap = 1 for every
nonempty set.
"""
import logging
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from . import _kernels
from .errors import ConvergenceError, DomainError
from .targets import Ball, Box, PointCloud, Union

log = logging.getLogger(__name__)

MAX_ITER = 10_000
REL_GAP = 1e-6
# irrational lattice offset: makes every lattice point enter the ball at a distinct scale
_OFFSET = np.array([0.2360679775, 0.4142135624, 0.7320508076, 0.6457513111, 0.3166247904])


def kernel(r, beta):
    """k_beta(r): r^-beta for beta > 0, log_+(e / r) for beta = 0, 1 for beta < 0."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        if beta > 0:
            return np.where(r > 0, r ** (-beta), np.inf)
        if beta == 0:
            safe = np.where(r > 0, r, 1.0)
            return np.where(r > 0, np.maximum(np.log(np.e / safe), 0.0), np.inf)
    return np.ones_like(r)


@dataclass
class Discretization:
    points: np.ndarray
    covering_radius: float


@dataclass
class DiscreteMeasure:
    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if np.any(self.weights < 0) or not np.isclose(self.weights.sum(), 1.0, atol=1e-9):
            raise DomainError("weights must be a probability vector")


@dataclass
class CapacityEstimate:
    beta: float
    value: float
    energy: float
    m: int
    iterations: int = 0
    gap: float = 0.0
    covering_radius: float = 0.0
    measure: DiscreteMeasure = field(default=None, repr=False)

    def to_dict(self):
        return {
            "beta": self.beta,
            "value": self.value,
            "energy": self.energy,
            "m": self.m,
            "iterations": self.iterations,
            "gap": self.gap,
            "covering_radius": self.covering_radius,
        }


def _ball_points(ball, m):
    d = ball.dim
    offset = _OFFSET[:d] if d <= len(_OFFSET) else np.modf(np.sqrt(np.arange(2, d + 2)))[0]
    # enough lattice indices to contain the m nearest to the origin
    half = int(np.ceil((m * 2**d / _unit_ball_volume(d)) ** (1.0 / d) / 2)) + 2
    axis = np.arange(-half, half + 1)
    idx = np.array(list(product(axis, repeat=d)), dtype=float) + offset
    norms = np.linalg.norm(idx, axis=1)
    order = np.argsort(norms, kind="stable")[:m]
    spacing = ball.radius / norms[order[-1]]
    return np.array(ball.center) + spacing * idx[order]


def _unit_ball_volume(d):
    from math import gamma, pi

    return pi ** (d / 2) / gamma(d / 2 + 1)


def _box_points(box, m):
    lo, hi = box.bounding_box()
    sides = hi - lo
    live = sides > 0
    if not np.any(live) or m == 1:
        return ((lo + hi) / 2)[None, :]
    best = None
    # candidate spacings put an exact number of nodes on some axis
    for i in np.flatnonzero(live):
        for n in range(2, m + 1):
            spacing = sides[i] / (n - 1)
            counts = np.where(live, np.floor(sides / spacing + 1e-9).astype(int) + 1, 1)
            total = int(np.prod(counts))
            if total >= m:
                if best is None or total < best[0]:
                    best = (total, counts)
                break
    axes = [np.linspace(lo[i], hi[i], best[1][i]) if live[i] else lo[i:i + 1] for i in range(len(lo))]
    return np.array(list(product(*axes)))


def _probe_points(target, n=20_000):
    lo, hi = target.bounding_box()
    sampler = qmc.Halton(d=len(lo), scramble=False)
    probes = lo + (hi - lo) * sampler.random(n + 1)[1:]
    keep = target.contains(probes)
    return probes[keep]


def covering_radius(target, points):
    """Largest distance from a probe point of the target to the point set."""
    if isinstance(target, PointCloud):
        return 0.0
    probes = _probe_points(target)
    if len(probes) == 0:
        return 0.0
    dist, _ = cKDTree(points).query(probes)
    return float(dist.max())


def discretize_target(target, m):
    """Quasi-uniform point set of (about) m points covering the target."""
    if m < 1:
        raise DomainError("need m >= 1")
    if isinstance(target, PointCloud):
        points = target.points.copy()
    elif isinstance(target, Ball):
        points = np.array([target.center]) if target.radius == 0 else _ball_points(target, m)
    elif isinstance(target, Box):
        points = _box_points(target, m)
    elif isinstance(target, Union):
        vols = np.array([np.prod(np.maximum(np.subtract(*p.bounding_box()[::-1]), 1e-12)) for p in target.parts])
        shares = np.maximum(1, np.round(m * vols / vols.sum()).astype(int))
        points = np.vstack([discretize_target(p, int(s)).points for p, s in zip(target.parts, shares)])
    else:
        raise DomainError(f"cannot discretise {type(target).__name__}")
    return Discretization(points, covering_radius(target, points))


def min_energy(points, beta, cutoff, max_iter=MAX_ITER, rel_gap=REL_GAP, start="uniform"):
    """Minimise the discrete beta-energy over probability vectors.

    ``cutoff`` is the radius at which the self-interaction k_beta(cutoff) is
    evaluated.  Returns ``(energy, measure, info)``; ``info`` carries the
    final duality gap, iteration count and the energy history.
    """
    if beta < 0:
        raise DomainError("min_energy needs beta >= 0; negative orders have capacity 1 by convention")
    points = np.ascontiguousarray(points, dtype=float)
    if points.ndim != 2 or len(points) == 0:
        raise DomainError("need at least one point")
    diag = float(kernel(cutoff, beta))
    m = len(points)
    if m == 1 or not np.isfinite(diag):
        energy = diag if m == 1 else np.inf
        weights = np.zeros(m)
        weights[0] = 1.0
        if m > 1:
            weights[:] = 1.0 / m
        return energy, DiscreteMeasure(points, weights), {"gap": 0.0, "iterations": 0, "history": np.array([energy])}
    kmat = _kernels.riesz_matrix(points, float(beta), diag)
    if start == "uniform":
        w0 = np.full(m, 1.0 / m)
    else:
        w0 = np.zeros(m)
        w0[int(np.argmin(kmat.sum(axis=1)))] = 1.0
    # the start energy bounds the final one, so this tolerance makes the gap
    # small both relative to the energy and in absolute terms
    tol = rel_gap * min(1.0, 1.0 / float(w0 @ kmat @ w0))
    w, energy, gap, iters, history = _kernels.frank_wolfe(kmat, w0, int(max_iter), tol, 500)
    w = np.maximum(w, 0.0)
    w /= w.sum()
    energy = float(w @ kmat @ w)
    if gap > rel_gap * min(1.0, energy):
        raise ConvergenceError(
            f"Frank-Wolfe stopped after {iters} iterations with relative gap {gap / energy:.2e}", gap=gap
        )
    return energy, DiscreteMeasure(points, w), {"gap": float(gap), "iterations": int(iters), "history": history}


def cap(target, beta, m=2000, cutoff=None):
    """Riesz capacity estimate of ``target`` of order ``beta``."""
    disc = discretize_target(target, m)
    npts = len(disc.points)
    if beta < 0:
        return CapacityEstimate(beta, 1.0, 1.0, npts, covering_radius=disc.covering_radius)
    cutoff = disc.covering_radius / 2 if cutoff is None else cutoff
    energy, measure, info = min_energy(disc.points, beta, cutoff)
    value = 0.0 if not np.isfinite(energy) else 1.0 / energy
    return CapacityEstimate(
        beta, value, energy, npts, info["iterations"], info["gap"], disc.covering_radius, measure
    )
