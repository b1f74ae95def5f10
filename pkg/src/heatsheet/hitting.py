"""Hitting experiments: hit detection, hitting probabilities and excursions.

The excursion engine alternates two phases per replica.  In SEEK the
replica waits for ``||u||_inf > K`` (the exit time T_k) and checks the target
over the window ``[S + w_lo, S + w_hi] x J`` measured from the last return
time S.  In RETURN it waits for ``||u||_inf <= N`` (the return time S_k).
Crossings are first grid times.  The engine only needs a process object
with ``state``, ``norm``, ``in_target`` and ``advance``; the SPDE batch and
a finite Markov chain both implement it.
"""
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import _kernels
from .capacity import cap
from .dynamics import (BatchSimulator, Stepper, convolution_variances, grid_nodes,
                       n_steps_for, NoiseBuffer, stationary_coefficients)
from .errors import ApproximationError, ConfigError, DomainError
from .potential import PotentialSpec, Zero, potential_from_dict
from .rng import generators
from .spectral import Truncation, semigroup_coeffs, sine_coefficients
from .targets import Ball, PointCloud, inside_box, target_from_dict

log = logging.getLogger(__name__)

SEEK, RETURN, DONE = 0, 1, 2
HIT, EXHAUSTED, CENSORED = "hit", "exhausted", "censored"
DIST_BINS = np.array([0.0, 1e-12, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, np.inf])


# ---------------------------------------------------------------------------
# configuration

@dataclass
class ExperimentConfig:
    d: int = 1
    potential: PotentialSpec = None
    u0: dict = None
    N: float = 1.0
    K: float = 1.05
    M: float = 1.0
    I: tuple = (1.0, 2.0)
    J: tuple = (0.2, 0.8)
    T: float = 2.0
    dt: float = 1e-3
    n_x: int = 64
    k_max: int = 64
    n_trials: int = 1000
    seed: int = 0
    eps: float = 0.0
    target: object = None
    window: tuple = (1.0, 2.0)
    max_excursions: int = 20
    batch: int = 1000

    def __post_init__(self):
        if self.potential is None:
            self.potential = Zero(self.d)
        if self.target is None:
            self.target = Ball((0.3,) * self.d, 0.05 * np.sqrt(self.d))
        self.I = tuple(float(v) for v in self.I)
        self.J = tuple(float(v) for v in self.J)
        self.window = tuple(float(v) for v in self.window)

    def validate(self):
        def bad(path, msg):
            raise ConfigError(f"experiment.{path}: {msg}")

        if self.d < 1:
            bad("d", "must be >= 1")
        if self.potential.d != self.d:
            bad("potential", f"dimension {self.potential.d} does not match d={self.d}")
        self.potential.certify()
        if not self.N > 0:
            bad("N", "must be positive")
        if not self.K > self.N + 2 * self.potential.grad_sup:
            bad("K", f"need K > N + 2 sup|grad U| = {self.N + 2 * self.potential.grad_sup:g}")
        if self.target.dim != self.d:
            bad("target", f"dimension {self.target.dim} does not match d={self.d}")
        if not inside_box(self.target, self.M):
            bad("target", f"must lie in [-M, M]^d with M={self.M}")
        if not 0 <= self.J[0] <= self.J[1] <= 1:
            bad("J", "need 0 <= J_lo <= J_hi <= 1")
        if not 0 <= self.I[0] <= self.I[1] <= self.T:
            bad("I", f"need 0 <= I_lo <= I_hi <= T={self.T}")
        if not 0 <= self.window[0] <= self.window[1]:
            bad("window", "need 0 <= lo <= hi")
        if not self.dt > 0:
            bad("dt", "must be positive")
        if not self.potential.is_zero and self.dt > 1e-2:
            bad("dt", "drifted runs need dt <= 1e-2")
        if self.n_x < 2 or self.k_max < 1:
            bad("n_x", "need n_x >= 2 and k_max >= 1")
        if self.n_trials < 1:
            bad("n_trials", "must be >= 1")
        if self.max_excursions < 1:
            bad("max_excursions", "must be >= 1")
        if self.batch < 1:
            bad("batch", "must be >= 1")
        for name in ("I", "window"):
            lo, hi = getattr(self, name)
            for v in (lo, hi):
                if np.isfinite(v) and abs(v / self.dt - round(v / self.dt)) > 1e-6:
                    bad(name, f"endpoint {v} is not a multiple of dt={self.dt}")
        return self

    @property
    def trunc(self):
        return Truncation(self.k_max)

    def to_dict(self):
        out = {k: v for k, v in asdict(self).items() if k not in ("potential", "target")}
        out["potential"] = self.potential.to_dict()
        out["target"] = self.target.to_dict()
        out["I"], out["J"], out["window"] = list(self.I), list(self.J), list(self.window)
        return out

    @classmethod
    def from_dict(cls, spec):
        spec = dict(spec)
        d = int(spec.get("d", 1))
        try:
            pot = potential_from_dict(spec.pop("potential", {"family": "zero"}), d)
        except (ConfigError, DomainError, KeyError, ValueError) as exc:
            raise ConfigError(f"experiment.potential: {exc}") from None
        target = spec.pop("target", None)
        if target is not None:
            try:
                target = target_from_dict(target)
            except (DomainError, KeyError, ValueError) as exc:
                raise ConfigError(f"experiment.target: {exc}") from None
        known = set(cls.__dataclass_fields__)
        unknown = set(spec) - known
        if unknown:
            raise ConfigError(f"experiment.{sorted(unknown)[0]}: unknown field")
        try:
            cfg = cls(potential=pot, target=target, **spec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"experiment: {exc}") from None
        return cfg.validate()


def initial_coefficients(spec, trunc, d, seed=0, replicas=(0,)):
    """Initial sine coefficients (R, d, K) from a u0 description.

    Kinds: ``zero``; ``sine`` (amplitude * sin(mode pi x), amplitude per
    component allowed); ``tent`` (height * (1 - |2x - 1|)); ``stationary``
    (a draw from the invariant law of the linear equation, per replica).
    """
    spec = {"kind": "zero"} if spec is None else spec
    kind = spec.get("kind", "zero")
    n = len(replicas)
    a = np.zeros((n, d, trunc.k_max))
    if kind == "zero":
        return a
    if kind == "sine":
        k = int(spec.get("mode", 1))
        if not 1 <= k <= trunc.k_max:
            raise ConfigError(f"u0.mode: must lie in 1..{trunc.k_max}")
        a[:, :, k - 1] = np.broadcast_to(np.asarray(spec.get("amplitude", 1.0), dtype=float), (d,)) / np.sqrt(2)
        return a
    if kind == "tent":
        h = float(spec.get("height", 1.0))
        c = sine_coefficients(lambda x: h * (1 - np.abs(2 * x - 1)), trunc.k_max)
        a[:] = c[0]
        return a
    if kind == "stationary":
        for i, g in enumerate(generators(seed, replicas, "init")):
            a[i] = stationary_coefficients(trunc.k_max, g, d, 1)[0]
        return a
    raise ConfigError(f"u0.kind: unknown initial condition {kind!r}")


# ---------------------------------------------------------------------------
# processes

class SpdeProcess:
    """A batch of SPDE replicas seen through the excursion-engine protocol."""

    def __init__(self, cfg, replicas, purpose="noise", start_time=0.0, target=None, J=None):
        self.cfg = cfg
        self.dt = cfg.dt
        trunc = cfg.trunc
        self.replicas = np.asarray(replicas)
        self.target = cfg.target if target is None else target
        J = cfg.J if J is None else J
        x = grid_nodes(cfg.n_x)
        self.jcols = np.flatnonzero((x >= J[0] - 1e-12) & (x <= J[1] + 1e-12))
        if len(self.jcols) == 0:
            raise DomainError(f"J={J} contains no grid node for n_x={cfg.n_x}")
        self.x = x
        a0 = initial_coefficients(cfg.u0, trunc, cfg.d, cfg.seed, self.replicas)
        self.start_step = 0
        if start_time > 0 and cfg.potential.is_zero:
            # driftless: exact jump to the start of the observation window
            self.start_step = int(round(start_time / self.dt))
            t0 = self.start_step * self.dt
            sd = np.sqrt(convolution_variances(t0, trunc.k_max))
            for i, g in enumerate(generators(cfg.seed, self.replicas, "jump")):
                a0[i] = semigroup_coeffs(a0[i], t0) + sd * g.standard_normal((cfg.d, trunc.k_max))
        stepper = Stepper(cfg.potential, self.dt, trunc, cfg.n_x)
        self.sim = BatchSimulator(stepper, a0, generators(cfg.seed, self.replicas, purpose))
        self.n = len(self.replicas)
        self._modulus = []

    def state(self, idx):
        return self.sim.field(idx)

    @staticmethod
    def norm(u):
        return np.abs(u).max(axis=(1, 2))

    def in_target(self, u):
        """(hit flags, min distance over J, first hitting x index or -1)."""
        vals = np.ascontiguousarray(np.moveaxis(u[:, :, self.jcols], 1, -1))  # (m, nJ, d)
        if isinstance(self.target, Ball):
            c = np.asarray(self.target.center, dtype=float)
            mind = _kernels.ball_distance(vals, c, float(self.target.radius))
        else:
            mind = self.target.distance(vals).min(axis=1)
        hit = mind <= 0.0
        first = np.full(len(mind), -1)
        if np.any(hit):
            dist = self.target.distance(vals[hit])
            first[hit] = self.jcols[np.argmax(dist <= 0.0, axis=1)]
        if len(self._modulus) < 200:
            self._modulus.append(float(np.median(np.abs(np.diff(u, axis=2)))))
        return hit, mind, first

    def advance(self, idx, u):
        self.sim.advance(idx, u)

    @property
    def grid_modulus(self):
        return float(np.median(self._modulus)) if self._modulus else float("nan")


class MarkovChainProcess:
    """Finite Markov chain with a norm per state, for exact checks of the engine."""

    def __init__(self, P, norms, target_states, start, seed=0, replicas=range(1), purpose="chain"):
        self.P = np.asarray(P, dtype=float)
        if not np.allclose(self.P.sum(axis=1), 1.0) or np.any(self.P < 0):
            raise DomainError("P must be a stochastic matrix")
        self.cum = np.cumsum(self.P, axis=1)
        self.norms = np.asarray(norms, dtype=float)
        self.target_states = np.asarray(sorted(target_states))
        self.replicas = np.asarray(list(replicas))
        self.n = len(self.replicas)
        self.s = np.full(self.n, int(start))
        self.dt = 1.0
        self.start_step = 0
        self.noise = NoiseBuffer(generators(seed, self.replicas, purpose), ())

    def state(self, idx):
        return self.s[idx]

    def norm(self, s):
        return self.norms[s]

    def in_target(self, s):
        hit = np.isin(s, self.target_states)
        return hit, np.where(hit, 0.0, 1.0), np.where(hit, 0, -1)

    def advance(self, idx, s):
        u = stats.norm.cdf(self.noise.draw(idx))
        nxt = (u[:, None] > self.cum[s]).sum(axis=1)
        self.s[idx] = np.minimum(nxt, len(self.norms) - 1)

    def exact_hit_probability(self, start, K):
        """P(reach a target state before a state with norm > K), from ``start``."""
        n = len(self.norms)
        exits = self.norms > K
        tgt = np.zeros(n, dtype=bool)
        tgt[self.target_states] = True
        free = ~(exits | tgt)
        A = np.eye(free.sum()) - self.P[np.ix_(free, free)]
        b = self.P[np.ix_(free, tgt)].sum(axis=1)
        h = np.zeros(n)
        h[tgt] = 1.0
        h[free] = np.linalg.solve(A, b)
        return float(h[start])


def toy_chain(seed=0, replicas=range(1)):
    """Three states with norms 0, 1.5, 3; run with N=1, K=2 and the middle state as target."""
    P = [[0.5, 0.3, 0.2],
         [0.3, 0.4, 0.3],
         [0.4, 0.3, 0.3]]
    return MarkovChainProcess(P, [0.0, 1.5, 3.0], [1], start=0, seed=seed, replicas=replicas)


# ---------------------------------------------------------------------------
# excursion engine

@dataclass
class ExcursionRecord:
    N: float
    K: float
    T: list = field(default_factory=list)  # exit times T_k
    S: list = field(default_factory=list)  # return times S_0, S_1, ...
    hits: list = field(default_factory=list)  # one flag per excursion whose window closed
    status: str = CENSORED
    first_hit_time: float = None
    first_hit_x: float = None
    min_distance: float = np.inf

    @property
    def excursions_used(self):
        return len(self.hits)

    @property
    def completed(self):
        return len(self.T)

    @property
    def hit(self):
        return self.status == HIT or any(self.hits)

    def interlaced(self):
        seq = []
        for k in range(len(self.S)):
            seq.append(self.S[k])
            if k < len(self.T):
                seq.append(self.T[k])
        return all(a <= b for a, b in zip(seq, seq[1:])) and len(self.T) in (len(self.S), len(self.S) - 1)

    def to_dict(self):
        return {"N": self.N, "K": self.K, "T": list(self.T), "S": list(self.S), "hits": [bool(h) for h in self.hits],
                "status": self.status, "first_hit_time": self.first_hit_time, "first_hit_x": self.first_hit_x,
                "excursions_used": self.excursions_used,
                "min_distance": None if not np.isfinite(self.min_distance) else float(self.min_distance)}


def run_excursions(proc, N, K, window=(1.0, 2.0), max_excursions=20, horizon=np.inf,
                   check_hits=True, stop_on_hit=True, x_nodes=None):
    """Drive every replica of ``proc`` through the SEEK/RETURN cycle.

    Stops a replica at its first hit (when ``stop_on_hit``), once
    ``max_excursions`` windows have closed, or at the horizon.
    """
    dt = proc.dt
    n = proc.n
    w_lo = int(round(window[0] / dt))
    w_hi = int(round(window[1] / dt)) if np.isfinite(window[1]) else np.iinfo(np.int64).max // 4
    h_step = int(round(horizon / dt)) if np.isfinite(horizon) else np.iinfo(np.int64).max // 4
    step = np.full(n, proc.start_step, dtype=np.int64)
    phase = np.full(n, RETURN)
    s_step = np.zeros(n, dtype=np.int64)
    win_open = np.zeros(n, dtype=bool)  # window of the current excursion not yet closed
    cur_hit = np.zeros(n, dtype=bool)
    recs = [ExcursionRecord(N, K) for _ in range(n)]
    active = np.arange(n)

    def close_window(r, hit):
        rec = recs[r]
        rec.hits.append(bool(hit))
        win_open[r] = False
        if len(rec.hits) >= max_excursions:
            rec.status = HIT if rec.hit else EXHAUSTED
            phase[r] = DONE

    while len(active):
        u = proc.state(active)
        norms = proc.norm(u)
        t_idx = step[active]

        # returns: RETURN -> SEEK
        ret = (phase[active] == RETURN) & (norms <= N)
        for i in np.flatnonzero(ret):
            r = active[i]
            recs[r].S.append(float(t_idx[i] * dt))
            phase[r], s_step[r], win_open[r], cur_hit[r] = SEEK, t_idx[i], check_hits, False

        # exits: SEEK -> RETURN (the exit time itself is outside the window)
        ex = (phase[active] == SEEK) & (norms > K)
        for i in np.flatnonzero(ex):
            r = active[i]
            recs[r].T.append(float(t_idx[i] * dt))
            if win_open[r]:
                close_window(r, cur_hit[r])
            if phase[r] != DONE:
                phase[r] = RETURN

        if check_hits:
            seeking = (phase[active] == SEEK) & win_open[active]
            rel = t_idx - s_step[active]
            inwin = seeking & (rel >= w_lo) & (rel <= w_hi)
            if np.any(inwin):
                sel = np.flatnonzero(inwin)
                hit, mind, first = proc.in_target(u[sel])
                for j, i in enumerate(sel):
                    r = active[i]
                    rec = recs[r]
                    rec.min_distance = min(rec.min_distance, float(mind[j]))
                    if hit[j] and not cur_hit[r]:
                        cur_hit[r] = True
                        if rec.first_hit_time is None:
                            rec.first_hit_time = float(t_idx[i] * dt)
                            rec.first_hit_x = None if x_nodes is None else float(x_nodes[first[j]])
                        if stop_on_hit:
                            rec.status = HIT
                            phase[r] = DONE
                        close_window(r, True)
            # windows that ran past their end without a hit
            late = seeking & (rel >= w_hi)
            for i in np.flatnonzero(late):
                r = active[i]
                if win_open[r]:
                    close_window(r, cur_hit[r])

        live = phase[active] != DONE
        at_horizon = live & (t_idx >= h_step)
        for i in np.flatnonzero(at_horizon):
            r = active[i]
            recs[r].status = HIT if recs[r].hit else CENSORED
            phase[r] = DONE
        keep = phase[active] != DONE
        if not np.any(keep):
            break
        nxt = active[keep]
        proc.advance(nxt, u[keep])
        step[nxt] += 1
        active = nxt
    return recs


def no_hit_curve(records, n_max):
    """Kaplan-Meier estimate of P(no hit in the first n windows), n = 0..n_max.

    A record is at risk for window k if it had no earlier hit and its k-th
    window closed.  Returns (q, se) arrays of length n_max + 1.
    """
    q = np.ones(n_max + 1)
    var_sum = np.zeros(n_max + 1)
    for k in range(1, n_max + 1):
        at_risk = sum(1 for r in records if len(r.hits) >= k and not any(r.hits[: k - 1]))
        events = sum(1 for r in records if len(r.hits) >= k and not any(r.hits[: k - 1]) and r.hits[k - 1])
        if at_risk == 0:
            q[k:] = q[k - 1]
            var_sum[k:] = var_sum[k - 1]
            break
        q[k] = q[k - 1] * (1 - events / at_risk)
        surv = at_risk - events
        var_sum[k] = var_sum[k - 1] + (events / (at_risk * surv) if surv > 0 else np.inf)
    with np.errstate(invalid="ignore"):
        se = np.where(q > 0, q * np.sqrt(var_sum), 0.0)  # Greenwood
    return q, se


def log_convexity_check(q, se, z=3.0):
    """Decreasing and log-convex up to z standard errors.

    Terms with q = 0 are dropped from the convexity test (log undefined).
    Returns (ok, details).
    """
    q, se = np.asarray(q, float), np.asarray(se, float)
    dec = bool(np.all(np.diff(q) <= z * np.sqrt(se[1:] ** 2 + se[:-1] ** 2) + 1e-15))
    pos = np.flatnonzero(q > 0)
    worst = 0.0
    for a, b, c in zip(pos, pos[1:], pos[2:]):
        if not (b == a + 1 and c == b + 1):
            continue
        lq = np.log(q[[a, b, c]])
        sl = se[[a, b, c]] / q[[a, b, c]]
        second = lq[2] - 2 * lq[1] + lq[0]
        tol = z * np.sqrt(sl[0] ** 2 + 4 * sl[1] ** 2 + sl[2] ** 2)
        worst = min(worst, second + tol)
    return dec and worst >= -1e-12, {"decreasing": dec, "worst_convexity_margin": worst}


def homogeneity_test(records, n_exc=5):
    """Chi-square test that per-excursion hit rates agree across k = 1..n_exc."""
    table = []
    for k in range(n_exc):
        flags = [r.hits[k] for r in records if len(r.hits) > k]
        h = int(sum(flags))
        table.append([h, len(flags) - h])
    table = np.array(table)
    if np.any(table.sum(axis=0) == 0):
        return {"table": table.tolist(), "statistic": 0.0, "pvalue": 1.0}
    res = stats.chi2_contingency(table)
    return {"table": table.tolist(), "statistic": float(res.statistic), "pvalue": float(res.pvalue)}


# ---------------------------------------------------------------------------
# experiments

def _batches(n, size):
    return [np.arange(s, min(n, s + size)) for s in range(0, n, size)]


def _map(fn, jobs, workers=1):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def wilson_interval(k, n, confidence=0.95):
    if n < 1:
        raise DomainError("need at least one trial")
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence, method="wilson")
    return float(max(0.0, ci.low)), float(min(1.0, ci.high))


@dataclass
class HitResult:
    hit: bool
    min_distance: float
    first_hit: tuple = None  # (t, x)


def detect_hit(path, target, window):
    """Grid hit detection on a recorded path over I x J."""
    (i_lo, i_hi), (j_lo, j_hi) = window
    t = path.times
    if i_lo < t[0] - 1e-12 or i_hi > t[-1] + 1e-12 or i_lo > i_hi:
        raise DomainError(f"window I=[{i_lo}, {i_hi}] outside the simulated span [{t[0]}, {t[-1]}]")
    if not 0 <= j_lo <= j_hi <= 1:
        raise DomainError("J must lie in [0, 1]")
    rows = np.flatnonzero((t >= i_lo - 1e-9) & (t <= i_hi + 1e-9))
    x = path.grid
    cols = np.flatnonzero((x >= j_lo - 1e-12) & (x <= j_hi + 1e-12))
    if len(rows) == 0 or len(cols) == 0:
        raise DomainError("window contains no grid point")
    dist = target.distance(path.values[np.ix_(rows, cols)])  # (nt, nx)
    inside = dist <= 0.0
    if not inside.any():
        return HitResult(False, float(dist.min()))
    r, c = np.argwhere(inside)[0]
    return HitResult(True, 0.0, (float(t[rows[r]]), float(x[cols[c]])))


@dataclass
class HittingEstimate:
    n_trials: int
    n_hits: int
    p_hat: float
    ci: tuple
    I: tuple
    J: tuple
    min_distance_hist: list
    capacity: dict
    grid_modulus: float
    target_scale: float
    trials: list = field(default_factory=list, repr=False)

    @property
    def modulus_ok(self):
        return bool(self.target_scale >= 2 * self.grid_modulus)

    def to_dict(self):
        return {"n_trials": self.n_trials, "n_hits": self.n_hits, "p_hat": self.p_hat, "ci": list(self.ci),
                "I": list(self.I), "J": list(self.J),
                "min_distance_hist": {"edges": [float(e) for e in DIST_BINS], "counts": self.min_distance_hist},
                "capacity": self.capacity, "grid_modulus": self.grid_modulus, "target_scale": self.target_scale,
                "modulus_ok": self.modulus_ok}


def target_scale(target):
    if isinstance(target, Ball):
        return target.radius
    if isinstance(target, PointCloud):
        return target.tolerance
    lo, hi = target.bounding_box()
    return float(np.min(hi - lo) / 2)


def _hit_batch(job):
    cfg, ids, I = job
    proc = SpdeProcess(cfg, ids, "noise", start_time=I[0])
    lo, hi = int(round(I[0] / cfg.dt)), int(round(I[1] / cfg.dt))
    n = len(ids)
    hit = np.zeros(n, dtype=bool)
    mind = np.full(n, np.inf)
    t_hit = np.full(n, np.nan)
    x_hit = np.full(n, np.nan)
    active = np.arange(n)
    step = proc.start_step
    while True:
        u = proc.state(active)
        if step >= lo:
            h, m, first = proc.in_target(u)
            mind[active] = np.minimum(mind[active], m)
            new = active[h]
            hit[new] = True
            t_hit[new] = step * cfg.dt
            x_hit[new] = proc.x[first[h]]
            keep = ~h
            active, u = active[keep], u[keep]
        if step >= hi or len(active) == 0:
            break
        proc.advance(active, u)
        step += 1
    return hit, mind, t_hit, x_hit, proc.grid_modulus


def hitting_probability(cfg, target=None, I=None, J=None, workers=1, capacity_m=500):
    """Monte Carlo P{u(I x J) meets A} with a Wilson interval."""
    if target is not None or J is not None or I is not None:
        cfg = _replace(cfg, target=target or cfg.target, J=J or cfg.J, I=I or cfg.I,
                       T=max(cfg.T, (I or cfg.I)[1]))
    cfg.validate()
    jobs = [(cfg, ids, cfg.I) for ids in _batches(cfg.n_trials, cfg.batch)]
    parts = _map(_hit_batch, jobs, workers)
    hit = np.concatenate([p[0] for p in parts])
    mind = np.concatenate([p[1] for p in parts])
    t_hit = np.concatenate([p[2] for p in parts])
    x_hit = np.concatenate([p[3] for p in parts])
    modulus = float(np.median([p[4] for p in parts]))
    k = int(hit.sum())
    counts, _ = np.histogram(mind, DIST_BINS)
    capest = cap(cfg.target, cfg.d - 6, m=capacity_m)
    scale = target_scale(cfg.target)
    if scale < 2 * modulus:
        log.warning("target scale %.3g is below twice the grid modulus %.3g; grid detection is biased low",
                    scale, modulus)
    trials = [{"trial": i, "hit": bool(hit[i]), "first_hit_time": _num(t_hit[i]), "excursions_used": None,
               "min_distance": _num(mind[i])} for i in range(cfg.n_trials)]
    return HittingEstimate(cfg.n_trials, k, k / cfg.n_trials, wilson_interval(k, cfg.n_trials), cfg.I, cfg.J,
                           counts.tolist(), capest.to_dict(), modulus, scale, trials)


def _num(v):
    return None if not np.isfinite(v) else float(v)


def _replace(cfg, **kw):
    from dataclasses import replace

    return replace(cfg, **kw)


def _excursion_batch(job):
    cfg, ids, check, stop, purpose = job
    proc = SpdeProcess(cfg, ids, purpose)
    recs = run_excursions(proc, cfg.N, cfg.K, cfg.window, cfg.max_excursions, cfg.T,
                          check_hits=check, stop_on_hit=stop, x_nodes=proc.x)
    return recs, proc.grid_modulus


def excursions(cfg, n=None, workers=1, check_hits=False):
    """Crossing-time records of n independent paths over [0, cfg.T]."""
    cfg.validate()
    n = cfg.n_trials if n is None else n
    jobs = [(cfg, ids, check_hits, False, "noise") for ids in _batches(n, cfg.batch)]
    return [r for recs, _ in _map(_excursion_batch, jobs, workers) for r in recs]


@dataclass
class SuccessSummary:
    records: list
    hit_fraction: float
    ci: tuple
    no_hit: list
    no_hit_se: list
    log_convex: bool
    convexity: dict
    grid_modulus: float

    def to_dict(self):
        status = [r.status for r in self.records]
        return {"n_trials": len(self.records), "hit_fraction": self.hit_fraction, "ci": list(self.ci),
                "status_counts": {s: status.count(s) for s in (HIT, EXHAUSTED, CENSORED)},
                "mean_excursions_used": float(np.mean([r.excursions_used for r in self.records])),
                "no_hit_curve": self.no_hit, "no_hit_se": self.no_hit_se,
                "log_convex_decreasing": self.log_convex, "convexity": self.convexity,
                "grid_modulus": self.grid_modulus}

    def trial_rows(self):
        return [{"trial": i, "hit": bool(r.hit), "first_hit_time": r.first_hit_time,
                 "excursions_used": r.excursions_used,
                 "min_distance": None if not np.isfinite(r.min_distance) else float(r.min_distance)}
                for i, r in enumerate(self.records)]


def summarize(records, max_excursions, grid_modulus=float("nan")):
    k = sum(r.hit for r in records)
    q, se = no_hit_curve(records, max_excursions)
    ok, info = log_convexity_check(q, se)
    return SuccessSummary(records, k / len(records), wilson_interval(k, len(records)),
                          q.tolist(), se.tolist(), ok, info, grid_modulus)


def hit_until_success(cfg, workers=1, stop_on_hit=True):
    """Restart structure of the recurrence argument: look for A once per excursion."""
    cfg.validate()
    jobs = [(cfg, ids, True, stop_on_hit, "noise") for ids in _batches(cfg.n_trials, cfg.batch)]
    parts = _map(_excursion_batch, jobs, workers)
    records = [r for recs, _ in parts for r in recs]
    return summarize(records, cfg.max_excursions, float(np.median([m for _, m in parts])))


def toy_chain_experiment(n=10_000, seed=0, n_max=5, batch=10_000):
    """Run the engine on the 3-state chain; compare with (1 - c)^n."""
    records = []
    for ids in _batches(n, batch):
        proc = toy_chain(seed, ids)
        records += run_excursions(proc, 1.0, 2.0, window=(0.0, np.inf), max_excursions=n_max)
    c = toy_chain().exact_hit_probability(0, 2.0)
    q, se = no_hit_curve(records, n_max)
    exact = (1 - c) ** np.arange(n_max + 1)
    # binomial SE under the exact law for each n (q_n is a plain fraction here: no censoring)
    se_exact = np.sqrt(exact * (1 - exact) / n)
    z = np.divide(np.abs(q - exact), se_exact, out=np.zeros_like(q), where=se_exact > 0)
    return {"c": c, "n": n, "no_hit": q.tolist(), "exact": exact.tolist(), "se": se_exact.tolist(),
            "z": z.tolist(), "max_z": float(z.max())}


def sup_tail(cfg, K_values, horizon=2.0, n=None, workers=1):
    """Empirical P{sup_{t <= horizon} ||u(t)||_inf >= K} for each K."""
    n = cfg.n_trials if n is None else n
    cfg = _replace(cfg, T=max(cfg.T, horizon))
    steps = n_steps_for(horizon, cfg.dt)

    def one(ids):
        proc = SpdeProcess(cfg, ids, "tail")
        run = np.zeros(len(ids))
        idx = np.arange(len(ids))
        for _ in range(steps):
            u = proc.state(idx)
            run = np.maximum(run, proc.norm(u))
            proc.advance(idx, u)
        return np.maximum(run, proc.norm(proc.state(idx)))

    sups = np.concatenate([one(ids) for ids in _batches(n, cfg.batch)])
    K_values = np.asarray(K_values, dtype=float)
    p = (sups[:, None] >= K_values).mean(axis=0)
    return {"K": K_values.tolist(), "p": p.tolist(), "se": np.sqrt(p * (1 - p) / n).tolist()}


def compact_core(target, fraction, beta=None, m=400, steps=20):
    """Proper shrink A' of A with estimated Cap_beta(A') >= fraction * Cap_beta(A)."""
    if not 0 < fraction < 1:
        raise DomainError("fraction must lie in (0, 1)")
    beta = target.dim - 6 if beta is None else beta
    if isinstance(target, PointCloud) or beta < 0:
        return target
    full = cap(target, beta, m).value
    goal = fraction * full
    # the scaling law gives the answer for sets that scale exactly
    guess = fraction ** (1.0 / beta) if beta > 0 else None
    if guess is not None and guess < 1:
        cand = target.shrink(guess)
        if cap(cand, beta, m).value >= goal * (1 - 1e-12):
            return cand
    lo, hi = 0.0, 1.0
    for _ in range(steps):
        mid = (lo + hi) / 2
        if cap(target.shrink(mid), beta, m).value >= goal:
            hi = mid
        else:
            lo = mid
    if hi >= 1.0:
        raise ApproximationError(f"no proper shrink reaches {fraction} of the capacity in {steps} steps", gap=None)
    return target.shrink(hi)


def _weighted_batch(job):
    cfg, ids = job
    lo, hi = int(round(cfg.I[0] / cfg.dt)), int(round(cfg.I[1] / cfg.dt))
    base = _replace(cfg, potential=Zero(cfg.d))
    proc = SpdeProcess(base, ids, "noise")
    proc.sim = BatchSimulator(proc.sim.stepper, proc.sim.a, generators(cfg.seed, proc.replicas, "noise"),
                              weight_pot=cfg.potential)
    direct = SpdeProcess(cfg, ids, "direct")
    out = []
    for p in (proc, direct):
        idx = np.arange(len(ids))
        hit = np.zeros(len(ids), dtype=bool)
        for step in range(hi + 1):
            u = p.state(idx)
            if step >= lo:
                hit |= p.in_target(u)[0]
            if step < hi:
                p.advance(idx, u)
        out.append(hit)
    return out[0], proc.sim.log_weight.copy(), out[1]


def importance_check(cfg, workers=1):
    """Driftless paths reweighted by the likelihood ratio vs directly drifted paths.

    Reports the mean weight (should be 1) and the hitting probability of
    cfg.target over I x J both ways.  The weight is the exact ratio of the
    two discrete chains over [0, I_hi], so both estimators target the same
    number.
    """
    cfg.validate()
    parts = _map(_weighted_batch, [(cfg, ids) for ids in _batches(cfg.n_trials, cfg.batch)], workers)
    hit_is = np.concatenate([p[0] for p in parts])
    w = np.exp(np.concatenate([p[1] for p in parts]))
    hit_direct = np.concatenate([p[2] for p in parts])
    n = cfg.n_trials
    est = w * hit_is
    p_is, se_is = float(est.mean()), float(est.std(ddof=1) / np.sqrt(n))
    p_dir = float(hit_direct.mean())
    se_dir = float(np.sqrt(max(p_dir * (1 - p_dir), 1e-300) / n))
    mw, se_w = float(w.mean()), float(w.std(ddof=1) / np.sqrt(n))
    return {"n": n, "mean_weight": mw, "mean_weight_se": se_w, "weight_z": (mw - 1) / se_w,
            "p_importance": p_is, "p_importance_se": se_is, "p_direct": p_dir, "p_direct_se": se_dir,
            "difference_z": (p_is - p_dir) / np.hypot(se_is, se_dir),
            "trials": [{"trial": i, "hit": bool(hit_direct[i]), "weight": float(w[i]),
                        "weighted_hit": bool(hit_is[i])} for i in range(n)]}
