"""Drift potentials U: R^d -> R with certified bounds.

The equation is driven by grad U, so U must be bounded above with a bounded,
Lipschitz gradient.  Each potential carries ``sup_u`` (upper bound of U),
``grad_sup`` (sup-norm bound of grad U) and ``grad_lip`` (Lipschitz
constant of grad U).
"""
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    family: str
    d: int
    sup_u: float
    grad_sup: float
    grad_lip: float

    @property
    def is_zero(self):
        return self.family == "zero"

    def value(self, z):
        raise NotImplementedError

    def grad(self, z):
        raise NotImplementedError

    def certify(self):
        for name in ("sup_u", "grad_sup", "grad_lip"):
            val = getattr(self, name)
            if val is None or not np.isfinite(val):
                raise ConfigError(f"potential {self.family!r} lacks a certified {name}")

    def to_dict(self):
        return {"family": self.family, "d": self.d}


class Zero(PotentialSpec):
    def __init__(self, d=1):
        super().__init__("zero", d, 0.0, 0.0, 0.0)

    def value(self, z):
        return np.zeros(np.shape(z)[:-1])

    def grad(self, z):
        return np.zeros(np.shape(z))


class Cosine(PotentialSpec):
    """U(z) = sum_i a_i cos(z_i)."""

    def __init__(self, amplitude):
        a = np.atleast_1d(np.asarray(amplitude, dtype=float))
        object.__setattr__(self, "amplitude", a)
        bound = float(np.max(np.abs(a)))
        super().__init__("cosine", len(a), float(np.sum(np.abs(a))), bound, bound)

    def value(self, z):
        return np.sum(self.amplitude * np.cos(z), axis=-1)

    def grad(self, z):
        return -self.amplitude * np.sin(z)

    def to_dict(self):
        return {"family": "cosine", "d": self.d, "amplitude": self.amplitude.tolist()}


class TabulatedSmooth(PotentialSpec):
    """U(z) = sum_i g(z_i) with g a clamped cubic spline through tabulated values.

    Outside the knot range g is constant, so the gradient vanishes there.
    Bounds are exact: extrema of a cubic spline and of its derivative are
    located through the roots of the next derivative.
    """

    def __init__(self, knots, values, d=1):
        knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        if knots.ndim != 1 or len(knots) < 2 or np.any(np.diff(knots) <= 0):
            raise ConfigError("knots must be strictly increasing")
        spline = CubicSpline(knots, values, bc_type="clamped")
        object.__setattr__(self, "spline", spline)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        d1, d2 = spline.derivative(1), spline.derivative(2)
        crit = np.concatenate([knots, _roots(d1, knots)])
        g_max = float(np.max(spline(crit)))
        crit1 = np.concatenate([knots, _roots(d2, knots)])
        slope = float(np.max(np.abs(d1(crit1))))
        # g'' is piecewise linear, so its extremes sit on knots
        curv = float(np.max(np.abs(d2(knots))))
        super().__init__("tabulated", int(d), d * g_max, slope, curv)

    def _clip(self, z):
        return np.clip(z, self.knots[0], self.knots[-1])

    def value(self, z):
        return np.sum(self.spline(self._clip(z)), axis=-1)

    def grad(self, z):
        z = np.asarray(z, dtype=float)
        inside = (z >= self.knots[0]) & (z <= self.knots[-1])
        return np.where(inside, self.spline(self._clip(z), 1), 0.0)

    def to_dict(self):
        return {"family": "tabulated", "d": self.d, "knots": self.knots.tolist(),
                "values": self.values.tolist()}


def _roots(poly, knots):
    r = poly.roots(extrapolate=False)
    r = r[np.isfinite(r)]
    return r[(r >= knots[0]) & (r <= knots[-1])]


def potential_from_dict(spec, d):
    family = spec.get("family", "zero")
    if family == "zero":
        return Zero(d)
    if family == "cosine":
        amp = np.broadcast_to(np.asarray(spec.get("amplitude", 1.0), dtype=float), (d,))
        return Cosine(amp)
    if family == "tabulated":
        return TabulatedSmooth(spec["knots"], spec["values"], d)
    raise ConfigError(f"unknown potential family {family!r}")
