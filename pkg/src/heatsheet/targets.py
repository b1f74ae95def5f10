"""Bounded target sets in R^d with membership and distance predicates."""
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


def _vec(values):
    return np.atleast_1d(np.asarray(values, dtype=float))


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float
    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in _vec(self.center)))
        if self.radius < 0:
            raise DomainError("ball radius must be nonnegative")

    @property
    def dim(self):
        return len(self.center)

    def bounding_box(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def distance(self, z):
        z = np.asarray(z, dtype=float)
        return np.maximum(np.linalg.norm(z - np.array(self.center), axis=-1) - self.radius, 0.0)

    def contains(self, z):
        return self.distance(z) <= 0.0

    def shrink(self, s):
        return Ball(self.center, self.radius * s)

    def scale(self, c):
        """Image under z -> c z."""
        return Ball(tuple(c * np.array(self.center)), self.radius * c)

    def to_dict(self):
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    kind = "box"

    def __post_init__(self):
        lo, hi = _vec(self.lo), _vec(self.hi)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise DomainError("box needs lo <= hi componentwise")
        object.__setattr__(self, "lo", tuple(lo.tolist()))
        object.__setattr__(self, "hi", tuple(hi.tolist()))

    @property
    def dim(self):
        return len(self.lo)

    def bounding_box(self):
        return np.array(self.lo), np.array(self.hi)

    def distance(self, z):
        z = np.asarray(z, dtype=float)
        lo, hi = self.bounding_box()
        gap = np.maximum(np.maximum(lo - z, z - hi), 0.0)
        return np.linalg.norm(gap, axis=-1)

    def contains(self, z):
        return self.distance(z) <= 0.0

    def shrink(self, s):
        lo, hi = self.bounding_box()
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        return Box(tuple(mid - s * half), tuple(mid + s * half))

    def scale(self, c):
        lo, hi = self.bounding_box()
        return Box(tuple(c * lo), tuple(c * hi))

    def to_dict(self):
        return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray = field(repr=False)
    tolerance: float = 0.0
    kind = "points"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise DomainError("point cloud needs at least one point")
        if self.tolerance < 0:
            raise DomainError("tolerance must be nonnegative")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self):
        return self.points.shape[1]

    def bounding_box(self):
        return self.points.min(axis=0) - self.tolerance, self.points.max(axis=0) + self.tolerance

    def distance(self, z):
        z = np.asarray(z, dtype=float)
        diff = z[..., None, :] - self.points
        return np.maximum(np.sqrt(np.min(np.sum(diff**2, axis=-1), axis=-1)) - self.tolerance, 0.0)

    def contains(self, z):
        return self.distance(z) <= 0.0

    def shrink(self, s):
        return self

    def scale(self, c):
        return PointCloud(c * self.points, c * self.tolerance)

    def to_dict(self):
        return {"kind": "points", "points": self.points.tolist(), "tolerance": self.tolerance}


@dataclass(frozen=True)
class Union:
    parts: tuple
    kind = "union"

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise DomainError("union of no sets is empty")
        if len({p.dim for p in parts}) != 1:
            raise DomainError("union members must share a dimension")
        object.__setattr__(self, "parts", parts)

    @property
    def dim(self):
        return self.parts[0].dim

    def bounding_box(self):
        boxes = [p.bounding_box() for p in self.parts]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def distance(self, z):
        return np.min([p.distance(z) for p in self.parts], axis=0)

    def contains(self, z):
        return self.distance(z) <= 0.0

    def shrink(self, s):
        return Union(tuple(p.shrink(s) for p in self.parts))

    def scale(self, c):
        return Union(tuple(p.scale(c) for p in self.parts))

    def to_dict(self):
        return {"kind": "union", "parts": [p.to_dict() for p in self.parts]}


def target_from_dict(spec):
    """Build a target from its JSON/YAML description."""
    kind = spec.get("kind")
    if kind == "ball":
        return Ball(tuple(_vec(spec["center"])), float(spec["radius"]))
    if kind == "box":
        return Box(tuple(_vec(spec["lo"])), tuple(_vec(spec["hi"])))
    if kind == "points":
        return PointCloud(np.asarray(spec["points"], dtype=float), float(spec.get("tolerance", 0.0)))
    if kind == "union":
        return Union(tuple(target_from_dict(p) for p in spec["parts"]))
    raise DomainError(f"unknown target kind {kind!r}")


def inside_box(target, m):
    """True when the target lies in [-m, m]^d."""
    lo, hi = target.bounding_box()
    return bool(np.all(lo >= -m) and np.all(hi <= m))
