"""Scatterer shapes, the truncation circle and the problem description.

All shapes are immutable and centred at the origin unless a centre is
given.  Each exposes the same small interface used by the mesher and the
assembly code: ``classify``, ``inside_mask``, ``boundary_points``,
``project``, ``circumradius``, ``perimeter``, ``area`` and ``bbox``.
"""
import enum
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import ConfigError, DomainError

CLASSIFY_RTOL = 1e-12
PROJECT_MAXIT = 50


class PointClass(enum.Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"
    ON_BOUNDARY = "on_boundary"


def _check_positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ConfigError(f"{name} must be a positive finite number, got {value!r}")


def _check_point(p):
    p = np.asarray(p, dtype=float)
    if p.shape != (2,) or not np.all(np.isfinite(p)):
        raise DomainError(f"expected a finite 2D point, got {p!r}")
    return p


def _uniform_closed_curve(param_point, param_speed, m, t0=0.0, samples=20001):
    """``m`` arclength-uniform points on a smooth closed curve parametrised on [t0, t0+2pi)."""
    t = np.linspace(t0, t0 + 2 * np.pi, samples)
    speed = param_speed(t)
    # cumulative Simpson-free trapezoid is accurate to ~1e-9 at this resolution
    arc = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(t))])
    targets = np.arange(m) * arc[-1] / m
    return param_point(np.interp(targets, arc, t))


# ---------------------------------------------------------------------------
# smooth shapes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Circle:
    """Circle of ``radius`` about the origin; used for the truncation boundary."""

    radius: float
    kind = "circle"

    def __post_init__(self):
        _check_positive("radius", self.radius)

    @property
    def circumradius(self):
        return float(self.radius)

    @property
    def perimeter(self):
        return 2 * math.pi * self.radius

    @property
    def area(self):
        return math.pi * self.radius**2

    @property
    def corners(self):
        return np.zeros((0, 2))

    def bbox(self):
        r = self.radius
        return (-r, r, -r, r)

    def implicit(self, pts):
        pts = np.atleast_2d(pts)
        return (pts[:, 0] ** 2 + pts[:, 1] ** 2) / self.radius**2 - 1.0

    def inside_mask(self, pts):
        return self.implicit(pts) < 0

    def classify(self, p):
        p = _check_point(p)
        val = self.implicit(p)[0]
        if abs(val) <= CLASSIFY_RTOL:
            return PointClass.ON_BOUNDARY
        return PointClass.INSIDE if val < 0 else PointClass.OUTSIDE

    def boundary_points(self, m):
        if m < 3:
            raise DomainError(f"need at least 3 points on a circle, got {m}")
        theta = 2 * np.pi * np.arange(m) / m
        pts = self.radius * np.column_stack([np.cos(theta), np.sin(theta)])
        # exact values at quarter turns keep symmetric samples symmetric
        quarter = (4 * np.arange(m)) % m == 0
        idx = (4 * np.arange(m))[quarter] // m
        pts[quarter] = self.radius * np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], dtype=float)[idx]
        return pts

    def project(self, p):
        p = _check_point(p)
        r = math.hypot(p[0], p[1])
        if r == 0:
            raise DomainError("cannot project the centre onto a circle")
        return p * (self.radius / r)

    def project_many(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return pts * (self.radius / np.hypot(pts[:, 0], pts[:, 1]))[:, None]

    def on_curve_residual(self, pts):
        pts = np.atleast_2d(pts)
        return np.abs(np.hypot(pts[:, 0], pts[:, 1]) - self.radius)


@dataclass(frozen=True)
class Disk(Circle):
    """Disk of ``radius`` about the origin."""

    kind = "disk"


@dataclass(frozen=True)
class Ellipse:
    """Axis-aligned ellipse with the major axis along x."""

    semi_major: float
    semi_minor: float
    kind = "ellipse"

    def __post_init__(self):
        _check_positive("semi_major", self.semi_major)
        _check_positive("semi_minor", self.semi_minor)
        if self.semi_minor > self.semi_major:
            raise ConfigError("semi_minor must not exceed semi_major")

    @property
    def circumradius(self):
        return float(self.semi_major)

    @property
    def perimeter(self):
        from scipy.special import ellipe

        a, b = self.semi_major, self.semi_minor
        return 4 * a * ellipe(1 - (b / a) ** 2)

    @property
    def area(self):
        return math.pi * self.semi_major * self.semi_minor

    @property
    def corners(self):
        return np.zeros((0, 2))

    def bbox(self):
        return (-self.semi_major, self.semi_major, -self.semi_minor, self.semi_minor)

    def implicit(self, pts):
        pts = np.atleast_2d(pts)
        return (pts[:, 0] / self.semi_major) ** 2 + (pts[:, 1] / self.semi_minor) ** 2 - 1.0

    def inside_mask(self, pts):
        return self.implicit(pts) < 0

    def classify(self, p):
        p = _check_point(p)
        val = self.implicit(p)[0]
        if abs(val) <= CLASSIFY_RTOL:
            return PointClass.ON_BOUNDARY
        return PointClass.INSIDE if val < 0 else PointClass.OUTSIDE

    def _point(self, t):
        return np.column_stack([self.semi_major * np.cos(t), self.semi_minor * np.sin(t)])

    def _speed(self, t):
        return np.hypot(self.semi_major * np.sin(t), self.semi_minor * np.cos(t))

    def boundary_points(self, m):
        if m < 3:
            raise DomainError(f"need at least 3 points on an ellipse, got {m}")
        return _uniform_closed_curve(self._point, self._speed, m)

    def project(self, p):
        """Closest point on the ellipse by Newton's method in the parameter."""
        p = _check_point(p)
        a, b = self.semi_major, self.semi_minor
        px, py = p
        t = math.atan2(a * py, b * px)
        for _ in range(PROJECT_MAXIT):
            s, c = math.sin(t), math.cos(t)
            f = (b * b - a * a) * s * c + a * px * s - b * py * c
            df = (b * b - a * a) * (c * c - s * s) + a * px * c + b * py * s
            if df == 0:
                break
            dt = f / df
            t -= dt
            if abs(dt) < 1e-14:
                q = np.array([a * math.cos(t), b * math.sin(t)])
                return q
        raise DomainError(f"ellipse projection did not converge for point {p!r}")

    def project_many(self, pts):
        return np.array([self.project(p) for p in np.atleast_2d(pts)])

    def on_curve_residual(self, pts):
        return np.abs(self.implicit(pts))


# ---------------------------------------------------------------------------
# polygons
# ---------------------------------------------------------------------------

def _segment_distance(pts, a, b):
    ab = b - a
    t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
    foot = a + t[:, None] * ab
    return np.hypot(*(pts - foot).T), foot


class _Polygon:
    """Shared behaviour of the polygonal shapes; subclasses define ``corners``."""

    @property
    def _edges(self):
        c = self.corners
        return list(zip(c, np.roll(c, -1, axis=0)))

    @property
    def circumradius(self):
        return float(np.max(np.hypot(*self.corners.T)))

    @property
    def perimeter(self):
        return float(sum(np.hypot(*(b - a)) for a, b in self._edges))

    @property
    def area(self):
        x, y = self.corners.T
        return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def bbox(self):
        c = self.corners
        return (c[:, 0].min(), c[:, 0].max(), c[:, 1].min(), c[:, 1].max())

    def _scale(self):
        return self.circumradius

    def boundary_distance(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.min([_segment_distance(pts, a, b)[0] for a, b in self._edges], axis=0)

    def inside_mask(self, pts):
        """Crossing-number point-in-polygon test (boundary points may go either way)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        inside = np.zeros(len(pts), dtype=bool)
        for a, b in self._edges:
            straddles = (a[1] > y) != (b[1] > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xcross = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            inside ^= straddles & (x < xcross)
        return inside

    def classify(self, p):
        p = _check_point(p)
        if self.boundary_distance(p)[0] <= CLASSIFY_RTOL * self._scale():
            return PointClass.ON_BOUNDARY
        return PointClass.INSIDE if self.inside_mask(p)[0] else PointClass.OUTSIDE

    def boundary_points(self, m):
        """Corners plus interior side points, distributed proportionally to side length."""
        edges = self._edges
        nc = len(edges)
        if m < nc:
            raise DomainError(f"need at least {nc} points for this polygon, got {m}")
        lengths = np.array([np.hypot(*(b - a)) for a, b in edges])
        # largest-remainder apportionment of the m points to the sides
        quota = m * lengths / lengths.sum()
        per_side = np.floor(quota).astype(int)
        per_side = np.maximum(per_side, 1)
        while per_side.sum() < m:
            per_side[np.argmax(quota - per_side)] += 1
        while per_side.sum() > m:
            per_side[np.argmax(per_side - quota)] -= 1
        out = []
        for (a, b), cnt in zip(edges, per_side):
            s = np.arange(cnt) / cnt
            out.append(a + s[:, None] * (b - a))
        return np.vstack(out)

    def project(self, p):
        p = _check_point(p)
        best = None
        for a, b in self._edges:
            d, foot = _segment_distance(p[None, :], a, b)
            if best is None or d[0] < best[0]:
                best = (d[0], foot[0])
        return best[1]

    def project_many(self, pts):
        return np.array([self.project(p) for p in np.atleast_2d(pts)])

    def on_curve_residual(self, pts):
        return self.boundary_distance(pts)


@dataclass(frozen=True)
class Square(_Polygon):
    """Axis-aligned square of side ``side`` centred at ``center``."""

    side: float
    center: Tuple[float, float] = (0.0, 0.0)
    kind = "square"

    def __post_init__(self):
        _check_positive("side", self.side)

    @property
    def corners(self):
        h = self.side / 2
        cx, cy = self.center
        return np.array([[cx - h, cy - h], [cx + h, cy - h], [cx + h, cy + h], [cx - h, cy + h]])

    def classify(self, p):
        # exact coordinate comparisons
        p = _check_point(p)
        h = self.side / 2
        d = max(abs(p[0] - self.center[0]), abs(p[1] - self.center[1]))
        if abs(d - h) <= CLASSIFY_RTOL * self._scale():
            return PointClass.ON_BOUNDARY
        return PointClass.INSIDE if d < h else PointClass.OUTSIDE


@dataclass(frozen=True)
class LShape(_Polygon):
    """Square ``(-s/2, s/2)^2`` with the upper-right quadrant ``[0, s/2]^2`` removed."""

    outer_side: float
    kind = "lshape"

    def __post_init__(self):
        _check_positive("outer_side", self.outer_side)

    @property
    def corners(self):
        h = self.outer_side / 2
        return np.array([[-h, -h], [h, -h], [h, 0.0], [0.0, 0.0], [0.0, h], [-h, h]])

    def interior_point(self):
        h = self.outer_side / 2
        return np.array([-h / 2, -h / 2])


def interior_point(shape):
    """A point strictly inside ``shape``."""
    if hasattr(shape, "interior_point"):
        return shape.interior_point()
    if isinstance(shape, Square):
        return np.asarray(shape.center, dtype=float)
    return np.zeros(2)


# ---------------------------------------------------------------------------
# problem description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``(re_min, re_max) x (im_min, im_max)`` in the complex plane."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ConfigError(f"degenerate rectangle {self!r}")

    @property
    def center(self):
        return complex(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))

    @property
    def half_diagonal(self):
        return 0.5 * math.hypot(self.re_max - self.re_min, self.im_max - self.im_min)

    def contains(self, k, margin=0.0):
        return (self.re_min - margin < k.real < self.re_max + margin
                and self.im_min - margin < k.imag < self.im_max + margin)

    def split(self):
        c = self.center
        return [
            Rect(self.re_min, c.real, self.im_min, c.imag),
            Rect(c.real, self.re_max, self.im_min, c.imag),
            Rect(self.re_min, c.real, c.imag, self.im_max),
            Rect(c.real, self.re_max, c.imag, self.im_max),
        ]

    def inflate(self, fraction):
        dx = fraction * (self.re_max - self.re_min)
        dy = fraction * (self.im_max - self.im_min)
        return Rect(self.re_min - dx, self.re_max + dx, self.im_min - dy, self.im_max + dy)

    def as_tuple(self):
        return (self.re_min, self.re_max, self.im_min, self.im_max)


@dataclass(frozen=True)
class Problem:
    """Transmission resonance problem on the truncated domain ``|x| < R``.

    Attributes
    ----------
    shape : scatterer (Disk, Ellipse, Square or LShape)
    n_inside : refractive index inside the scatterer (``n = 1`` outside)
    R : truncation radius
    N : number of retained Fourier modes in the boundary operator
    search_region : rectangle of wavenumbers to search
    """

    shape: object
    n_inside: float
    R: float
    N: int = 20
    search_region: Rect = field(default_factory=lambda: Rect(0.0, 4.0, -4.0, 0.0))

    def __post_init__(self):
        _check_positive("n_inside", self.n_inside)
        if self.n_inside == 1:
            raise ConfigError("n_inside = 1 gives no scatterer")
        _check_positive("R", self.R)
        if not self.R > self.shape.circumradius:
            raise ConfigError(
                f"R = {self.R} must exceed the shape circumradius {self.shape.circumradius:.6g}")
        if int(self.N) != self.N or self.N < 0:
            raise ConfigError(f"N must be a nonnegative integer, got {self.N!r}")
        reg = self.search_region
        if reg.im_min < 0 < reg.im_max and reg.re_min < 0:
            raise ConfigError("search region touches the negative real axis")

    @property
    def truncation(self):
        return Circle(self.R)

    def with_(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)
