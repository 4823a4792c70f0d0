"""Piecewise paths in the punctured plane.

A path is a list of segments, each parameterized over t in [0, 1] with an
analytic derivative.  Straight lines and circular arcs are enough for the
loops and radial marches used here.  ``plan_route`` builds a segment list
between two points that keeps a prescribed clearance from every puncture
by inserting circular detours.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ProximityError(RuntimeError):
    """A path passes too close to a singular point."""


@dataclass(frozen=True)
class Line:
    start: complex
    end: complex

    def point(self, t):
        return self.start + t * (self.end - self.start)

    def velocity(self, t):
        return (self.end - self.start) * np.ones_like(np.asarray(t, dtype=float))

    @property
    def length(self) -> float:
        return abs(self.end - self.start)

    def distance_to(self, w: complex) -> float:
        d = self.end - self.start
        if abs(d) == 0:
            return abs(self.start - w)
        t = np.clip(((w - self.start) / d).real, 0.0, 1.0)
        return abs(self.start + t * d - w)

    def reversed(self) -> "Line":
        return Line(self.end, self.start)


@dataclass(frozen=True)
class Arc:
    center: complex
    radius: float
    angle0: float
    angle1: float  # signed sweep: angle1 < angle0 traverses clockwise

    def point(self, t):
        ang = self.angle0 + t * (self.angle1 - self.angle0)
        return self.center + self.radius * np.exp(1j * ang)

    def velocity(self, t):
        ang = self.angle0 + t * (self.angle1 - self.angle0)
        return 1j * (self.angle1 - self.angle0) * self.radius * np.exp(1j * ang)

    @property
    def length(self) -> float:
        return abs(self.angle1 - self.angle0) * self.radius

    def distance_to(self, w: complex) -> float:
        if abs(w - self.center) < 1e-300:
            return self.radius
        ang = np.angle(w - self.center)
        lo, hi = sorted((self.angle0, self.angle1))
        # bring ang into [lo, lo + 2*pi)
        k = np.floor((ang - lo) / (2 * np.pi))
        ang = ang - 2 * np.pi * k
        if ang <= hi:
            return abs(abs(w - self.center) - self.radius)
        return min(abs(self.point(0.0) - w), abs(self.point(1.0) - w))

    def reversed(self) -> "Arc":
        return Arc(self.center, self.radius, self.angle1, self.angle0)


Segment = Line | Arc


def path_min_distance(path: list[Segment], w: complex) -> float:
    return min(seg.distance_to(w) for seg in path)


def reversed_path(path: list[Segment]) -> list[Segment]:
    return [seg.reversed() for seg in reversed(path)]


def circle(center: complex, radius: float, start_angle: float, ccw: bool = True) -> Arc:
    sweep = 2 * np.pi if ccw else -2 * np.pi
    return Arc(center, radius, start_angle, start_angle + sweep)


def plan_route(
    a: complex,
    b: complex,
    keepouts: list[tuple[complex, float]],
    depth: int = 0,
) -> list[Segment]:
    """Segments from a to b keeping distance r_k from each keepout center.

    Straight line if clear; otherwise detour around the most intruding
    keepout along its clearance circle, recursing on the two remaining
    pieces.
    """
    if depth > 8:
        raise ProximityError("route planning recursion limit; geometry too tight")
    seg = Line(a, b)
    worst, worst_pen = None, 0.0
    for center, r in keepouts:
        pen = r - seg.distance_to(center)
        if pen > 1e-12 and pen > worst_pen:
            worst, worst_pen = (center, r), pen
    if worst is None:
        return [seg]
    center, r = worst
    if abs(a - center) < r * (1 - 1e-9) or abs(b - center) < r * (1 - 1e-9):
        raise ProximityError("route endpoint inside a keepout disk")
    d = b - a
    # intersections of the line with the clearance circle
    t0 = ((center - a) / d).real
    foot = a + t0 * d
    h2 = r * r - abs(foot - center) ** 2
    half = np.sqrt(max(h2, 0.0)) / abs(d)
    t1, t2 = np.clip(t0 - half, 0.0, 1.0), np.clip(t0 + half, 0.0, 1.0)
    p1, p2 = a + t1 * d, a + t2 * d
    # project entry/exit onto the circle and connect by the shorter arc
    q1 = center + r * (p1 - center) / abs(p1 - center)
    q2 = center + r * (p2 - center) / abs(p2 - center)
    a1, a2 = np.angle(q1 - center), np.angle(q2 - center)
    sweep = np.angle(np.exp(1j * (a2 - a1)))
    route: list[Segment] = []
    route += plan_route(a, q1, [k for k in keepouts if k[0] != center], depth + 1)
    route.append(Arc(center, r, a1, a1 + sweep))
    route += plan_route(q2, b, [k for k in keepouts if k[0] != center], depth + 1)
    return route


def _segment_log_increment(seg: Segment, w: complex, pieces: int) -> complex:
    ts = np.linspace(0.0, 1.0, pieces + 1)
    pts = seg.point(ts) - w
    ratios = pts[1:] / pts[:-1]
    if np.any(np.abs(np.angle(ratios)) > 2.5):
        if pieces > 1 << 16:
            raise ProximityError("log increment cannot resolve the branch")
        return _segment_log_increment(seg, w, 4 * pieces)
    return complex(np.sum(np.log(ratios)))


def path_log_increment(path: list[Segment], w: complex, pieces: int = 64) -> complex:
    """Continuous increment of log(z - w) along the path.

    Each segment is subdivided finely enough that consecutive ratios stay
    well away from the principal branch cut, so summing principal logs of
    the ratios tracks the continuous branch exactly.
    """
    return sum((_segment_log_increment(seg, w, pieces) for seg in path), 0.0 + 0.0j)
