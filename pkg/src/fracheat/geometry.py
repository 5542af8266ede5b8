"""Domains: membership, distance to the boundary, measures, and sampling.

All point arguments are arrays of shape ``(d,)`` or ``(n, d)``; vectorised
queries return arrays of shape ``(n,)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import shapely
from shapely.geometry import Polygon as _ShapelyPolygon

from .errors import InvalidParameterError, UnsupportedOperationError

__all__ = [
    "Domain",
    "HalfSpace",
    "Ball",
    "Box",
    "Polygon2D",
    "DisjointUnion",
    "ShellProfile",
    "dist_to_boundary",
    "sample_uniform",
    "shell_volume",
    "minkowski_ratio_curve",
    "unit_square",
    "l_shape",
    "unit_disk",
    "load_polygon",
    "domain_from_spec",
]

# shapely arc resolution for eroded polygons (segments per quarter circle)
_QUAD_SEGS = 256
_BATCH = 1 << 16


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != d:
        raise InvalidParameterError(f"expected points of dimension {d}, got shape {x.shape}")
    return x, single


def _unwrap(values, single):
    return values[0] if single else values


class Domain:
    """Base class; subclasses implement the vectorised ``_contains``/``_dist``."""

    d: int
    bounded = True

    def contains(self, x):
        pts, single = _as_points(x, self.d)
        return _unwrap(self._contains(pts), single)

    def dist_to_boundary(self, x):
        pts, single = _as_points(x, self.d)
        return _unwrap(self._dist(pts), single)

    def signed_distance(self, x):
        """Distance to the boundary, negative outside the domain."""
        pts, single = _as_points(x, self.d)
        dist = self._dist(pts)
        return _unwrap(np.where(self._contains(pts), dist, -dist), single)

    # geometric summaries -------------------------------------------------
    @property
    def volume(self) -> float:
        raise NotImplementedError

    @property
    def boundary_measure(self) -> float:
        raise NotImplementedError

    @property
    def bounding_box(self):
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        lo, hi = self.bounding_box
        return float(np.linalg.norm(hi - lo))

    @property
    def inner_radius(self) -> float:
        raise NotImplementedError

    def shell_volume(self, s: float) -> float:
        raise NotImplementedError

    def scaled(self, factor: float) -> "Domain":
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    # sampling -------------------------------------------------------------
    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if not self.bounded:
            raise UnsupportedOperationError("cannot sample uniformly from an unbounded domain")
        lo, hi = self.bounding_box
        out = np.empty((0, self.d))
        while len(out) < n:
            m = max(_BATCH, 2 * (n - len(out)))
            cand = lo + (hi - lo) * rng.random((m, self.d))
            out = np.concatenate([out, cand[self._contains(cand)]])
        return out[:n]

    def sample_shell(self, s_lo: float, s_hi: float, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform points of ``{x in D: s_lo <= delta_D(x) < s_hi}``.

        The generic version filters uniform draws; subclasses override it
        when the shell can be proposed directly.
        """
        out = np.empty((0, self.d))
        tries = 0
        while len(out) < n:
            cand = self.sample_uniform(_BATCH, rng)
            dist = self._dist(cand)
            out = np.concatenate([out, cand[(dist >= s_lo) & (dist < s_hi)]])
            tries += 1
            if tries > 100000:
                raise RuntimeError("shell sampling made no progress; the shell is too thin")
        return out[:n]


# ---------------------------------------------------------------------------


class HalfSpace(Domain):
    """``{x : x . normal > offset}``; the default is ``{x_1 > 0}``."""

    bounded = False

    def __init__(self, d: int, normal=None, offset: float = 0.0):
        self.d = int(d)
        if normal is None:
            normal = np.eye(self.d)[0]
        n = np.asarray(normal, dtype=float)
        norm = np.linalg.norm(n)
        if n.shape != (self.d,) or norm == 0:
            raise InvalidParameterError("normal must be a nonzero vector of length d")
        self.normal = n / norm
        self.offset = float(offset)

    def _height(self, x):
        return x @ self.normal - self.offset

    def _contains(self, x):
        return self._height(x) > 0

    def _dist(self, x):
        return np.abs(self._height(x))

    @property
    def volume(self):
        return math.inf

    @property
    def boundary_measure(self):
        return math.inf

    @property
    def bounding_box(self):
        raise UnsupportedOperationError("half-space is unbounded")

    @property
    def diameter(self):
        return math.inf

    @property
    def inner_radius(self):
        return math.inf

    def shell_volume(self, s):
        raise UnsupportedOperationError("half-space has infinite shell volume")

    def sample_uniform(self, n, rng):
        raise UnsupportedOperationError("cannot sample uniformly from an unbounded domain")

    def sample_shell(self, s_lo, s_hi, n, rng):
        raise UnsupportedOperationError("cannot sample uniformly from an unbounded domain")

    def scaled(self, factor):
        return HalfSpace(self.d, self.normal, self.offset * factor)

    def to_dict(self):
        return {"type": "halfspace", "d": self.d, "normal": self.normal.tolist(), "offset": self.offset}


class Ball(Domain):
    def __init__(self, center, radius: float):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.d = self.center.shape[0]
        if self.d not in (1, 2, 3):
            raise InvalidParameterError("balls are supported in dimensions 1, 2, 3")
        if not radius > 0:
            raise InvalidParameterError("radius must be positive")
        self.radius = float(radius)

    def _contains(self, x):
        return np.linalg.norm(x - self.center, axis=-1) < self.radius

    def _dist(self, x):
        return np.abs(self.radius - np.linalg.norm(x - self.center, axis=-1))

    @property
    def volume(self):
        d = self.d
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * self.radius**d

    @property
    def boundary_measure(self):
        d = self.d
        return 2 * math.pi ** (d / 2) / math.gamma(d / 2) * self.radius ** (d - 1)

    @property
    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    @property
    def diameter(self):
        return 2 * self.radius

    @property
    def inner_radius(self):
        return self.radius

    def shell_volume(self, s):
        s = min(float(s), self.radius)
        return self.volume * (1.0 - (1.0 - s / self.radius) ** self.d)

    def sample_uniform(self, n, rng):
        return self.sample_shell(0.0, self.radius, n, rng)

    def sample_shell(self, s_lo, s_hi, n, rng):
        # |x - c| uniform in r^d over (R - s_hi, R - s_lo]
        R, d = self.radius, self.d
        r_lo = max(R - s_hi, 0.0)
        r_hi = max(R - s_lo, 0.0)
        u = rng.random(n)
        r = (r_lo**d + u * (r_hi**d - r_lo**d)) ** (1.0 / d)
        z = rng.standard_normal((n, d))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        return self.center + r[:, None] * z

    def scaled(self, factor):
        return Ball(self.center * factor, self.radius * factor)

    def to_dict(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


class Box(Domain):
    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise InvalidParameterError("box corners must satisfy lo < hi componentwise")
        self.d = self.lo.shape[0]
        if self.d not in (1, 2, 3):
            raise InvalidParameterError("boxes are supported in dimensions 1, 2, 3")

    @property
    def sides(self):
        return self.hi - self.lo

    def _contains(self, x):
        return np.all((x > self.lo) & (x < self.hi), axis=-1)

    def _dist(self, x):
        inside = self._contains(x)
        face = np.minimum(x - self.lo, self.hi - x).min(axis=-1)
        outside = np.linalg.norm(np.maximum(np.maximum(self.lo - x, x - self.hi), 0.0), axis=-1)
        return np.where(inside, face, np.where(outside > 0, outside, np.abs(face)))

    @property
    def volume(self):
        return float(np.prod(self.sides))

    @property
    def boundary_measure(self):
        if self.d == 1:
            return 2.0
        sides = self.sides
        return float(2 * sum(np.prod(np.delete(sides, i)) for i in range(self.d)))

    @property
    def bounding_box(self):
        return self.lo.copy(), self.hi.copy()

    @property
    def inner_radius(self):
        return float(self.sides.min() / 2)

    def shell_volume(self, s):
        inner = np.clip(self.sides - 2 * float(s), 0.0, None)
        return self.volume - float(np.prod(inner))

    def sample_shell(self, s_lo, s_hi, n, rng):
        # propose from the 2d face slabs of thickness s_hi, thin overlaps by 1/multiplicity
        d = self.d
        s_hi = min(s_hi, self.inner_radius)
        sides = self.sides
        slab_vol = np.array([self.volume / sides[i] * s_hi for i in range(d) for _ in range(2)])
        prob = slab_vol / slab_vol.sum()
        out = []
        have = 0
        while have < n:
            m = max(4096, 2 * (n - have))
            which = rng.choice(2 * d, size=m, p=prob)
            x = self.lo + sides * rng.random((m, d))
            axis = which // 2
            upper = (which % 2) == 1
            depth = s_hi * rng.random(m)
            rows = np.arange(m)
            x[rows, axis] = np.where(upper, self.hi[axis] - depth, self.lo[axis] + depth)
            mult = ((x - self.lo) < s_hi).sum(axis=1) + ((self.hi - x) < s_hi).sum(axis=1)
            keep = rng.random(m) * mult < 1.0
            dist = self._dist(x)
            keep &= (dist >= s_lo) & (dist < s_hi)
            out.append(x[keep])
            have += int(keep.sum())
        return np.concatenate(out)[:n]

    def scaled(self, factor):
        return Box(self.lo * factor, self.hi * factor)

    def to_dict(self):
        return {"type": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


def _polygon_signed_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_intersect(p1, p2, q1, q2):
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    return o1 * o2 < 0 and o3 * o4 < 0


class Polygon2D(Domain):
    """Simple, counter-clockwise polygon in the plane."""

    d = 2

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise InvalidParameterError("polygon needs at least three [x, y] vertices")
        if np.allclose(v[0], v[-1]):
            v = v[:-1]
        self.vertices = v
        area = _polygon_signed_area(v)
        if area <= 0:
            raise InvalidParameterError("polygon vertices must be counter-clockwise")
        self._area = area
        n = len(v)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise InvalidParameterError("polygon is not simple")
        self._a = v
        self._b = np.roll(v, -1, axis=0)
        edge = self._b - self._a
        self._len = np.linalg.norm(edge, axis=1)
        if np.any(self._len == 0):
            raise InvalidParameterError("polygon has repeated vertices")
        self._tangent = edge / self._len[:, None]
        self._inward = np.stack([-self._tangent[:, 1], self._tangent[:, 0]], axis=1)
        self._shape = _ShapelyPolygon(v)
        shapely.prepare(self._shape)
        # reflex vertices: clockwise turn between incoming and outgoing edge
        prev_t = np.roll(self._tangent, 1, axis=0)
        cross = prev_t[:, 0] * self._tangent[:, 1] - prev_t[:, 1] * self._tangent[:, 0]
        self._reflex = np.nonzero(cross < 0)[0]

    def _contains(self, x):
        # open polygon: points on an edge are outside, so contains <=> delta > 0
        return shapely.contains_xy(self._shape, x[:, 0], x[:, 1])

    def _edge_dist(self, x):
        rel = x[:, None, :] - self._a[None, :, :]
        proj = np.clip(np.einsum("nkj,kj->nk", rel, self._tangent), 0.0, self._len)
        foot = self._a[None, :, :] + proj[..., None] * self._tangent[None, :, :]
        gap = x[:, None, :] - foot
        # hypot rather than a squared norm: tiny offsets must not underflow to 0
        return np.hypot(gap[..., 0], gap[..., 1])

    def _dist(self, x):
        out = np.empty(len(x))
        for i in range(0, len(x), _BATCH):
            out[i : i + _BATCH] = self._edge_dist(x[i : i + _BATCH]).min(axis=1)
        return out

    @property
    def volume(self):
        return self._area

    @property
    def boundary_measure(self):
        return float(self._len.sum())

    @property
    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def inner_radius(self):
        # largest inscribed circle radius, via shapely's pole of inaccessibility
        label = shapely.maximum_inscribed_circle(self._shape, tolerance=1e-9)
        return float(label.length)

    def shell_volume(self, s):
        s = float(s)
        if s <= 0:
            return 0.0
        eroded = self._shape.buffer(-s, quad_segs=_QUAD_SEGS, join_style="round")
        return self._area - eroded.area

    def sample_shell(self, s_lo, s_hi, n, rng):
        # proposal: inward rectangles on every edge plus sectors at reflex
        # vertices; their union covers {delta < s_hi} inside the polygon
        s_hi = float(s_hi)
        if s_hi >= self.inner_radius or self.shell_volume(s_hi) - self.shell_volume(s_lo) > 0.3 * self._area:
            # thick shells are cheaper to filter from uniform draws
            return super().sample_shell(s_lo, s_hi, n, rng)
        v = self.vertices
        rect_area = self._len * s_hi
        sector_angle = []
        for k in self._reflex:
            n_in = self._inward[k - 1]
            n_out = self._inward[k]
            th_in = math.atan2(n_in[1], n_in[0])
            th_out = math.atan2(n_out[1], n_out[0])
            sector_angle.append((th_out, (th_in - th_out) % (2 * math.pi)))
        sector_area = np.array([0.5 * w * s_hi**2 for _, w in sector_angle])
        areas = np.concatenate([rect_area, sector_area])
        prob = areas / areas.sum()
        n_edges = len(self._len)
        out = []
        have = 0
        while have < n:
            m = max(4096, 2 * (n - have))
            piece = rng.choice(len(areas), size=m, p=prob)
            u1, u2 = rng.random(m), rng.random(m)
            x = np.empty((m, 2))
            is_rect = piece < n_edges
            k = piece[is_rect]
            x[is_rect] = (
                self._a[k]
                + (u1[is_rect] * self._len[k])[:, None] * self._tangent[k]
                + (u2[is_rect] * s_hi)[:, None] * self._inward[k]
            )
            if np.any(~is_rect):
                j = piece[~is_rect] - n_edges
                start = np.array([sector_angle[i][0] for i in j])
                width = np.array([sector_angle[i][1] for i in j])
                rad = s_hi * np.sqrt(u1[~is_rect])
                ang = start + width * u2[~is_rect]
                x[~is_rect] = v[self._reflex[j]] + rad[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
            mult = self._coverage(x, s_hi, sector_angle)
            keep = (mult > 0) & (rng.random(m) * np.maximum(mult, 1) < 1.0)
            keep &= self._contains(x)
            dist = self._dist(x)
            keep &= (dist >= s_lo) & (dist < s_hi)
            out.append(x[keep])
            have += int(keep.sum())
        return np.concatenate(out)[:n]

    def _coverage(self, x, s_hi, sector_angle):
        rel = x[:, None, :] - self._a[None, :, :]
        along = np.einsum("nkj,kj->nk", rel, self._tangent)
        off = np.einsum("nkj,kj->nk", rel, self._inward)
        count = ((along >= 0) & (along <= self._len) & (off >= 0) & (off <= s_hi)).sum(axis=1)
        for (start, width), k in zip(sector_angle, self._reflex):
            r = x - self.vertices[k]
            rad = np.linalg.norm(r, axis=1)
            ang = (np.arctan2(r[:, 1], r[:, 0]) - start) % (2 * math.pi)
            count += (rad <= s_hi) & (ang <= width)
        return count

    def scaled(self, factor):
        return Polygon2D(self.vertices * factor)

    def to_dict(self):
        return {"type": "polygon", "vertices": self.vertices.tolist()}


class DisjointUnion(Domain):
    """Union of well-separated bounded components.

    Shell volumes are summed componentwise, which is exact while the shell
    width stays below half the gap between components.
    """

    def __init__(self, components):
        self.components = list(components)
        if not self.components:
            raise InvalidParameterError("union needs at least one component")
        dims = {c.d for c in self.components}
        if len(dims) != 1 or not all(c.bounded for c in self.components):
            raise InvalidParameterError("components must be bounded and share a dimension")
        self.d = dims.pop()

    def _contains(self, x):
        return np.any([c._contains(x) for c in self.components], axis=0)

    def _dist(self, x):
        return np.min([c._dist(x) for c in self.components], axis=0)

    @property
    def volume(self):
        return sum(c.volume for c in self.components)

    @property
    def boundary_measure(self):
        return sum(c.boundary_measure for c in self.components)

    @property
    def bounding_box(self):
        boxes = [c.bounding_box for c in self.components]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    @property
    def inner_radius(self):
        return max(c.inner_radius for c in self.components)

    def shell_volume(self, s):
        return sum(c.shell_volume(s) for c in self.components)

    def sample_shell(self, s_lo, s_hi, n, rng):
        vols = np.array([c.shell_volume(s_hi) - c.shell_volume(s_lo) for c in self.components])
        counts = rng.multinomial(n, vols / vols.sum())
        parts = [c.sample_shell(s_lo, s_hi, int(k), rng) for c, k in zip(self.components, counts) if k > 0]
        x = np.concatenate(parts)
        return x[rng.permutation(len(x))]

    def scaled(self, factor):
        return DisjointUnion([c.scaled(factor) for c in self.components])

    def to_dict(self):
        return {"type": "union", "components": [c.to_dict() for c in self.components]}


# ---------------------------------------------------------------------------
# module-level operations


def dist_to_boundary(dom: Domain, x):
    return dom.dist_to_boundary(x)


def sample_uniform(dom: Domain, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. uniform points of ``dom``, reproducible from ``seed``."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return dom.sample_uniform(n, rng)


def shell_volume(dom: Domain, s: float) -> float:
    """Volume of ``{x in D : delta_D(x) < s}``."""
    if not s > 0:
        raise InvalidParameterError("shell width must be positive")
    return dom.shell_volume(s)


@dataclass
class ShellProfile:
    s: np.ndarray
    g: np.ndarray
    boundary_measure: float

    @property
    def ratio(self):
        return self.g / self.s


def minkowski_ratio_curve(dom: Domain, s_grid) -> ShellProfile:
    """Tabulate g(s)/s on a decreasing grid of shell widths."""
    s = np.asarray(s_grid, dtype=float)
    if s.ndim != 1 or np.any(s <= 0) or np.any(np.diff(s) >= 0):
        raise InvalidParameterError("shell widths must be positive and strictly decreasing")
    g = np.array([shell_volume(dom, float(x)) for x in s])
    return ShellProfile(s=s, g=g, boundary_measure=dom.boundary_measure)


# ---------------------------------------------------------------------------
# canonical test domains and loaders


def unit_square() -> Box:
    return Box([0.0, 0.0], [1.0, 1.0])


def l_shape() -> Polygon2D:
    """Unit square with the upper-right quarter removed (perimeter 4, area 3/4)."""
    return Polygon2D([[0, 0], [1, 0], [1, 0.5], [0.5, 0.5], [0.5, 1], [0, 1]])


def unit_disk() -> Ball:
    return Ball([0.0, 0.0], 1.0)


def load_polygon(path) -> Polygon2D:
    """Read a JSON array of ``[x, y]`` pairs (counter-clockwise)."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, list) or not all(
        isinstance(p, list) and len(p) == 2 and all(isinstance(c, (int, float)) for c in p) for p in data
    ):
        raise InvalidParameterError("polygon file must hold a JSON array of [x, y] pairs")
    return Polygon2D(data)


def domain_from_spec(spec: str, d: int = 2) -> Domain:
    """Resolve a CLI domain name (``square``, ``lshape``, ``disk``, ``ball``,
    ``box``, ``halfspace``) or a path to a polygon JSON file."""
    name = spec.lower()
    if name == "square":
        return unit_square()
    if name in ("lshape", "l-shape"):
        return l_shape()
    if name == "disk":
        return unit_disk()
    if name == "ball":
        return Ball(np.zeros(d), 1.0)
    if name == "box":
        return Box(np.zeros(d), np.ones(d))
    if name == "halfspace":
        return HalfSpace(d)
    path = Path(spec)
    if path.suffix == ".json" and path.exists():
        return load_polygon(path)
    raise InvalidParameterError(f"unknown domain {spec!r}")
