"""Planar geometry for city-scale map extracts.

Geographic coordinates are projected once onto a local tangent plane
(equirectangular about a fixed origin) and everything downstream is plain
Euclidean geometry: distances and bearings in meters/degrees, sight-line
occlusion against building footprints, and a 12-sector discretization of
directions used as edge labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0

ANGLE_BIN_COUNT = 12
ANGLE_BIN_WIDTH = 30.0
# first sector straddles north: [345, 360) u [0, 15)
ANGLE_BIN_START = 345.0

# max allowed separation for the small-extract projection, degrees
_MAX_EXTENT_DEG = 1.0

_EPS = 1e-9


class GeometryError(ValueError):
    """Raised for degenerate or out-of-range geometric input."""


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 coordinate in degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise GeometryError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lon <= 180.0):
            raise GeometryError(f"coordinate out of range ({self.lat}, {self.lon})")


@dataclass(frozen=True)
class PlanePoint:
    """Projected position, meters east (x) and north (y) of the origin."""

    x: float
    y: float


class Polygon:
    """Closed ring of projected vertices, implicitly closed (no repeated last vertex).

    Simplicity (no self-intersection) is not enforced on construction; map
    ingest validates footprints and rejects violations before they reach the
    geometry predicates below.
    """

    __slots__ = ("vertices",)

    def __init__(self, vertices):
        verts = tuple(vertices)
        if len(verts) >= 2 and verts[0] == verts[-1]:
            verts = verts[:-1]
        if len(verts) < 3:
            raise GeometryError(f"polygon needs >= 3 distinct vertices, got {len(verts)}")
        self.vertices = verts

    def __eq__(self, other):
        return isinstance(other, Polygon) and self.vertices == other.vertices

    def __hash__(self):
        return hash(self.vertices)

    def __repr__(self):
        return f"Polygon({list(self.vertices)!r})"

    def edges(self):
        """Yield (a, b) vertex pairs in ring order, closing back to the start."""
        verts = self.vertices
        for i, a in enumerate(verts):
            yield a, verts[(i + 1) % len(verts)]

    def is_simple(self) -> bool:
        """True when no two non-adjacent edges properly intersect and no
        adjacent edges overlap (bow-ties and degenerate rings return False)."""
        edges = list(self.edges())
        n = len(edges)
        for i in range(n):
            a, b = edges[i]
            if _dist2(a, b) == 0.0:
                return False
            for j in range(i + 1, n):
                c, d = edges[j]
                adjacent = j == i + 1 or (i == 0 and j == n - 1)
                if adjacent:
                    # sharing one endpoint is fine; collinear overlap is not
                    if _collinear_overlap(a, b, c, d):
                        return False
                    continue
                if _segments_intersect(a, b, c, d):
                    return False
        return True


def project(p: GeoPoint, origin: GeoPoint) -> PlanePoint:
    """Equirectangular projection of p onto the tangent plane at origin.

    x = R * (lon - lon0) * cos(lat0) * pi/180, y = R * (lat - lat0) * pi/180.
    Input more than 1 degree from the origin (either axis) is outside the
    small-extract regime this projection is specified for and is rejected.
    """
    if abs(p.lat - origin.lat) > _MAX_EXTENT_DEG or abs(p.lon - origin.lon) > _MAX_EXTENT_DEG:
        raise GeometryError(
            f"point ({p.lat}, {p.lon}) farther than {_MAX_EXTENT_DEG} deg from "
            f"projection origin ({origin.lat}, {origin.lon})"
        )
    k = EARTH_RADIUS_M * math.pi / 180.0
    x = (p.lon - origin.lon) * math.cos(math.radians(origin.lat)) * k
    y = (p.lat - origin.lat) * k
    return PlanePoint(x, y)


def unproject(p: PlanePoint, origin: GeoPoint) -> GeoPoint:
    """Inverse of project (same small-extract regime)."""
    k = EARTH_RADIUS_M * math.pi / 180.0
    lat = origin.lat + p.y / k
    lon = origin.lon + p.x / (k * math.cos(math.radians(origin.lat)))
    return GeoPoint(lat, lon)


def distance(a: PlanePoint, b: PlanePoint) -> float:
    """Euclidean distance in meters."""
    return math.hypot(b.x - a.x, b.y - a.y)


def _wrap360(deg: float) -> float:
    # x % 360.0 can round up to exactly 360.0 for tiny negative x
    out = deg % 360.0
    return 0.0 if out == 360.0 else out


def bearing(a: PlanePoint, b: PlanePoint) -> float:
    """Direction from a to b, degrees clockwise from north, in [0, 360).

    Coincident points have no direction and are rejected.
    """
    dx = b.x - a.x
    dy = b.y - a.y
    if dx == 0.0 and dy == 0.0:
        raise GeometryError("bearing undefined for coincident points")
    return _wrap360(math.degrees(math.atan2(dx, dy)))


def normalize_angle(deg: float) -> float:
    """Wrap any finite angle into [0, 360)."""
    if not math.isfinite(deg):
        raise GeometryError(f"non-finite angle {deg}")
    return _wrap360(deg)


def angle_bin(angle: float) -> int:
    """Map an angle in [0, 360) to one of 12 sector indices.

    Sectors are 30 degrees wide and left-closed right-open; sector 0 is
    centered on 0 degrees, i.e. [345, 360) u [0, 15).
    """
    if not (0.0 <= angle < 360.0):
        raise GeometryError(f"angle {angle} outside [0, 360)")
    return int(((angle + 15.0) % 360.0) // ANGLE_BIN_WIDTH)


def angle_bin_center(bin_index: int) -> float:
    """Center angle of a sector: 0, 30, ..., 330."""
    if not (0 <= bin_index < ANGLE_BIN_COUNT):
        raise GeometryError(f"bin index {bin_index} outside 0..{ANGLE_BIN_COUNT - 1}")
    return (bin_index * ANGLE_BIN_WIDTH) % 360.0


# ----------------------------------------------------------------------------
# low-level segment/polygon predicates


def _dist2(a: PlanePoint, b: PlanePoint) -> float:
    dx = b.x - a.x
    dy = b.y - a.y
    return dx * dx + dy * dy


def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def _segments_intersect(a, b, c, d) -> bool:
    """Proper intersection test: the open interiors of segments ab and cd cross."""
    d1 = _cross(c.x, c.y, d.x, d.y, a.x, a.y)
    d2 = _cross(c.x, c.y, d.x, d.y, b.x, b.y)
    d3 = _cross(a.x, a.y, b.x, b.y, c.x, c.y)
    d4 = _cross(a.x, a.y, b.x, b.y, d.x, d.y)
    return ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    )


def _collinear_overlap(a, b, c, d) -> bool:
    """True when ab and cd are collinear and overlap in more than one point."""
    if abs(_cross(a.x, a.y, b.x, b.y, c.x, c.y)) > _EPS * max(1.0, _dist2(a, b)):
        return False
    if abs(_cross(a.x, a.y, b.x, b.y, d.x, d.y)) > _EPS * max(1.0, _dist2(a, b)):
        return False
    # project onto the dominant axis and compare intervals
    if abs(b.x - a.x) >= abs(b.y - a.y):
        lo1, hi1 = sorted((a.x, b.x))
        lo2, hi2 = sorted((c.x, d.x))
    else:
        lo1, hi1 = sorted((a.y, b.y))
        lo2, hi2 = sorted((c.y, d.y))
    return min(hi1, hi2) - max(lo1, lo2) > _EPS


def point_on_polygon_boundary(p: PlanePoint, poly: Polygon, tol: float = _EPS) -> bool:
    for a, b in poly.edges():
        if distance(p, closest_point_on_segment(p, a, b)) <= tol:
            return True
    return False


def point_strictly_inside(p: PlanePoint, poly: Polygon) -> bool:
    """Strict interior test: boundary points (within a tiny tolerance) count as outside."""
    if point_on_polygon_boundary(p, poly):
        return False
    # even-odd ray crossing, ray toward +x
    inside = False
    for a, b in poly.edges():
        if (a.y > p.y) != (b.y > p.y):
            x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y)
            if x_cross > p.x:
                inside = not inside
    return inside


def _segment_edge_params(a, b, c, d):
    """Parameters t along ab (0..1) where ab meets segment cd, including
    collinear-overlap endpoints. Returns a possibly empty list."""
    rx, ry = b.x - a.x, b.y - a.y
    sx, sy = d.x - c.x, d.y - c.y
    denom = rx * sy - ry * sx
    qpx, qpy = c.x - a.x, c.y - a.y
    scale = max(1.0, abs(rx) + abs(ry) + abs(sx) + abs(sy))
    if abs(denom) <= _EPS * scale * scale:
        # parallel; collinear overlap contributes its endpoints
        if abs(qpx * ry - qpy * rx) > _EPS * scale * scale:
            return []
        len2 = rx * rx + ry * ry
        if len2 == 0.0:
            return []
        out = []
        for px, py in ((c.x, c.y), (d.x, d.y)):
            t = ((px - a.x) * rx + (py - a.y) * ry) / len2
            if -_EPS <= t <= 1.0 + _EPS:
                out.append(min(1.0, max(0.0, t)))
        return out
    t = (qpx * sy - qpy * sx) / denom
    u = (qpx * ry - qpy * rx) / denom
    if -_EPS <= t <= 1.0 + _EPS and -_EPS <= u <= 1.0 + _EPS:
        return [min(1.0, max(0.0, t))]
    return []


def segment_blocked(a: PlanePoint, b: PlanePoint, buildings) -> bool:
    """True when the open segment (a, b) passes through any building.

    Blocking means the segment properly crosses a footprint edge or runs
    through a footprint interior. Merely touching a boundary - in particular
    ending exactly on a polygon, as a sight line to a point on a building
    outline does - does not block. Symmetric in a and b.
    """
    if a == b:
        return False
    for poly in buildings:
        # cheap reject: segment bbox vs polygon bbox
        xs = [v.x for v in poly.vertices]
        ys = [v.y for v in poly.vertices]
        if max(a.x, b.x) < min(xs) - _EPS or min(a.x, b.x) > max(xs) + _EPS:
            continue
        if max(a.y, b.y) < min(ys) - _EPS or min(a.y, b.y) > max(ys) + _EPS:
            continue
        ts = [0.0, 1.0]
        for c, d in poly.edges():
            ts.extend(_segment_edge_params(a, b, c, d))
        ts.sort()
        for t0, t1 in zip(ts, ts[1:]):
            if t1 - t0 <= 1e-12:
                continue
            tm = 0.5 * (t0 + t1)
            mid = PlanePoint(a.x + tm * (b.x - a.x), a.y + tm * (b.y - a.y))
            if point_strictly_inside(mid, poly):
                return True
    return False


def closest_point_on_segment(p: PlanePoint, a: PlanePoint, b: PlanePoint) -> PlanePoint:
    rx, ry = b.x - a.x, b.y - a.y
    len2 = rx * rx + ry * ry
    if len2 == 0.0:
        return a
    t = ((p.x - a.x) * rx + (p.y - a.y) * ry) / len2
    t = min(1.0, max(0.0, t))
    return PlanePoint(a.x + t * rx, a.y + t * ry)


def closest_point_on_polygon(p: PlanePoint, poly: Polygon) -> PlanePoint:
    """Nearest point to p on the polygon boundary.

    Exact distance ties are resolved in favor of the earliest edge in vertex
    order, so the result is deterministic for symmetric inputs.
    """
    best = None
    best_d2 = math.inf
    for a, b in poly.edges():
        cand = closest_point_on_segment(p, a, b)
        d2 = _dist2(p, cand)
        if d2 < best_d2:
            best = cand
            best_d2 = d2
    return best
