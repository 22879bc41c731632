"""OpenStreetMap XML -> streets, points of interest, building footprints.

Only the node/way subset of OSM is consumed (relations are skipped, a known
v1 limitation). Streets are ways whose highway value is on an allow-list;
buildings are closed ways carrying a building tag; POIs are nodes or closed
ways carrying at least one allow-listed POI key. All polygon geometry is
projected onto the local tangent plane at ingest; street centerlines stay in
geographic coordinates until discretization.
"""

from __future__ import annotations

import io
import json
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

from .geodesy import GeoPoint, Polygon, PlanePoint, project

# walkable / drivable street classes kept by default
DEFAULT_STREET_VALUES = frozenset(
    {
        "motorway", "trunk", "primary", "secondary", "tertiary",
        "unclassified", "residential", "living_street", "service",
        "pedestrian", "road",
    }
)

# tag keys that make a node or closed way a point of interest
DEFAULT_POI_KEYS = ("amenity", "shop", "leisure", "tourism", "cuisine")

SIGNAL_TAG = ("highway", "traffic_signals")

MAP_SCHEMA_VERSION = 1


class OsmParseError(ValueError):
    """Malformed OSM XML; carries the 1-based line of the syntax error."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class MissingNodeError(ValueError):
    """A way references node ids that are not present in the file."""

    def __init__(self, missing_ids):
        self.missing_ids = sorted(missing_ids)
        super().__init__(f"ways reference missing node ids: {self.missing_ids}")


@dataclass(frozen=True)
class OsmTag:
    key: str
    value: str


@dataclass
class Poi:
    """Point of interest: an OSM node (point location) or closed way (area)."""

    id: int
    location: object  # GeoPoint for nodes, Polygon (projected) for areas
    tags: list
    name_words: list

    @property
    def is_area(self) -> bool:
        return isinstance(self.location, Polygon)


@dataclass
class MapData:
    street_polylines: list  # list[list[GeoPoint]]
    pois: list  # list[Poi]
    buildings: list  # list[Polygon], projected meters
    projection_origin: GeoPoint
    signals: list = field(default_factory=list)  # list[GeoPoint], traffic signals


def _read_source(source) -> bytes:
    if isinstance(source, bytes):
        return source
    if isinstance(source, str):
        if "<" in source:  # inline XML, not a path
            return source.encode("utf-8")
        with open(source, "rb") as fh:
            return fh.read()
    if isinstance(source, os.PathLike):
        with open(source, "rb") as fh:
            return fh.read()
    return source.read()


def parse_osm(source, street_values=None, poi_keys=None) -> MapData:
    """Parse an OSM XML document into MapData.

    source may be a path, raw bytes, an inline XML string, or a file object.
    The projection origin is the centroid of every node coordinate in the
    file. Ways referencing unknown node ids raise MissingNodeError; syntax
    errors raise OsmParseError with the offending line number.
    """
    street_values = frozenset(street_values) if street_values is not None else DEFAULT_STREET_VALUES
    poi_keys = tuple(poi_keys) if poi_keys is not None else DEFAULT_POI_KEYS

    raw = _read_source(source)
    try:
        root = ET.parse(io.BytesIO(raw)).getroot()
    except ET.ParseError as exc:
        line = exc.position[0] if exc.position else None
        raise OsmParseError(f"OSM XML syntax error at line {line}: {exc}", line=line) from exc

    nodes = {}  # id -> GeoPoint
    node_tags = {}  # id -> list[OsmTag], only for tagged nodes
    for el in root.findall("node"):
        nid = int(el.get("id"))
        nodes[nid] = GeoPoint(float(el.get("lat")), float(el.get("lon")))
        tags = [OsmTag(t.get("k"), t.get("v")) for t in el.findall("tag")]
        if tags:
            node_tags[nid] = tags

    if not nodes:
        raise OsmParseError("no nodes in OSM document")

    origin = GeoPoint(
        sum(p.lat for p in nodes.values()) / len(nodes),
        sum(p.lon for p in nodes.values()) / len(nodes),
    )

    missing = set()
    streets = []
    buildings = []
    pois = []

    for el in root.findall("way"):
        refs = [int(nd.get("ref")) for nd in el.findall("nd")]
        unknown = [r for r in refs if r not in nodes]
        if unknown:
            missing.update(unknown)
            continue
        tags = [OsmTag(t.get("k"), t.get("v")) for t in el.findall("tag")]
        tag_map = {t.key: t.value for t in tags}
        closed = len(refs) >= 4 and refs[0] == refs[-1]

        if tag_map.get("highway") in street_values and len(refs) >= 2:
            streets.append([nodes[r] for r in refs])

        if closed:
            ring = [project(nodes[r], origin) for r in refs[:-1]]
            if len({(p.x, p.y) for p in ring}) >= 3:
                poly = Polygon(ring)
                if "building" in tag_map:
                    buildings.append(poly)
                if any(k in tag_map for k in poi_keys):
                    pois.append(_make_poi(int(el.get("id")), poly, tags))

    if missing:
        raise MissingNodeError(missing)

    signals = []
    for nid in sorted(node_tags):
        tags = node_tags[nid]
        tag_map = {t.key: t.value for t in tags}
        if any(k in tag_map for k in poi_keys):
            pois.append(_make_poi(nid, nodes[nid], tags))
        if tag_map.get(SIGNAL_TAG[0]) == SIGNAL_TAG[1]:
            signals.append(nodes[nid])

    pois.sort(key=lambda p: p.id)
    return MapData(
        street_polylines=streets,
        pois=pois,
        buildings=buildings,
        projection_origin=origin,
        signals=signals,
    )


def _make_poi(osm_id, location, tags):
    name = next((t.value for t in tags if t.key == "name"), None)
    return Poi(
        id=osm_id,
        location=location,
        tags=list(tags),
        name_words=name.split() if name else [],
    )


@dataclass
class ValidationReport:
    """Outcome of MapData validation; `cleaned` is the usable dataset."""

    cleaned: MapData
    dropped_buildings: list = field(default_factory=list)   # indices into the input list
    collapsed_polylines: list = field(default_factory=list)  # (index, removed_point_count)
    dropped_pois: list = field(default_factory=list)         # POI ids without allow-listed tags

    @property
    def clean(self) -> bool:
        return not (self.dropped_buildings or self.collapsed_polylines or self.dropped_pois)

    def entries(self):
        out = []
        for i in self.dropped_buildings:
            out.append(f"dropped self-intersecting building footprint #{i}")
        for i, n in self.collapsed_polylines:
            out.append(f"collapsed {n} zero-length segment(s) in street polyline #{i}")
        for pid in self.dropped_pois:
            out.append(f"dropped POI {pid}: no allow-listed tag")
        return out


def validate(map_data: MapData, poi_keys=None) -> ValidationReport:
    """Check and clean a MapData: self-intersecting buildings are dropped,
    zero-length polyline segments collapsed, POIs without an allow-listed
    tag dropped. Diagnostics only - never raises."""
    poi_keys = tuple(poi_keys) if poi_keys is not None else DEFAULT_POI_KEYS

    buildings = []
    dropped_buildings = []
    for i, poly in enumerate(map_data.buildings):
        if poly.is_simple():
            buildings.append(poly)
        else:
            dropped_buildings.append(i)

    polylines = []
    collapsed = []
    for i, line in enumerate(map_data.street_polylines):
        deduped = [line[0]]
        for p in line[1:]:
            if p != deduped[-1]:
                deduped.append(p)
        removed = len(line) - len(deduped)
        if removed:
            collapsed.append((i, removed))
        if len(deduped) >= 2:
            polylines.append(deduped)

    pois = []
    dropped_pois = []
    for poi in map_data.pois:
        if any(t.key in poi_keys for t in poi.tags):
            pois.append(poi)
        else:
            dropped_pois.append(poi.id)

    cleaned = MapData(
        street_polylines=polylines,
        pois=pois,
        buildings=buildings,
        projection_origin=map_data.projection_origin,
        signals=list(map_data.signals),
    )
    return ValidationReport(cleaned, dropped_buildings, collapsed, dropped_pois)


# ----------------------------------------------------------------------------
# JSON round trip (stable field order, exact float round trip via repr)


def map_to_dict(map_data: MapData) -> dict:
    return {
        "schema": MAP_SCHEMA_VERSION,
        "projection_origin": [map_data.projection_origin.lat, map_data.projection_origin.lon],
        "streets": [[[p.lat, p.lon] for p in line] for line in map_data.street_polylines],
        "pois": [
            {
                "id": poi.id,
                "kind": "area" if poi.is_area else "node",
                "location": (
                    [[v.x, v.y] for v in poi.location.vertices]
                    if poi.is_area
                    else [poi.location.lat, poi.location.lon]
                ),
                "tags": [[t.key, t.value] for t in poi.tags],
                "name_words": list(poi.name_words),
            }
            for poi in map_data.pois
        ],
        "buildings": [[[v.x, v.y] for v in poly.vertices] for poly in map_data.buildings],
        "signals": [[p.lat, p.lon] for p in map_data.signals],
    }


def map_from_dict(d: dict) -> MapData:
    if d.get("schema") != MAP_SCHEMA_VERSION:
        raise ValueError(f"unsupported map schema {d.get('schema')!r}, expected {MAP_SCHEMA_VERSION}")
    pois = []
    for p in d["pois"]:
        if p["kind"] == "area":
            loc = Polygon([PlanePoint(x, y) for x, y in p["location"]])
        else:
            loc = GeoPoint(*p["location"])
        pois.append(
            Poi(
                id=p["id"],
                location=loc,
                tags=[OsmTag(k, v) for k, v in p["tags"]],
                name_words=list(p["name_words"]),
            )
        )
    return MapData(
        street_polylines=[[GeoPoint(lat, lon) for lat, lon in line] for line in d["streets"]],
        pois=pois,
        buildings=[Polygon([PlanePoint(x, y) for x, y in ring]) for ring in d["buildings"]],
        projection_origin=GeoPoint(*d["projection_origin"]),
        signals=[GeoPoint(lat, lon) for lat, lon in d.get("signals", [])],
    )


def save_map(map_data: MapData, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(map_to_dict(map_data), fh, ensure_ascii=False)
        fh.write("\n")


def load_map(path) -> MapData:
    with open(path, encoding="utf-8") as fh:
        return map_from_dict(json.load(fh))
