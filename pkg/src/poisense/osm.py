"""Streaming OSM XML ingestion into typed, point-located POIs."""
from __future__ import annotations

import gzip
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Optional, Sequence

from .taxonomy import TaxonomyGraph

log = logging.getLogger(__name__)

SUPPORTED_OSM_VERSION = "0.6"

POISTORE_HEADER = "poistore v1"


class MalformedXml(Exception):
    pass


@dataclass(frozen=True)
class GeoBounds:
    """Ingestion bounding box in degrees."""

    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def __post_init__(self) -> None:
        if not (self.min_lat < self.max_lat and self.min_lon < self.max_lon):
            raise ValueError("bounding box must have positive extent")

    def contains(self, lat: float, lon: float) -> bool:
        return (
            self.min_lat <= lat <= self.max_lat
            and self.min_lon <= lon <= self.max_lon
        )


@dataclass(frozen=True)
class RawElement:
    kind: str  # node | way | relation
    id: int
    lat: Optional[float] = None
    lon: Optional[float] = None
    refs: tuple[int, ...] = ()
    tags: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Poi:
    source_id: int
    poi_type: str
    lat: float
    lon: float
    provenance: str  # node | way-centroid | relation-centroid
    geometry: Optional[tuple[tuple[float, float], ...]] = None


@dataclass
class IngestStats:
    elements_read: int = 0
    pois_extracted: int = 0
    pois_relevant: int = 0
    pois_discarded: int = 0
    unresolved_ways: int = 0
    out_of_bbox: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


def _open_stream(source) -> IO[bytes]:
    if hasattr(source, "read"):
        return source
    if str(source).endswith(".gz"):
        return gzip.open(source, "rb")
    return open(source, "rb")


def parse_osm_xml(source, bbox: GeoBounds) -> Iterator[RawElement]:
    """Stream elements intersecting ``bbox`` from an OSM XML document.

    Nodes outside the box are dropped.  Ways and relations are always emitted
    (their coordinates live in their member nodes); the extraction stage drops
    the ones whose members all fell outside the box.  Memory use is bounded by
    the single element currently being parsed.
    """
    stream = _open_stream(source)
    try:
        context = ET.iterparse(stream, events=("start", "end"))
        refs: list[int] = []
        tags: list[tuple[str, str]] = []
        root = None
        try:
            for event, elem in context:
                if event == "start":
                    if root is None:
                        root = elem
                        version = elem.get("version")
                        if version is not None and version != SUPPORTED_OSM_VERSION:
                            log.warning(
                                "unknown OSM schema version %s, continuing", version
                            )
                    if elem.tag in ("node", "way", "relation"):
                        refs = []
                        tags = []
                    continue
                if elem.tag == "tag":
                    tags.append((elem.get("k", ""), elem.get("v", "")))
                elif elem.tag == "nd":
                    refs.append(int(elem.get("ref")))
                elif elem.tag == "member":
                    if elem.get("type") == "node":
                        refs.append(int(elem.get("ref")))
                elif elem.tag == "node":
                    lat = float(elem.get("lat"))
                    lon = float(elem.get("lon"))
                    if bbox.contains(lat, lon):
                        yield RawElement(
                            "node", int(elem.get("id")), lat=lat, lon=lon,
                            tags=tuple(tags),
                        )
                    elem.clear()
                    if root is not None:
                        root.clear()
                elif elem.tag in ("way", "relation"):
                    yield RawElement(
                        elem.tag, int(elem.get("id")), refs=tuple(refs),
                        tags=tuple(tags),
                    )
                    elem.clear()
                    if root is not None:
                        root.clear()
        except ET.ParseError as exc:
            raise MalformedXml(f"malformed OSM XML at {exc.position}: {exc.msg}") from exc
    finally:
        if stream is not source:
            stream.close()


def encode_poi_type(
    tags: Sequence[tuple[str, str]], g: TaxonomyGraph
) -> Optional[str]:
    """Canonical POI type id for a tag list, or None if no type-bearing key.

    The first tag whose key the taxonomy knows wins.  Values shared between
    keys (``train`` under both railway and route) keep the key prefix; all
    others use the bare ``v_<value>`` form.
    """
    keys = g.recognized_keys()
    ambiguous = g.ambiguous_values()
    for key, value in tags:
        if key in keys:
            value = value.strip().replace(" ", "_")
            if value in ambiguous:
                return f"k_{key}_v_{value}"
            return f"v_{value}"
    return None


def extract_pois(
    elements: Iterable[RawElement], g: TaxonomyGraph
) -> tuple[list[Poi], IngestStats]:
    """Turn raw elements into relevant POIs with point geometry.

    Nodes keep their own point; ways and relations get the centroid of their
    resolved member nodes plus the full polyline for cell assignment.  Types
    without any activating rule count as discarded.
    """
    stats = IngestStats()
    pois: list[Poi] = []
    node_coords: dict[int, tuple[float, float]] = {}
    for elem in elements:
        stats.elements_read += 1
        if elem.kind == "node":
            node_coords[elem.id] = (elem.lat, elem.lon)
        poi_type = encode_poi_type(elem.tags, g)
        if poi_type is None:
            continue
        if elem.kind == "node":
            point = (elem.lat, elem.lon)
            geometry = None
            provenance = "node"
        else:
            resolved = [node_coords[r] for r in elem.refs if r in node_coords]
            if not resolved:
                stats.unresolved_ways += 1
                continue
            point = (
                sum(p[0] for p in resolved) / len(resolved),
                sum(p[1] for p in resolved) / len(resolved),
            )
            geometry = tuple(resolved)
            provenance = f"{elem.kind}-centroid"
        stats.pois_extracted += 1
        if poi_type not in g.poi_types or not g.activities_for_poi(poi_type):
            stats.pois_discarded += 1
            continue
        stats.pois_relevant += 1
        pois.append(
            Poi(elem.id, poi_type, point[0], point[1], provenance, geometry)
        )
    return pois, stats


# ----------------------------------------------------------------------
# POI store: a versioned flat file, one row per POI, documented field order:
# source_id, poi_type, lat, lon, provenance, geometry ("lat:lon;lat:lon" or -)


def write_poi_store(pois: Iterable[Poi], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(POISTORE_HEADER + "\n")
        for p in pois:
            geom = (
                ";".join(f"{lat!r}:{lon!r}" for lat, lon in p.geometry)
                if p.geometry
                else "-"
            )
            fh.write(
                f"{p.source_id}\t{p.poi_type}\t{p.lat!r}\t{p.lon!r}\t{p.provenance}\t{geom}\n"
            )


def read_poi_store(path) -> list[Poi]:
    pois = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != POISTORE_HEADER:
            raise ValueError(f"unexpected POI store header {header!r}")
        for line in fh:
            sid, poi_type, lat, lon, provenance, geom = line.rstrip("\n").split("\t")
            geometry = None
            if geom != "-":
                geometry = tuple(
                    (float(a), float(b))
                    for a, b in (pair.split(":") for pair in geom.split(";"))
                )
            pois.append(
                Poi(int(sid), poi_type, float(lat), float(lon), provenance, geometry)
            )
    return pois
