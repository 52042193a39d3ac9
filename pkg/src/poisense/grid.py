"""Density-based POI distribution grid.

A fixed base grid of square cells is re-partitioned by a quad-tree so that
each leaf holds a bounded POI count; leaves are the engine's locations.  All
geometry runs in a local equirectangular projection (meters, scale taken at
the bounding-box center) and rectangles are stored in integer millimeters so
tiling checks are exact.
"""
from __future__ import annotations

import gzip
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .osm import Poi

EARTH_RADIUS_M = 6371008.8
MM = 1000  # millimeters per meter

SNAPSHOT_VERSION = "poisense-grid v1"


class DegenerateBbox(Exception):
    pass


class OutOfBounds(Exception):
    pass


@dataclass(frozen=True)
class BoundingBox:
    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def __post_init__(self) -> None:
        if not (self.min_lat < self.max_lat and self.min_lon < self.max_lon):
            raise DegenerateBbox("bounding box must have positive area")

    @property
    def _m_per_deg_lat(self) -> float:
        return math.pi / 180.0 * EARTH_RADIUS_M

    @property
    def _m_per_deg_lon(self) -> float:
        center_lat = (self.min_lat + self.max_lat) / 2.0
        return self._m_per_deg_lat * math.cos(math.radians(center_lat))

    @property
    def width_m(self) -> float:
        return (self.max_lon - self.min_lon) * self._m_per_deg_lon

    @property
    def height_m(self) -> float:
        return (self.max_lat - self.min_lat) * self._m_per_deg_lat

    @classmethod
    def from_extent(
        cls, center_lat: float, center_lon: float, width_m: float, height_m: float
    ) -> "BoundingBox":
        m_per_deg_lat = math.pi / 180.0 * EARTH_RADIUS_M
        m_per_deg_lon = m_per_deg_lat * math.cos(math.radians(center_lat))
        dlat = height_m / m_per_deg_lat / 2.0
        dlon = width_m / m_per_deg_lon / 2.0
        return cls(center_lat - dlat, center_lon - dlon, center_lat + dlat, center_lon + dlon)

    def project(self, lat: float, lon: float) -> tuple[float, float]:
        """Degrees to local meters, origin at the bbox min corner."""
        return (
            (lon - self.min_lon) * self._m_per_deg_lon,
            (lat - self.min_lat) * self._m_per_deg_lat,
        )

    def unproject(self, x_m: float, y_m: float) -> tuple[float, float]:
        return (
            self.min_lat + y_m / self._m_per_deg_lat,
            self.min_lon + x_m / self._m_per_deg_lon,
        )


@dataclass(frozen=True)
class GridConfig:
    base_cell_m: float = 50.0
    h_min: int = 10
    h_max: int = 20
    r0_m: float = 100.0
    dr_m: float = 25.0
    r_max_m: float = 3000.0
    min_agg_pois: int = 50

    def __post_init__(self) -> None:
        if not 0 < self.h_min <= self.h_max:
            raise ValueError("need 0 < h_min <= h_max")
        if not 0 < self.r0_m <= self.r_max_m:
            raise ValueError("need 0 < r0_m <= r_max_m")
        if self.dr_m <= 0:
            raise ValueError("need dr_m > 0")
        if self.base_cell_m <= 0:
            raise ValueError("need base_cell_m > 0")


def build_base_grid(bbox: BoundingBox, cfg: GridConfig) -> tuple[int, int]:
    """Base grid dimensions (cols, rows) covering the bbox."""
    cols = math.ceil(bbox.width_m / cfg.base_cell_m - 1e-9)
    rows = math.ceil(bbox.height_m / cfg.base_cell_m - 1e-9)
    if cols < 1 or rows < 1:
        raise DegenerateBbox("bbox smaller than one cell")
    return cols, rows


@dataclass
class Location:
    id: str
    col0: int
    row0: int
    col1: int
    row1: int
    rect_mm: tuple[int, int, int, int]  # x0, y0, x1, y1
    pois: Counter = field(default_factory=Counter)
    sparse: bool = False

    @property
    def poi_total(self) -> int:
        return sum(self.pois.values())

    @property
    def centroid_m(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.rect_mm
        return ((x0 + x1) / 2.0 / MM, (y0 + y1) / 2.0 / MM)

    def min_distance_m(self, x_m: float, y_m: float) -> float:
        """Minimum cartesian distance from a point to this rectangle."""
        x0, y0, x1, y1 = (v / MM for v in self.rect_mm)
        dx = max(x0 - x_m, 0.0, x_m - x1)
        dy = max(y0 - y_m, 0.0, y_m - y1)
        return math.hypot(dx, dy)


@dataclass(frozen=True)
class NeighborSet:
    center: str
    radius_m: float
    members: tuple[tuple[str, float], ...]  # (location id, lambda weight)


class QuadTree:
    """Immutable after build; leaves tile the working grid extent exactly."""

    def __init__(
        self,
        bbox: BoundingBox,
        cfg: GridConfig,
        cols: int,
        rows: int,
        leaves: list[Location],
    ):
        self.bbox = bbox
        self.cfg = cfg
        self.cols = cols
        self.rows = rows
        self.cell_mm = round(cfg.base_cell_m * MM)
        self.leaves = leaves
        self._by_id = {leaf.id: leaf for leaf in leaves}
        self._cell_to_leaf: dict[tuple[int, int], int] = {}
        for idx, leaf in enumerate(leaves):
            for c in range(leaf.col0, leaf.col1):
                for r in range(leaf.row0, leaf.row1):
                    self._cell_to_leaf[(c, r)] = idx

    def leaf(self, loc_id: str) -> Location:
        return self._by_id[loc_id]

    def _cell_index(self, x_m: float, y_m: float) -> tuple[int, int]:
        x_mm = round(x_m * MM)
        y_mm = round(y_m * MM)
        if not (0 <= x_mm <= self.cols * self.cell_mm and 0 <= y_mm <= self.rows * self.cell_mm):
            raise OutOfBounds(f"point {x_m, y_m} outside grid extent")
        # Boundary points go to the smaller (row, col) cell: right-closed intervals.
        c = max(0, math.ceil(x_mm / self.cell_mm) - 1)
        r = max(0, math.ceil(y_mm / self.cell_mm) - 1)
        return min(c, self.cols - 1), min(r, self.rows - 1)

    def locate(self, lat: float, lon: float) -> Location:
        x, y = self.bbox.project(lat, lon)
        c, r = self._cell_index(x, y)
        return self.leaves[self._cell_to_leaf[(c, r)]]

    def aggregation_radius(self, loc: Location) -> tuple[float, NeighborSet]:
        """Smallest stepped radius pooling at least ``min_agg_pois`` POIs."""
        cfg = self.cfg
        cx, cy = loc.centroid_m
        dists = sorted(
            (leaf.min_distance_m(cx, cy), leaf.id, leaf.poi_total)
            for leaf in self.leaves
        )
        radius = cfg.r_max_m
        r = cfg.r0_m
        while r <= cfg.r_max_m + 1e-9:
            total = sum(t for d, _, t in dists if d <= r)
            if total >= cfg.min_agg_pois:
                radius = r
                break
            r += cfg.dr_m
        radius = min(radius, cfg.r_max_m)
        members = tuple(
            (leaf_id, 1.0 - d / radius) for d, leaf_id, _ in dists if d <= radius
        )
        return radius, NeighborSet(loc.id, radius, members)

    # ------------------------------------------------------------------
    # exports

    def to_geojson(self, with_radius: bool = False) -> dict:
        features = []
        for leaf in self.leaves:
            x0, y0, x1, y1 = (v / MM for v in leaf.rect_mm)
            ring = [
                self.bbox.unproject(x, y)
                for x, y in [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
            ]
            props = {
                "id": leaf.id,
                "poi_total": leaf.poi_total,
                "sparse_flag": leaf.sparse,
            }
            if with_radius:
                props["radius_m"] = self.aggregation_radius(leaf)[0]
            features.append(
                {
                    "type": "Feature",
                    "geometry": {
                        "type": "Polygon",
                        "coordinates": [[[lon, lat] for lat, lon in ring]],
                    },
                    "properties": props,
                }
            )
        return {"type": "FeatureCollection", "features": features}

    def save_snapshot(self, path) -> None:
        payload = {
            "version": SNAPSHOT_VERSION,
            "bbox": [self.bbox.min_lat, self.bbox.min_lon, self.bbox.max_lat, self.bbox.max_lon],
            "cfg": self.cfg.__dict__,
            "cols": self.cols,
            "rows": self.rows,
            "leaves": [
                {
                    "id": leaf.id,
                    "cells": [leaf.col0, leaf.row0, leaf.col1, leaf.row1],
                    "rect_mm": list(leaf.rect_mm),
                    "pois": dict(sorted(leaf.pois.items())),
                    "sparse": leaf.sparse,
                }
                for leaf in self.leaves
            ],
        }
        data = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        with open(path, "wb") as fh:
            # filename="" keeps the archive free of the output path, so two
            # saves of the same tree are byte-identical.
            with gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(data)

    @classmethod
    def load_snapshot(cls, path) -> "QuadTree":
        with gzip.open(path, "rb") as fh:
            payload = json.loads(fh.read())
        if payload.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {payload.get('version')!r}")
        bbox = BoundingBox(*payload["bbox"])
        cfg = GridConfig(**payload["cfg"])
        leaves = [
            Location(
                id=rec["id"],
                col0=rec["cells"][0],
                row0=rec["cells"][1],
                col1=rec["cells"][2],
                row1=rec["cells"][3],
                rect_mm=tuple(rec["rect_mm"]),
                pois=Counter(rec["pois"]),
                sparse=rec["sparse"],
            )
            for rec in payload["leaves"]
        ]
        return cls(bbox, cfg, payload["cols"], payload["rows"], leaves)


# ----------------------------------------------------------------------
# construction


def _cell_counts(
    pois: Sequence[Poi], bbox: BoundingBox, cols: int, rows: int, cell_mm: int
) -> tuple[dict[tuple[int, int], Counter], int]:
    """Per-base-cell POI type counts; way geometries count in every crossed cell."""
    try:
        from shapely.geometry import LineString, Polygon, box
    except ImportError:  # pragma: no cover
        LineString = Polygon = box = None
    counts: dict[tuple[int, int], Counter] = {}
    dropped = 0

    def cell_of(x_m: float, y_m: float) -> Optional[tuple[int, int]]:
        x_mm = round(x_m * MM)
        y_mm = round(y_m * MM)
        if not (0 <= x_mm <= cols * cell_mm and 0 <= y_mm <= rows * cell_mm):
            return None
        c = min(max(0, math.ceil(x_mm / cell_mm) - 1), cols - 1)
        r = min(max(0, math.ceil(y_mm / cell_mm) - 1), rows - 1)
        return c, r

    for poi in pois:
        if poi.geometry and len(poi.geometry) >= 2 and LineString is not None:
            pts = [bbox.project(lat, lon) for lat, lon in poi.geometry]
            if len(pts) >= 4 and poi.geometry[0] == poi.geometry[-1]:
                shape = Polygon(pts)
                if not shape.is_valid:
                    shape = LineString(pts)
            else:
                shape = LineString(pts)
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            c_lo = max(0, int(min(xs) * MM) // cell_mm)
            c_hi = min(cols - 1, int(max(xs) * MM) // cell_mm)
            r_lo = max(0, int(min(ys) * MM) // cell_mm)
            r_hi = min(rows - 1, int(max(ys) * MM) // cell_mm)
            hit = False
            for c in range(c_lo, c_hi + 1):
                for r in range(r_lo, r_hi + 1):
                    cell_box = box(
                        c * cell_mm / MM,
                        r * cell_mm / MM,
                        (c + 1) * cell_mm / MM,
                        (r + 1) * cell_mm / MM,
                    )
                    if shape.intersects(cell_box):
                        counts.setdefault((c, r), Counter())[poi.poi_type] += 1
                        hit = True
            if not hit:
                dropped += 1
            continue
        x, y = bbox.project(poi.lat, poi.lon)
        cell = cell_of(x, y)
        if cell is None:
            dropped += 1
            continue
        counts.setdefault(cell, Counter())[poi.poi_type] += 1
    return counts, dropped


def build_quadtree(
    pois: Sequence[Poi], bbox: BoundingBox, cfg: GridConfig = GridConfig()
) -> tuple["QuadTree", int]:
    """Build the density grid; returns the tree and the out-of-bbox POI count.

    The quad-tree recurses over a power-of-two padding of the base grid and
    clips leaves to the grid extent, so internal nodes always split into four
    equal quadrants while leaves still tile the bbox.  A node splits while its
    POI count exceeds ``h_max`` and its side exceeds one base cell; leaves
    below ``h_min`` stay as-is and are flagged sparse.
    """
    cols, rows = build_base_grid(bbox, cfg)
    cell_mm = round(cfg.base_cell_m * MM)
    counts, dropped = _cell_counts(pois, bbox, cols, rows, cell_mm)

    size = 1
    while size < max(cols, rows):
        size *= 2

    leaves: list[Location] = []

    def total_in(c0: int, r0: int, c1: int, r1: int) -> int:
        return sum(
            sum(counts[(c, r)].values())
            for c in range(c0, min(c1, cols))
            for r in range(r0, min(r1, rows))
            if (c, r) in counts
        )

    def recurse(c0: int, r0: int, c1: int, r1: int) -> None:
        if c0 >= cols or r0 >= rows:
            return  # fully outside the grid
        n = total_in(c0, r0, c1, r1)
        side = c1 - c0
        if n > cfg.h_max and side > 1:
            cm = c0 + side // 2
            rm = r0 + side // 2
            recurse(c0, r0, cm, rm)
            recurse(cm, r0, c1, rm)
            recurse(c0, rm, cm, r1)
            recurse(cm, rm, c1, r1)
            return
        cc1 = min(c1, cols)
        rr1 = min(r1, rows)
        pois_here = Counter()
        for c in range(c0, cc1):
            for r in range(r0, rr1):
                if (c, r) in counts:
                    pois_here.update(counts[(c, r)])
        leaf = Location(
            id=f"{r0}-{c0}-{rr1}-{cc1}",
            col0=c0,
            row0=r0,
            col1=cc1,
            row1=rr1,
            rect_mm=(c0 * cell_mm, r0 * cell_mm, cc1 * cell_mm, rr1 * cell_mm),
            pois=pois_here,
            sparse=n < cfg.h_min,
        )
        leaves.append(leaf)

    recurse(0, 0, size, size)
    leaves.sort(key=lambda leaf: (leaf.row0, leaf.col0))
    return QuadTree(bbox, cfg, cols, rows, leaves), dropped
