"""Validation of predicted activity distributions against ground truth.

Three methodologies: top-k accuracy against user feedback, point-of-sale
category comparison, and city-normalized Hellinger-distance analysis
stratified by land-use zone.
"""
from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .grid import NeighborSet, OutOfBounds, QuadTree
from .likelihood import (
    ActivityDistribution,
    Context,
    p_activity_given_location_radius,
    top_k,
)
from .taxonomy import TaxonomyGraph


class UnknownCategory(Exception):
    pass


class MalformedRow(Exception):
    pass


class EmptyScope(Exception):
    pass


class MissingCityMass(Exception):
    pass


class UnnormalizedInput(Exception):
    pass


@dataclass(frozen=True)
class PosTerminal:
    id: str
    lat: float
    lon: float
    business_category: str
    mapped_activity: Optional[str]  # None = category explicitly excluded


@dataclass(frozen=True)
class FeedbackRecord:
    context: Context
    shown: tuple[str, ...]
    selected: str
    timestamp: str


@dataclass(frozen=True)
class LandUseZone:
    kind: str  # industrial|recreational|commercial|railway|retail|residential|dense
    polygon: tuple[tuple[float, float], ...]  # lat/lon ring

    VALID_KINDS = frozenset(
        ["industrial", "recreational", "commercial", "railway", "retail", "residential", "dense"]
    )

    def __post_init__(self) -> None:
        if self.kind not in self.VALID_KINDS:
            raise ValueError(f"unknown land-use kind {self.kind!r}")


@dataclass
class ZoneReport:
    kind: str
    sampled: list[str]
    radii: list[float]
    excluded_outliers: int
    skipped_empty: int
    hellinger_local: list[float]
    hellinger_poi_norm: list[float]
    hellinger_pos_norm: list[float]
    category_pd: dict[str, float]
    modes: dict[str, dict[str, float]] = field(default_factory=dict)


@dataclass
class ComparisonReport:
    seed: int
    zones: list[ZoneReport]

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "zones": [
                {
                    "kind": z.kind,
                    "sampled": z.sampled,
                    "radii": z.radii,
                    "excluded_outliers": z.excluded_outliers,
                    "skipped_empty": z.skipped_empty,
                    "hellinger_local": z.hellinger_local,
                    "hellinger_poi_norm": z.hellinger_poi_norm,
                    "hellinger_pos_norm": z.hellinger_pos_norm,
                    "category_pd": z.category_pd,
                    "modes": z.modes,
                }
                for z in self.zones
            ],
        }


# ----------------------------------------------------------------------
# POS ingestion


def load_pos(pos_file, mapping_file, g: TaxonomyGraph) -> tuple[list[PosTerminal], list[str]]:
    """Read POS terminals and their category-to-activity mapping.

    The mapping covers every category or marks it excluded with "-"; any
    category outside the mapping is an error.  Returns the terminals plus the
    list of excluded categories actually seen.
    """
    mapping: dict[str, Optional[str]] = {}
    with open(mapping_file, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            activity = row["activity"].strip()
            mapping[row["category"].strip()] = None if activity == "-" else activity
    for activity in mapping.values():
        if activity is not None and activity not in g.activities:
            raise UnknownCategory(f"mapping targets unknown activity {activity}")

    terminals: list[PosTerminal] = []
    excluded_seen: set[str] = set()
    with open(pos_file, newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.DictReader(fh), start=2):
            try:
                terminal = PosTerminal(
                    id=row["terminal_id"].strip(),
                    lat=float(row["lat"]),
                    lon=float(row["lon"]),
                    business_category=row["category"].strip(),
                    mapped_activity=None,
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedRow(f"line {line_no}: {exc}") from exc
            if terminal.business_category not in mapping:
                raise UnknownCategory(terminal.business_category)
            activity = mapping[terminal.business_category]
            if activity is None:
                excluded_seen.add(terminal.business_category)
            terminals.append(
                PosTerminal(
                    terminal.id, terminal.lat, terminal.lon,
                    terminal.business_category, activity,
                )
            )
    return terminals, sorted(excluded_seen)


def w_pos_city(terminals: Iterable[PosTerminal]) -> ActivityDistribution:
    """City-wide relative frequency of mapped POS activities."""
    counts: dict[str, float] = {}
    for t in terminals:
        if t.mapped_activity is not None:
            counts[t.mapped_activity] = counts.get(t.mapped_activity, 0.0) + 1.0
    if not counts:
        raise EmptyScope("no mapped terminals")
    total = sum(counts.values())
    return ActivityDistribution("city", {a: c / total for a, c in counts.items()})


def w_pos_local(
    neighbors: NeighborSet, tree: QuadTree, terminals: Sequence[PosTerminal]
) -> ActivityDistribution:
    """Lambda-weighted POS activity frequencies around one location."""
    lam_by_leaf = dict(neighbors.members)
    counts: dict[str, float] = {}
    for t in terminals:
        if t.mapped_activity is None:
            continue
        try:
            leaf = tree.locate(t.lat, t.lon)
        except OutOfBounds:
            continue
        lam = lam_by_leaf.get(leaf.id, 0.0)
        if lam > 0:
            counts[t.mapped_activity] = counts.get(t.mapped_activity, 0.0) + lam
    total = sum(counts.values())
    if total <= 0:
        raise EmptyScope(neighbors.center)
    return ActivityDistribution(
        f"pos@{neighbors.center}", {a: c / total for a, c in counts.items()}
    )


# ----------------------------------------------------------------------
# normalization and distances


def normalize_poi(
    w_poi_l: ActivityDistribution,
    w_poi_city: ActivityDistribution,
    w_pos_city_dist: ActivityDistribution,
    *,
    renormalize: bool = True,
) -> ActivityDistribution:
    """Rescale a local POI distribution by the city POS/POI ratio per activity."""
    rescaled: dict[str, float] = {}
    for a, w in w_poi_l.entries.items():
        if w <= 0:
            continue
        city_poi = w_poi_city.get(a)
        if city_poi <= 0:
            raise MissingCityMass(a)
        rescaled[a] = w * w_pos_city_dist.get(a) / city_poi
    if not renormalize:
        return ActivityDistribution(w_poi_l.context + "|poiNorm", rescaled, normalized=False)
    total = sum(rescaled.values())
    if total <= 0:
        return ActivityDistribution(w_poi_l.context + "|poiNorm", {}, normalized=False, empty=True)
    return ActivityDistribution(
        w_poi_l.context + "|poiNorm", {a: v / total for a, v in rescaled.items()}
    )


def hellinger(p: ActivityDistribution, q: ActivityDistribution) -> float:
    for dist in (p, q):
        if not dist.normalized or abs(sum(dist.entries.values()) - 1.0) > 1e-9:
            raise UnnormalizedInput(dist.context)
    keys = set(p.entries) | set(q.entries)
    acc = sum((math.sqrt(p.get(k)) - math.sqrt(q.get(k))) ** 2 for k in keys)
    return min(math.sqrt(acc) / math.sqrt(2.0), 1.0)


def percentage_difference(a_val: float, b_val: float) -> float:
    if a_val < 0 or b_val < 0:
        raise ValueError("percentage difference needs nonnegative inputs")
    if a_val + b_val == 0:
        return 0.0
    return abs(a_val - b_val) / (a_val + b_val)


def percentage_difference_of_mean(a_val: float, b_val: float) -> float:
    """Prose variant: difference divided by the average of the two values."""
    return min(2.0 * percentage_difference(a_val, b_val), 1.0) if (a_val + b_val) else 0.0


# ----------------------------------------------------------------------
# top-k accuracy


Predictor = Callable[[Context], ActivityDistribution]


def topk_accuracy(
    feedback: Sequence[FeedbackRecord],
    k: int,
    level: str,
    predictor: Predictor,
    g: TaxonomyGraph,
) -> float:
    """Fraction of records whose selection lands in the recomputed top-k.

    At parent level the leaf top-k list is rolled up before matching, so a
    correct leaf-level selection can only stay correct (roll-up merges, never
    splits, the prediction set).
    """
    if not feedback:
        raise ValueError("no feedback records")
    hits = 0
    for record in feedback:
        dist = predictor(record.context)
        ranked = [a for a, _ in top_k(dist, k, level="leaf")]
        if level == "parent":
            predicted = {g.rollup_to_parent(a) for a in ranked}
            target = g.rollup_to_parent(record.selected)
        else:
            predicted = set(ranked)
            target = record.selected
        if target in predicted:
            hits += 1
    return hits / len(feedback)


# ----------------------------------------------------------------------
# density modes


def kde_mode(values: Sequence[float]) -> float:
    """Mode of a kernel density estimate (Gaussian, Silverman bandwidth)."""
    from scipy.stats import gaussian_kde

    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan")
    if arr.size == 1 or np.ptp(arr) < 1e-12:
        return float(arr[0])
    kde = gaussian_kde(arr, bw_method="silverman")
    xs = np.linspace(0.0, 1.0, 512)
    return float(xs[int(np.argmax(kde(xs)))])


def logistic_fit_location(values: Sequence[float]) -> float:
    from scipy.stats import logistic

    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan")
    loc, _ = logistic.fit(arr)
    return float(loc)


# ----------------------------------------------------------------------
# stratified report


def rollup_distribution(dist: ActivityDistribution, g: TaxonomyGraph) -> ActivityDistribution:
    rolled: dict[str, float] = {}
    for a, p in dist.entries.items():
        top = g.rollup_to_parent(a)
        rolled[top] = rolled.get(top, 0.0) + p
    return ActivityDistribution(dist.context + "|parent", rolled, normalized=dist.normalized)


def w_poi_city_average(
    tree: QuadTree, g: TaxonomyGraph, *, parent_level: bool = True
) -> ActivityDistribution:
    """Uniform average of per-leaf POI activity distributions."""
    from .likelihood import doc_frequency, p_activity_given_location

    df = doc_frequency(tree)
    acc: dict[str, float] = {}
    n = 0
    for leaf in tree.leaves:
        dist = p_activity_given_location(leaf, tree, g, df)
        if dist.empty:
            continue
        if parent_level:
            dist = rollup_distribution(dist, g)
        n += 1
        for a, p in dist.entries.items():
            acc[a] = acc.get(a, 0.0) + p
    if n == 0:
        raise EmptyScope("no leaf has POI mass")
    return ActivityDistribution("city|poi", {a: v / n for a, v in acc.items()})


def stratified_report(
    tree: QuadTree,
    g: TaxonomyGraph,
    terminals: Sequence[PosTerminal],
    zones: Sequence[LandUseZone],
    sample_size: int,
    seed: int,
    radius_outlier_m: float = 1000.0,
) -> ComparisonReport:
    """Per-zone sampled comparison of POI-predicted and POS-observed activity.

    Sampling is seeded for bit-exact reproducibility; locations whose
    aggregation radius exceeds the outlier threshold are excluded and counted.
    """
    from shapely.geometry import Point, Polygon

    from .likelihood import doc_frequency

    df = doc_frequency(tree)
    pos_city = rollup_distribution(w_pos_city(terminals), g)
    poi_city = w_poi_city_average(tree, g)
    rng = random.Random(seed)

    reports: list[ZoneReport] = []
    for zone in zones:
        poly = Polygon([tree.bbox.project(lat, lon) for lat, lon in zone.polygon])
        in_zone = [
            leaf
            for leaf in tree.leaves
            if poly.contains(Point(*leaf.centroid_m))
        ]
        if not in_zone:
            reports.append(
                ZoneReport(zone.kind, [], [], 0, 0, [], [], [], {}, {})
            )
            continue
        chosen = (
            rng.sample(in_zone, sample_size) if len(in_zone) > sample_size else list(in_zone)
        )
        chosen.sort(key=lambda leaf: leaf.id)
        report = ZoneReport(zone.kind, [], [], 0, 0, [], [], [], {}, {})
        pd_acc: dict[str, list[float]] = {}
        for leaf in chosen:
            radius, neighbors = tree.aggregation_radius(leaf)
            if radius > radius_outlier_m:
                report.excluded_outliers += 1
                continue
            poi_local = p_activity_given_location_radius(neighbors, tree, g, df)
            if poi_local.empty:
                report.skipped_empty += 1
                continue
            try:
                pos_local = w_pos_local(neighbors, tree, terminals)
            except EmptyScope:
                report.skipped_empty += 1
                continue
            poi_local = rollup_distribution(poi_local, g)
            pos_local = rollup_distribution(pos_local, g)
            try:
                poi_norm = normalize_poi(poi_local, poi_city, pos_city)
                pos_norm = normalize_poi(pos_local, pos_city, poi_city)
            except MissingCityMass:
                report.skipped_empty += 1
                continue
            if poi_norm.empty or pos_norm.empty:
                report.skipped_empty += 1
                continue
            report.sampled.append(leaf.id)
            report.radii.append(radius)
            report.hellinger_local.append(hellinger(poi_local, pos_local))
            report.hellinger_poi_norm.append(hellinger(poi_norm, pos_local))
            report.hellinger_pos_norm.append(hellinger(poi_local, pos_norm))
            for a in set(poi_norm.entries) | set(pos_local.entries):
                pd_acc.setdefault(a, []).append(
                    percentage_difference(poi_norm.get(a), pos_local.get(a))
                )
        report.category_pd = {
            a: sum(vals) / len(vals) for a, vals in sorted(pd_acc.items())
        }
        for name, values in (
            ("local", report.hellinger_local),
            ("poi_norm", report.hellinger_poi_norm),
            ("pos_norm", report.hellinger_pos_norm),
        ):
            report.modes[name] = {
                "kde_mode": kde_mode(values),
                "logistic_loc": logistic_fit_location(values),
            }
        reports.append(report)
    return ComparisonReport(seed=seed, zones=reports)
