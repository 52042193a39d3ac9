"""Stochastic ranking of activities for a spatial/temporal context.

POI types are weighted per location by TF-IDF against all grid locations,
weights propagate to activities (split equally when one POI type activates
several), fuzzy time sets supply the temporal term, and the combined score is
location-term * time-term / prior, renormalized over the surviving candidates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .fuzzy import fuzzy_area, hourly_area  # re-exported  # noqa: F401
from .grid import Location, NeighborSet, QuadTree
from .taxonomy import TaxonomyGraph


class EmptyCandidateSet(Exception):
    pass


class DegenerateTimeClass(Exception):
    pass


class NoOverlap(Exception):
    pass


@dataclass(frozen=True)
class ActivityDistribution:
    context: str
    entries: Mapping[str, float]
    normalized: bool = True
    empty: bool = False

    def __post_init__(self) -> None:
        if any(v < 0 for v in self.entries.values()):
            raise ValueError("negative weight in distribution")
        if self.normalized and self.entries:
            total = sum(self.entries.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"normalized distribution sums to {total}")

    def get(self, key: str) -> float:
        return self.entries.get(key, 0.0)


@dataclass(frozen=True)
class Context:
    location: object  # location id, (lat, lon) point, or polygon vertex list
    time: str
    day: str


def _normalize(entries: Mapping[str, float], context: str) -> ActivityDistribution:
    # Summation in sorted key order: activity sets iterate in hash order,
    # which changes between interpreter runs; sorting keeps results bit-stable.
    keys = sorted(entries)
    total = sum(entries[k] for k in keys)
    if total <= 0:
        return ActivityDistribution(context, {}, normalized=False, empty=True)
    return ActivityDistribution(
        context, {k: entries[k] / total for k in keys if entries[k] > 0}
    )


# ----------------------------------------------------------------------
# TF-IDF location weighting


def doc_frequency(tree: QuadTree) -> dict[str, int]:
    """Number of locations containing each POI type."""
    df: dict[str, int] = {}
    for leaf in tree.leaves:
        for f in leaf.pois:
            df[f] = df.get(f, 0) + 1
    return df


def tf_idf(
    f: str, loc: Location, tree: QuadTree, df: Optional[Mapping[str, int]] = None
) -> float:
    n = loc.pois.get(f, 0)
    if n == 0:
        return 0.0
    if df is None:
        df = doc_frequency(tree)
    appearances = df.get(f, 0)
    if appearances == 0:
        return 0.0
    max_count = max(loc.pois.values())
    return n / max_count * math.log(len(tree.leaves) / appearances)


def activity_weight(
    a: str,
    loc: Location,
    tree: QuadTree,
    g: TaxonomyGraph,
    df: Optional[Mapping[str, int]] = None,
) -> float:
    if df is None:
        df = doc_frequency(tree)
    total = 0.0
    for f in sorted(loc.pois):
        acts = g.activities_for_poi(f)
        if a in acts:
            total += tf_idf(f, loc, tree, df) / len(acts)
    return total


def location_weights(
    loc: Location,
    tree: QuadTree,
    g: TaxonomyGraph,
    df: Optional[Mapping[str, int]] = None,
) -> dict[str, float]:
    """W(a, l) for every activity with mass in the location."""
    if df is None:
        df = doc_frequency(tree)
    weights: dict[str, float] = {}
    # Sorted iteration keeps the floating-point accumulation order identical
    # between a freshly built tree and one reloaded from a snapshot.
    for f in sorted(loc.pois):
        acts = g.activities_for_poi(f)
        if not acts:
            continue
        w = tf_idf(f, loc, tree, df)
        if w == 0.0:
            continue
        share = w / len(acts)
        for a in acts:
            weights[a] = weights.get(a, 0.0) + share
    return weights


def p_activity_given_location(
    loc: Location,
    tree: QuadTree,
    g: TaxonomyGraph,
    df: Optional[Mapping[str, int]] = None,
) -> ActivityDistribution:
    return _normalize(location_weights(loc, tree, g, df), context=loc.id)


def p_activity_given_location_radius(
    neighbors: NeighborSet,
    tree: QuadTree,
    g: TaxonomyGraph,
    df: Optional[Mapping[str, int]] = None,
) -> ActivityDistribution:
    """Radius-aggregated location term: lambda-weighted weights over neighbors."""
    if df is None:
        df = doc_frequency(tree)
    total: dict[str, float] = {}
    for loc_id, lam in neighbors.members:
        if lam <= 0:
            continue
        for a, w in location_weights(tree.leaf(loc_id), tree, g, df).items():
            total[a] = total.get(a, 0.0) + w * lam
    return _normalize(total, context=f"{neighbors.center}@r={neighbors.radius_m:g}")


# ----------------------------------------------------------------------
# temporal term


def p_activity_given_time(a: str, time_id: str, day_id: str, g: TaxonomyGraph) -> float:
    sched = g.effective_schedule(a)
    if not (sched.times & g.time_closure(time_id)):
        return 0.0
    if not (sched.days & g.day_closure(day_id)):
        return 0.0
    ft = g.time_classes[time_id].membership.membership
    denom = hourly_area(ft)
    if denom <= 0:
        raise DegenerateTimeClass(time_id)
    fa = g.activity_membership(a)
    num = hourly_area(lambda h: min(fa(h), ft(h)))
    return min(max(num / denom, 0.0), 1.0)


# ----------------------------------------------------------------------
# prior and combination


def prior(tree: QuadTree, g: TaxonomyGraph) -> dict[str, float]:
    """Uniform-average marginal of activity probability over all contexts.

    P(a|l) and P(a|t,d) are conditionally independent given a, so the double
    sum over (location, slot) pairs factors into a product of marginals.
    """
    df = doc_frequency(tree)
    loc_marginal: dict[str, float] = {a: 0.0 for a in g.activities}
    for leaf in tree.leaves:
        dist = p_activity_given_location(leaf, tree, g, df)
        for a, p in dist.entries.items():
            loc_marginal[a] += p
    time_marginal: dict[str, float] = {a: 0.0 for a in g.activities}
    for t in g.time_classes:
        for d in g.day_classes:
            for a in g.activities:
                time_marginal[a] += p_activity_given_time(a, t, d, g)
    combined = {a: loc_marginal[a] * time_marginal[a] for a in g.activities}
    total = sum(combined.values())
    if total <= 0:
        raise ValueError("prior undefined: no activity has mass anywhere")
    return {a: v / total for a, v in combined.items()}


def _combine(
    location_term: ActivityDistribution,
    time_id: str,
    day_id: str,
    g: TaxonomyGraph,
    pri: Mapping[str, float],
    context: str,
) -> ActivityDistribution:
    scores: dict[str, float] = {}
    for a, p_loc in location_term.entries.items():
        if p_loc <= 0:
            continue
        p_time = p_activity_given_time(a, time_id, day_id, g)
        if p_time <= 0:
            continue  # invalid or zero-overlap activities drop out entirely
        p_a = pri.get(a, 0.0)
        if p_a <= 0:
            continue
        scores[a] = p_loc * p_time / p_a
    if not scores:
        raise EmptyCandidateSet(context)
    return _normalize(scores, context)


def p_activity_given_context(
    ctx: Context,
    tree: QuadTree,
    g: TaxonomyGraph,
    pri: Mapping[str, float],
) -> ActivityDistribution:
    if isinstance(ctx.location, str):
        loc = tree.leaf(ctx.location)
    else:
        lat, lon = ctx.location
        loc = tree.locate(lat, lon)
    _, neighbors = tree.aggregation_radius(loc)
    location_term = p_activity_given_location_radius(neighbors, tree, g)
    label = f"{loc.id}|{ctx.time}|{ctx.day}"
    return _combine(location_term, ctx.time, ctx.day, g, pri, label)


def top_k(
    dist: ActivityDistribution,
    k: int,
    level: str = "leaf",
    g: Optional[TaxonomyGraph] = None,
) -> list[tuple[str, float]]:
    """Ordered (activity, probability) prefix; parent level sums children first."""
    entries = dict(dist.entries)
    if level == "parent":
        if g is None:
            raise ValueError("parent-level ranking needs the taxonomy")
        rolled: dict[str, float] = {}
        for a, p in entries.items():
            top = g.rollup_to_parent(a)
            rolled[top] = rolled.get(top, 0.0) + p
        entries = rolled
    elif level != "leaf":
        raise ValueError(f"unknown level {level!r}")
    ranked = sorted(entries.items(), key=lambda item: (-item[1], item[0]))
    return ranked[: max(k, 0)]


def score_region(
    polygon: Sequence[tuple[float, float]],
    time_id: str,
    day_id: str,
    tree: QuadTree,
    g: TaxonomyGraph,
    pri: Mapping[str, float],
) -> ActivityDistribution:
    """Activity distribution for an arbitrary polygon (lat/lon vertices).

    Leaf weights are pooled in proportion to the fraction of each leaf covered
    by the polygon, then combined with the temporal term and prior as for a
    single-location context.
    """
    from shapely.geometry import Polygon, box

    pts = [tree.bbox.project(lat, lon) for lat, lon in polygon]
    poly = Polygon(pts)
    if not poly.is_valid:
        poly = poly.buffer(0)
    df = doc_frequency(tree)
    pooled: dict[str, float] = {}
    any_overlap = False
    for leaf in tree.leaves:
        x0, y0, x1, y1 = (v / 1000 for v in leaf.rect_mm)
        rect = box(x0, y0, x1, y1)
        overlap = poly.intersection(rect).area
        if overlap <= 0:
            continue
        any_overlap = True
        frac = overlap / rect.area
        for a, w in location_weights(leaf, tree, g, df).items():
            pooled[a] = pooled.get(a, 0.0) + frac * w
    if not any_overlap:
        raise NoOverlap("polygon does not intersect the grid")
    location_term = _normalize(pooled, context="region")
    return _combine(location_term, time_id, day_id, g, pri, f"region|{time_id}|{day_id}")
