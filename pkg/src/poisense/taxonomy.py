"""Taxonomies of POI types, activities and fuzzy times/days.

The graph holds three forests (POI types, activities, time/day classes) plus
two cross relations: activation rules (POI type -> activities that can happen
there) and schedules (activity -> time/day classes it is usually done in).
Hierarchy closure queries replace description-logic reasoning: every query the
engine needs is decidable by walking ancestor/descendant chains.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .fuzzy import MembershipFn, TrapezoidFuzzySet, fuzzy_union

WEEKDAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")

FORMAT_HEADER = "taxonomy v1"


class TaxonomyError(Exception):
    pass


class DanglingReference(TaxonomyError):
    pass


class CycleDetected(TaxonomyError):
    pass


class DuplicateId(TaxonomyError):
    pass


class MissingSchedule(TaxonomyError):
    pass


class UncoveredPoiType(TaxonomyError):
    pass


class UnknownPoiType(TaxonomyError):
    pass


class UnknownActivity(TaxonomyError):
    pass


class UnknownTimeClass(TaxonomyError):
    pass


class UnknownDayClass(TaxonomyError):
    pass


@dataclass(frozen=True)
class PoiType:
    id: str
    parent: Optional[str] = None
    relevant: bool = True


@dataclass(frozen=True)
class ActivityClass:
    id: str
    parent: Optional[str] = None
    depth: int = 0


@dataclass(frozen=True)
class FuzzyTimeClass:
    id: str
    membership: TrapezoidFuzzySet
    parent: Optional[str] = None


@dataclass(frozen=True)
class DayClass:
    id: str
    members: frozenset[str]
    parent: Optional[str] = None


@dataclass(frozen=True)
class ActivationRule:
    poi_type: str
    activities: frozenset[str]


@dataclass(frozen=True)
class Schedule:
    activity: str
    times: frozenset[str]
    days: frozenset[str]


@dataclass(frozen=True)
class TaxonomyGraph:
    poi_types: Mapping[str, PoiType]
    activities: Mapping[str, ActivityClass]
    time_classes: Mapping[str, FuzzyTimeClass]
    day_classes: Mapping[str, DayClass]
    activation_rules: Mapping[str, ActivationRule]
    schedules: Mapping[str, Schedule]

    # ------------------------------------------------------------------
    # hierarchy walks

    def _ancestors(self, table: Mapping[str, object], node_id: str) -> list[str]:
        out = []
        cur = table[node_id].parent
        while cur is not None:
            out.append(cur)
            cur = table[cur].parent
        return out

    def poi_ancestors(self, poi_id: str) -> list[str]:
        return self._ancestors(self.poi_types, poi_id)

    def activity_ancestors(self, act_id: str) -> list[str]:
        return self._ancestors(self.activities, act_id)

    def time_closure(self, time_id: str) -> frozenset[str]:
        """time_id plus its ancestors and descendants."""
        if time_id not in self.time_classes:
            raise UnknownTimeClass(time_id)
        related = {time_id}
        related.update(self._ancestors(self.time_classes, time_id))
        for other in self.time_classes:
            if time_id in self._ancestors(self.time_classes, other):
                related.add(other)
        return frozenset(related)

    def day_closure(self, day_id: str) -> frozenset[str]:
        if day_id not in self.day_classes:
            raise UnknownDayClass(day_id)
        related = {day_id}
        related.update(self._ancestors(self.day_classes, day_id))
        for other in self.day_classes:
            if day_id in self._ancestors(self.day_classes, other):
                related.add(other)
        return frozenset(related)

    # ------------------------------------------------------------------
    # queries

    def activities_for_poi(self, poi_id: str) -> frozenset[str]:
        """Activities enabled by a POI type, inherited along the hierarchy."""
        if poi_id not in self.poi_types:
            raise UnknownPoiType(poi_id)
        if not self.poi_types[poi_id].relevant:
            return frozenset()
        acts: set[str] = set()
        for node in [poi_id, *self.poi_ancestors(poi_id)]:
            rule = self.activation_rules.get(node)
            if rule is not None:
                acts.update(rule.activities)
        return frozenset(acts)

    def effective_schedule(self, act_id: str) -> Schedule:
        """Own schedule, else nearest ancestor's, else all times / all days."""
        if act_id not in self.activities:
            raise UnknownActivity(act_id)
        for node in [act_id, *self.activity_ancestors(act_id)]:
            sched = self.schedules.get(node)
            if sched is not None:
                return Schedule(act_id, sched.times, sched.days)
        return Schedule(
            act_id,
            frozenset(self.time_classes),
            frozenset(self.day_classes),
        )

    def activities_valid_at(self, time_id: str, day_id: str) -> frozenset[str]:
        times = self.time_closure(time_id)
        days = self.day_closure(day_id)
        valid = set()
        for act_id in self.activities:
            sched = self.effective_schedule(act_id)
            if sched.times & times and sched.days & days:
                valid.add(act_id)
        return frozenset(valid)

    def rollup_to_parent(self, act_id: str) -> str:
        if act_id not in self.activities:
            raise UnknownActivity(act_id)
        cur = act_id
        while self.activities[cur].parent is not None:
            cur = self.activities[cur].parent
        return cur

    def activity_membership(self, act_id: str) -> MembershipFn:
        """Hour-of-day membership of an activity: union of its scheduled times."""
        sched = self.effective_schedule(act_id)
        return fuzzy_union(
            self.time_classes[t].membership.membership for t in sorted(sched.times)
        )

    def day_valid(self, act_id: str, day_id: str) -> bool:
        sched = self.effective_schedule(act_id)
        return bool(sched.days & self.day_closure(day_id))

    def top_level_activities(self) -> frozenset[str]:
        return frozenset(a for a, node in self.activities.items() if node.depth == 0)

    # ------------------------------------------------------------------
    # OSM tag encoding support

    def recognized_keys(self) -> frozenset[str]:
        """OSM tag keys appearing in POI type ids (k_<key> or k_<key>_v_...)."""
        keys = set()
        for pid in self.poi_types:
            if pid.startswith("k_"):
                body = pid[2:]
                key = body.split("_v_", 1)[0]
                keys.add(key)
        return frozenset(keys)

    def ambiguous_values(self) -> frozenset[str]:
        """Tag values that need the key prefix to disambiguate."""
        values = set()
        for pid in self.poi_types:
            if pid.startswith("k_") and "_v_" in pid:
                values.add(pid.split("_v_", 1)[1])
        return frozenset(values)

    def counts(self) -> dict[str, int]:
        return {
            "poi_types": len(self.poi_types),
            "activities": len(self.activities),
            "time_classes": len(self.time_classes),
            "day_classes": len(self.day_classes),
            "activation_rules": len(self.activation_rules),
            "schedules": len(self.schedules),
        }


# ----------------------------------------------------------------------
# loading


@dataclass
class _Builder:
    poi_types: dict = field(default_factory=dict)
    activities: dict = field(default_factory=dict)
    time_classes: dict = field(default_factory=dict)
    day_classes: dict = field(default_factory=dict)
    activation_rules: dict = field(default_factory=dict)
    schedules: dict = field(default_factory=dict)


def _parse_attrs(parts: list[str], line_no: int) -> dict[str, str]:
    attrs = {}
    for part in parts:
        if "=" not in part:
            raise TaxonomyError(f"line {line_no}: malformed attribute {part!r}")
        key, value = part.split("=", 1)
        attrs[key] = value
    return attrs


def _check_forest(kind: str, table: Mapping[str, object]) -> None:
    for node_id, node in table.items():
        if node.parent is not None and node.parent not in table:
            raise DanglingReference(f"{kind} {node_id}: unknown parent {node.parent}")
    for node_id in table:
        seen = {node_id}
        cur = table[node_id].parent
        while cur is not None:
            if cur in seen:
                raise CycleDetected(f"{kind} hierarchy cycle through {cur}")
            seen.add(cur)
            cur = table[cur].parent


def _depth(table: Mapping[str, object], node_id: str) -> int:
    depth = 0
    cur = table[node_id].parent
    while cur is not None:
        depth += 1
        cur = table[cur].parent
    return depth


def load_taxonomy(
    source,
    *,
    allow_uncovered: bool = False,
    require_schedules: bool = False,
) -> TaxonomyGraph:
    """Parse and validate a taxonomy file.

    ``source`` is a path or a text file object.  ``allow_uncovered`` downgrades
    relevant POI types without any activation rule from an error to an empty
    activation set.  ``require_schedules`` makes top-level activities without
    an explicit schedule a load error instead of defaulting to all times/days.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()

    b = _Builder()
    header_seen = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not header_seen:
            if line != FORMAT_HEADER:
                raise TaxonomyError(
                    f"line {line_no}: expected header {FORMAT_HEADER!r}, got {line!r}"
                )
            header_seen = True
            continue
        parts = line.split()
        kind, rest = parts[0], parts[1:]
        if kind == "poi":
            pid = rest[0]
            attrs = _parse_attrs(rest[1:], line_no)
            if pid in b.poi_types:
                raise DuplicateId(f"poi {pid}")
            b.poi_types[pid] = PoiType(
                pid,
                parent=attrs.get("parent"),
                relevant=attrs.get("relevant", "yes") == "yes",
            )
        elif kind == "act":
            aid = rest[0]
            attrs = _parse_attrs(rest[1:], line_no)
            if aid in b.activities:
                raise DuplicateId(f"act {aid}")
            b.activities[aid] = ActivityClass(aid, parent=attrs.get("parent"))
        elif kind == "time":
            tid = rest[0]
            attrs = _parse_attrs(rest[1:], line_no)
            if tid in b.time_classes:
                raise DuplicateId(f"time {tid}")
            corners = [float(x) for x in attrs["trap"].split(",")]
            if len(corners) != 4:
                raise TaxonomyError(f"line {line_no}: trap= needs 4 corners")
            b.time_classes[tid] = FuzzyTimeClass(
                tid,
                membership=TrapezoidFuzzySet(
                    *corners, wraps_midnight=attrs.get("wraps", "no") == "yes"
                ),
                parent=attrs.get("parent"),
            )
        elif kind == "day":
            did = rest[0]
            attrs = _parse_attrs(rest[1:], line_no)
            if did in b.day_classes:
                raise DuplicateId(f"day {did}")
            members = frozenset(attrs["members"].split(","))
            unknown = members - set(WEEKDAYS)
            if unknown:
                raise TaxonomyError(f"line {line_no}: unknown weekday {sorted(unknown)}")
            b.day_classes[did] = DayClass(did, members, parent=attrs.get("parent"))
        elif kind == "rule":
            pid = rest[0]
            if pid in b.activation_rules:
                raise DuplicateId(f"rule {pid}")
            acts = frozenset(",".join(rest[1:]).replace(" ", "").split(","))
            if not acts or acts == {""}:
                raise TaxonomyError(f"line {line_no}: rule without activities")
            b.activation_rules[pid] = ActivationRule(pid, acts)
        elif kind == "sched":
            aid = rest[0]
            attrs = _parse_attrs(rest[1:], line_no)
            if aid in b.schedules:
                raise DuplicateId(f"sched {aid}")
            times = frozenset(filter(None, attrs.get("times", "").split(",")))
            days = frozenset(filter(None, attrs.get("days", "").split(",")))
            b.schedules[aid] = Schedule(aid, times, days)
        else:
            raise TaxonomyError(f"line {line_no}: unknown record kind {kind!r}")

    if not header_seen:
        raise TaxonomyError(f"missing header {FORMAT_HEADER!r}")
    return _validate(b, allow_uncovered=allow_uncovered, require_schedules=require_schedules)


def _validate(b: _Builder, *, allow_uncovered: bool, require_schedules: bool) -> TaxonomyGraph:
    _check_forest("poi", b.poi_types)
    _check_forest("act", b.activities)
    _check_forest("time", b.time_classes)
    _check_forest("day", b.day_classes)

    activities = {
        aid: ActivityClass(aid, parent=node.parent, depth=_depth(b.activities, aid))
        for aid, node in b.activities.items()
    }
    for aid, node in activities.items():
        if node.depth > 3:
            raise TaxonomyError(f"activity {aid} deeper than 4 levels")

    for pid, rule in b.activation_rules.items():
        if pid not in b.poi_types:
            raise DanglingReference(f"rule for unknown poi type {pid}")
        for aid in rule.activities:
            if aid not in activities:
                raise DanglingReference(f"rule {pid}: unknown activity {aid}")
    for aid, sched in b.schedules.items():
        if aid not in activities:
            raise DanglingReference(f"sched for unknown activity {aid}")
        for tid in sched.times:
            if tid not in b.time_classes:
                raise DanglingReference(f"sched {aid}: unknown time class {tid}")
        for did in sched.days:
            if did not in b.day_classes:
                raise DanglingReference(f"sched {aid}: unknown day class {did}")

    # Child fuzzy sets must sit inside their parent pointwise.
    for tid, node in b.time_classes.items():
        if node.parent is None:
            continue
        parent = b.time_classes[node.parent]
        for step in range(0, 24 * 4):
            h = step / 4.0
            if node.membership.membership(h) > parent.membership.membership(h) + 1e-12:
                raise TaxonomyError(
                    f"time {tid} membership exceeds parent {node.parent} at hour {h}"
                )
    # Day memberships nest the same way.
    for did, node in b.day_classes.items():
        if node.parent is not None:
            parent = b.day_classes[node.parent]
            if not node.members <= parent.members:
                raise TaxonomyError(f"day {did} members not a subset of {node.parent}")
    leaf_days = set()
    parents = {node.parent for node in b.day_classes.values() if node.parent}
    for did, node in b.day_classes.items():
        if did not in parents:
            leaf_days.update(node.members)
    if b.day_classes and leaf_days != set(WEEKDAYS):
        missing = set(WEEKDAYS) - leaf_days
        raise TaxonomyError(f"weekdays not covered by any leaf day class: {sorted(missing)}")

    graph = TaxonomyGraph(
        poi_types=dict(b.poi_types),
        activities=activities,
        time_classes=dict(b.time_classes),
        day_classes=dict(b.day_classes),
        activation_rules=dict(b.activation_rules),
        schedules=dict(b.schedules),
    )

    if not allow_uncovered:
        for pid, node in graph.poi_types.items():
            if node.relevant and not graph.activities_for_poi(pid):
                raise UncoveredPoiType(
                    f"relevant poi type {pid} has no activation rule (own or inherited)"
                )
    if require_schedules:
        for aid, node in activities.items():
            if node.depth == 0 and aid not in graph.schedules:
                raise MissingSchedule(f"top-level activity {aid} has no schedule")
    return graph


def serialize_taxonomy(g: TaxonomyGraph) -> str:
    """Write the graph back in file format; load(serialize(g)) == g semantically."""
    out = io.StringIO()
    out.write(FORMAT_HEADER + "\n")
    for pid in sorted(g.poi_types):
        node = g.poi_types[pid]
        line = f"poi {pid}"
        if node.parent:
            line += f" parent={node.parent}"
        if not node.relevant:
            line += " relevant=no"
        out.write(line + "\n")
    for aid in sorted(g.activities):
        node = g.activities[aid]
        line = f"act {aid}"
        if node.parent:
            line += f" parent={node.parent}"
        out.write(line + "\n")
    for tid in sorted(g.time_classes):
        node = g.time_classes[tid]
        m = node.membership
        line = f"time {tid} trap={m.a:g},{m.b:g},{m.c:g},{m.d:g}"
        if node.parent:
            line += f" parent={node.parent}"
        if m.wraps_midnight:
            line += " wraps=yes"
        out.write(line + "\n")
    for did in sorted(g.day_classes):
        node = g.day_classes[did]
        line = f"day {did} members={','.join(sorted(node.members))}"
        if node.parent:
            line += f" parent={node.parent}"
        out.write(line + "\n")
    for pid in sorted(g.activation_rules):
        rule = g.activation_rules[pid]
        out.write(f"rule {pid} {','.join(sorted(rule.activities))}\n")
    for aid in sorted(g.schedules):
        sched = g.schedules[aid]
        line = f"sched {aid}"
        if sched.times:
            line += f" times={','.join(sorted(sched.times))}"
        if sched.days:
            line += f" days={','.join(sorted(sched.days))}"
        out.write(line + "\n")
    return out.getvalue()
