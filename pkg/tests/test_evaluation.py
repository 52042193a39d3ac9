import math

import pytest

from poisense.evaluation import (
    EmptyScope,
    FeedbackRecord,
    LandUseZone,
    MalformedRow,
    MissingCityMass,
    PosTerminal,
    UnknownCategory,
    UnnormalizedInput,
    hellinger,
    kde_mode,
    load_pos,
    logistic_fit_location,
    normalize_poi,
    percentage_difference,
    rollup_distribution,
    stratified_report,
    topk_accuracy,
    w_poi_city_average,
    w_pos_city,
    w_pos_local,
)
from poisense.likelihood import ActivityDistribution, Context


def dist(entries, context="x", **kwargs):
    return ActivityDistribution(context, entries, **kwargs)


class TestLoadPos:
    def write_inputs(self, tmp_path, pos_rows, mapping_rows):
        pos = tmp_path / "pos.csv"
        pos.write_text("terminal_id,lat,lon,category\n" + "".join(pos_rows))
        mapping = tmp_path / "mapping.csv"
        mapping.write_text("category,activity\n" + "".join(mapping_rows))
        return pos, mapping

    def test_basic_load(self, tmp_path, graph):
        pos, mapping = self.write_inputs(
            tmp_path,
            ["t1,46.0,11.0,restaurant\n", "t2,46.0,11.0,tobacco\n"],
            ["restaurant,eating\n", "tobacco,-\n"],
        )
        terminals, excluded = load_pos(pos, mapping, graph)
        assert [t.mapped_activity for t in terminals] == ["eating", None]
        assert excluded == ["tobacco"]

    def test_unmapped_category_rejected(self, tmp_path, graph):
        pos, mapping = self.write_inputs(
            tmp_path, ["t1,46.0,11.0,mystery\n"], ["restaurant,eating\n"]
        )
        with pytest.raises(UnknownCategory):
            load_pos(pos, mapping, graph)

    def test_mapping_to_unknown_activity_rejected(self, tmp_path, graph):
        pos, mapping = self.write_inputs(
            tmp_path, ["t1,46.0,11.0,restaurant\n"], ["restaurant,time_travel\n"]
        )
        with pytest.raises(UnknownCategory):
            load_pos(pos, mapping, graph)

    def test_malformed_row(self, tmp_path, graph):
        pos, mapping = self.write_inputs(
            tmp_path, ["t1,not-a-number,11.0,restaurant\n"], ["restaurant,eating\n"]
        )
        with pytest.raises(MalformedRow, match="line 2"):
            load_pos(pos, mapping, graph)


class TestPosDistributions:
    def test_city_frequencies(self):
        terminals = [
            PosTerminal("a", 0, 0, "r", "eating"),
            PosTerminal("b", 0, 0, "r", "eating"),
            PosTerminal("c", 0, 0, "s", "shopping"),
            PosTerminal("d", 0, 0, "x", None),
        ]
        d = w_pos_city(terminals)
        assert d.get("eating") == pytest.approx(2 / 3)
        assert d.get("shopping") == pytest.approx(1 / 3)

    def test_city_requires_mapped_terminals(self):
        with pytest.raises(EmptyScope):
            w_pos_city([PosTerminal("a", 0, 0, "x", None)])

    def test_local_lambda_weighting(self, graph, table3):
        tree = table3["tree"]
        leaf = tree.locate(*tree.bbox.unproject(450, 450))
        _, neighbors = tree.aggregation_radius(leaf)
        lam = dict(neighbors.members)
        lat0, lon0 = tree.bbox.unproject(450, 450)
        terminals = [
            PosTerminal("a", lat0, lon0, "r", "eating"),
            PosTerminal("b", lat0, lon0, "r", "shopping"),
        ]
        d = w_pos_local(neighbors, tree, terminals)
        assert d.get("eating") == pytest.approx(0.5)
        assert lam[leaf.id] == 1.0

    def test_local_out_of_reach_raises(self, graph, table3):
        tree = table3["tree"]
        leaf = tree.locate(*tree.bbox.unproject(450, 450))
        _, neighbors = tree.aggregation_radius(leaf)
        far = tree.bbox.unproject(1900, 1900)
        with pytest.raises(EmptyScope):
            w_pos_local(neighbors, tree, [PosTerminal("a", *far, "r", "eating")])


class TestNormalization:
    def test_bias_removed_exactly(self):
        # POS over-represents eating 2x relative to POI city mass.
        poi_local = dist({"eating": 0.5, "shopping": 0.5})
        poi_city = dist({"eating": 0.5, "shopping": 0.5}, "city")
        pos_city = dist({"eating": 2 / 3, "shopping": 1 / 3}, "city-pos")
        out = normalize_poi(poi_local, poi_city, pos_city)
        assert out.get("eating") == pytest.approx(2 / 3, abs=1e-12)
        assert out.get("shopping") == pytest.approx(1 / 3, abs=1e-12)

    def test_without_renormalize_keeps_raw_scale(self):
        poi_local = dist({"eating": 1.0})
        poi_city = dist({"eating": 0.5, "shopping": 0.5}, "city")
        pos_city = dist({"eating": 0.25, "shopping": 0.75}, "city-pos")
        out = normalize_poi(poi_local, poi_city, pos_city, renormalize=False)
        assert not out.normalized
        assert out.get("eating") == pytest.approx(0.5)

    def test_missing_city_mass(self):
        poi_local = dist({"eating": 1.0})
        poi_city = dist({"shopping": 1.0}, "city")
        pos_city = dist({"eating": 1.0}, "city-pos")
        with pytest.raises(MissingCityMass):
            normalize_poi(poi_local, poi_city, pos_city)


def oracle_hellinger(p, q):
    keys = set(p) | set(q)
    return math.sqrt(
        sum((math.sqrt(p.get(k, 0.0)) - math.sqrt(q.get(k, 0.0))) ** 2 for k in keys)
    ) / math.sqrt(2)


class TestHellinger:
    def test_identical_is_zero(self):
        d = dist({"a": 0.4, "b": 0.6})
        assert hellinger(d, d) == 0.0

    def test_disjoint_is_one(self):
        assert hellinger(dist({"a": 1.0}), dist({"b": 1.0})) == pytest.approx(1.0)

    def test_matches_oracle(self):
        p = dist({"a": 0.2, "b": 0.3, "c": 0.5})
        q = dist({"a": 0.5, "b": 0.5})
        assert hellinger(p, q) == pytest.approx(
            oracle_hellinger(p.entries, q.entries), abs=1e-12
        )

    def test_symmetry(self):
        p = dist({"a": 0.7, "b": 0.3})
        q = dist({"a": 0.1, "b": 0.9})
        assert hellinger(p, q) == hellinger(q, p)

    def test_rejects_unnormalized(self):
        bad = dist({"a": 0.5}, normalized=False)
        with pytest.raises(UnnormalizedInput):
            hellinger(bad, dist({"a": 1.0}))


class TestPercentageDifference:
    def test_values(self):
        assert percentage_difference(1.0, 3.0) == pytest.approx(0.5)
        assert percentage_difference(2.0, 2.0) == 0.0
        assert percentage_difference(0.0, 0.0) == 0.0
        assert percentage_difference(0.0, 5.0) == 1.0

    def test_symmetric_and_bounded(self):
        for a, b in [(0.1, 0.9), (3.0, 0.2), (5.0, 5.0)]:
            assert percentage_difference(a, b) == percentage_difference(b, a)
            assert 0.0 <= percentage_difference(a, b) <= 1.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            percentage_difference(-1.0, 1.0)


class TestTopkAccuracy:
    def make_predictor(self, ranking):
        fixed = ActivityDistribution("fixed", ranking)
        return lambda ctx: fixed

    def record(self, selected):
        return FeedbackRecord(Context("c", "morning", "workday"), (), selected, "t")

    def test_hit_and_miss(self, graph):
        predictor = self.make_predictor({"hiking": 0.6, "having_breakfast": 0.4})
        feedback = [self.record("hiking"), self.record("shopping")]
        assert topk_accuracy(feedback, 2, "leaf", predictor, graph) == 0.5
        assert topk_accuracy(feedback, 1, "leaf", predictor, graph) == 0.5

    def test_parent_level_rolls_up_leaf_topk(self, graph):
        predictor = self.make_predictor({"having_breakfast": 0.9, "hiking": 0.1})
        # Selection is a sibling leaf: wrong at leaf level, right at parent.
        feedback = [self.record("having_lunch")]
        assert topk_accuracy(feedback, 1, "leaf", predictor, graph) == 0.0
        assert topk_accuracy(feedback, 1, "parent", predictor, graph) == 1.0

    def test_monotone_in_k(self, graph):
        predictor = self.make_predictor(
            {"hiking": 0.5, "having_breakfast": 0.3, "shopping": 0.2}
        )
        feedback = [self.record(a) for a in ("hiking", "shopping", "sleeping")]
        accs = [topk_accuracy(feedback, k, "leaf", predictor, graph) for k in (1, 2, 3)]
        assert accs == sorted(accs)

    def test_empty_feedback_rejected(self, graph):
        with pytest.raises(ValueError):
            topk_accuracy([], 1, "leaf", lambda ctx: None, graph)


class TestModes:
    def test_kde_mode_finds_cluster(self):
        values = [0.1, 0.12, 0.11, 0.13, 0.12, 0.8]
        assert abs(kde_mode(values) - 0.12) < 0.05

    def test_kde_mode_degenerate(self):
        assert kde_mode([0.4, 0.4, 0.4]) == 0.4
        assert math.isnan(kde_mode([]))

    def test_logistic_location_near_center(self):
        values = [0.3, 0.4, 0.5, 0.6, 0.7]
        assert abs(logistic_fit_location(values) - 0.5) < 0.05


class TestRollup:
    def test_rollup_sums_children(self, graph):
        d = dist({"having_breakfast": 0.25, "having_lunch": 0.25, "hiking": 0.5})
        rolled = rollup_distribution(d, graph)
        assert rolled.get("eating") == pytest.approx(0.5)
        assert rolled.get("outdoor_activity") == pytest.approx(0.5)

    def test_city_average_is_normalized(self, graph, table3):
        d = w_poi_city_average(table3["tree"], graph)
        assert sum(d.entries.values()) == pytest.approx(1.0, abs=1e-9)


class TestStratifiedReport:
    def zone_for(self, tree, kind="commercial"):
        bb = tree.bbox
        return LandUseZone(
            kind,
            (
                (bb.min_lat, bb.min_lon),
                (bb.min_lat, bb.max_lon),
                (bb.max_lat, bb.max_lon),
                (bb.max_lat, bb.min_lon),
            ),
        )

    def terminals_for(self, tree):
        out = []
        for i, leaf in enumerate(tree.leaves):
            lat, lon = tree.bbox.unproject(*leaf.centroid_m)
            out.append(PosTerminal(f"t{i}a", lat, lon, "r", "eating"))
            out.append(PosTerminal(f"t{i}b", lat, lon, "s", "grocery_shopping"))
        return out

    def test_deterministic_given_seed(self, graph, table3):
        tree = table3["tree"]
        zones = [self.zone_for(tree)]
        terminals = self.terminals_for(tree)
        r1 = stratified_report(tree, graph, terminals, zones, 3, seed=42)
        r2 = stratified_report(tree, graph, terminals, zones, 3, seed=42)
        assert r1.as_dict() == r2.as_dict()

    def test_errors_in_unit_range(self, graph, table3):
        tree = table3["tree"]
        report = stratified_report(
            tree, graph, self.terminals_for(tree), [self.zone_for(tree)], 10, seed=0
        )
        zone = report.zones[0]
        assert zone.sampled
        for values in (zone.hellinger_local, zone.hellinger_poi_norm, zone.hellinger_pos_norm):
            assert len(values) == len(zone.sampled)
            assert all(0.0 <= v <= 1.0 for v in values)
        assert all(0.0 <= v <= 1.0 for v in zone.category_pd.values())

    def test_empty_zone_reported(self, graph, table3):
        tree = table3["tree"]
        far = LandUseZone("railway", ((10.0, 50.0), (10.0, 50.1), (10.1, 50.1), (10.1, 50.0)))
        report = stratified_report(tree, graph, self.terminals_for(tree), [far], 5, seed=0)
        assert report.zones[0].sampled == []

    def test_invalid_zone_kind(self):
        with pytest.raises(ValueError):
            LandUseZone("swamp", ((0.0, 0.0), (0.0, 1.0), (1.0, 1.0)))
