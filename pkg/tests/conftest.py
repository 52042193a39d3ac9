"""Shared fixtures: the seed taxonomy and a small hand-laid city grid."""
import pytest

from poisense import seed_taxonomy_path
from poisense.grid import BoundingBox, GridConfig, build_quadtree
from poisense.likelihood import prior
from poisense.osm import Poi
from poisense.taxonomy import load_taxonomy


@pytest.fixture(scope="session")
def graph():
    return load_taxonomy(str(seed_taxonomy_path()))


def pois_at(bb, cx, cy, poi_type, n, start_id=0):
    """n point POIs clustered inside base cell (cx, cy) of a 1 km grid."""
    out = []
    for i in range(n):
        lat, lon = bb.unproject(cx * 1000 + 400 + i * 10, cy * 1000 + 400 + i * 7)
        out.append(Poi(start_id + i, poi_type, lat, lon, "node"))
    return out


def build_table3_city(graph):
    """Four 1 km cells: hostel+trees+bus stop, restaurants, houses, shops.

    The (0, 0) cell reproduces the hostel/trees/bus-stop ranking for a
    morning-of-workday query: hiking > relaxing_at_home > having_breakfast >
    traveling_by_bus, with having_lunch/having_dinner dropped.
    """
    bb = BoundingBox.from_extent(46.0, 11.0, 2000, 2000)
    cfg = GridConfig(base_cell_m=1000, min_agg_pois=10)
    pois = []
    sid = 0

    def add(cx, cy, typ, n):
        nonlocal sid
        pois.extend(pois_at(bb, cx, cy, typ, n, start_id=sid))
        sid += n

    add(0, 0, "v_hostel", 1)
    add(0, 0, "v_tree", 10)
    add(0, 0, "v_bus_stop", 1)
    add(1, 0, "v_restaurant", 6)
    add(1, 0, "v_bus_stop", 2)
    add(0, 1, "v_house", 5)
    add(0, 1, "v_bus_stop", 2)
    add(1, 1, "v_supermarket", 4)
    add(1, 1, "v_cafe", 2)
    tree, dropped = build_quadtree(pois, bb, cfg)
    assert dropped == 0
    return tree, pois


@pytest.fixture(scope="session")
def table3(graph):
    tree, pois = build_table3_city(graph)
    return {"tree": tree, "pois": pois, "prior": prior(tree, graph)}
