"""Command-line pipeline: ingest -> grid -> predict/evaluate/serve/check."""
from __future__ import annotations

import json
import logging
import os
import sys

import click

from . import likelihood, osm
from .evaluation import LandUseZone, load_pos, stratified_report
from .grid import BoundingBox, DegenerateBbox, GridConfig, OutOfBounds, QuadTree, build_quadtree
from .likelihood import Context, p_activity_given_context, prior, top_k
from .taxonomy import TaxonomyError, load_taxonomy

EXIT_INVARIANT = 1
EXIT_USAGE = 2

TABLE_VERSION = "# poisense-table v1"


def _setup_logging() -> None:
    level = os.environ.get("POISENSE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def _parse_bbox(text: str) -> BoundingBox:
    try:
        parts = [float(x) for x in text.split(",")]
        if len(parts) != 4:
            raise ValueError
        return BoundingBox(*parts)
    except (ValueError, DegenerateBbox) as exc:
        raise click.UsageError(f"invalid bbox {text!r}: {exc}")


def _load_graph(path: str):
    if not os.path.exists(path):
        click.echo(f"error: taxonomy file not found: {path}", err=True)
        sys.exit(EXIT_USAGE)
    try:
        return load_taxonomy(path)
    except TaxonomyError as exc:
        click.echo(f"error: invalid taxonomy: {exc}", err=True)
        sys.exit(EXIT_USAGE)


def _load_tree(path: str) -> QuadTree:
    if not os.path.exists(path):
        click.echo(f"error: grid snapshot not found: {path}", err=True)
        sys.exit(EXIT_USAGE)
    return QuadTree.load_snapshot(path)


def resolve_time_class(g, text: str) -> str:
    """Named fuzzy period, or wall-clock HH:MM mapped to the best match."""
    if text in g.time_classes:
        return text
    if ":" in text:
        hh, mm = text.split(":", 1)
        hour = int(hh) + int(mm) / 60.0
        best_val = max(
            g.time_classes[tid].membership.membership(hour) for tid in g.time_classes
        )
        candidates = {
            tid
            for tid in g.time_classes
            if g.time_classes[tid].membership.membership(hour) == best_val
        }
        def ancestors(tid):
            out = set()
            cur = g.time_classes[tid].parent
            while cur is not None:
                out.add(cur)
                cur = g.time_classes[cur].parent
            return out

        # Ancestors (any_time covers every hour) lose to their more specific
        # children; remaining ties resolve lexicographically.
        covered = set().union(*(ancestors(tid) for tid in candidates))
        return sorted(candidates - covered)[0]
    raise click.UsageError(f"unknown time {text!r} (use a class name or HH:MM)")


grid_options = [
    click.option("--cell-size", "base_cell_m", default=50.0, show_default=True),
    click.option("--h-min", default=10, show_default=True),
    click.option("--h-max", default=20, show_default=True),
    click.option("--r0", "r0_m", default=100.0, show_default=True),
    click.option("--dr", "dr_m", default=25.0, show_default=True),
    click.option("--r-max", "r_max_m", default=3000.0, show_default=True),
    click.option("--min-agg-pois", default=50, show_default=True),
]


def _with_grid_options(fn):
    for opt in reversed(grid_options):
        fn = opt(fn)
    return fn


@click.group()
def main() -> None:
    """Infer likely human activities for a place and time from OSM POIs."""
    _setup_logging()


@main.command()
@click.option("--osm", "osm_path", required=True)
@click.option("--taxonomy", "taxonomy_path", required=True)
@click.option("--bbox", required=True, help="min_lat,min_lon,max_lat,max_lon")
@click.option("--out", "out_path", required=True)
def ingest(osm_path, taxonomy_path, bbox, out_path) -> None:
    """Parse an OSM XML extract into the POI store."""
    if not os.path.exists(osm_path):
        click.echo(f"error: OSM file not found: {osm_path}", err=True)
        sys.exit(EXIT_USAGE)
    g = _load_graph(taxonomy_path)
    geo = osm.GeoBounds(*(float(x) for x in bbox.split(",")))
    try:
        elements = osm.parse_osm_xml(osm_path, geo)
        pois, stats = osm.extract_pois(elements, g)
    except osm.MalformedXml as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    osm.write_poi_store(pois, out_path)
    click.echo(json.dumps(stats.as_dict(), sort_keys=True))


@main.command("grid")
@click.option("--store", "store_path", required=True)
@click.option("--taxonomy", "taxonomy_path", required=True)
@click.option("--bbox", required=True)
@click.option("--out-snapshot", required=True)
@click.option("--out-geojson", default=None)
@_with_grid_options
def grid_cmd(store_path, taxonomy_path, bbox, out_snapshot, out_geojson, **cfg_kwargs) -> None:
    """Build the density-based POI distribution grid."""
    if not os.path.exists(store_path):
        click.echo(f"error: POI store not found: {store_path}", err=True)
        sys.exit(EXIT_USAGE)
    _load_graph(taxonomy_path)
    bb = _parse_bbox(bbox)
    try:
        cfg = GridConfig(**cfg_kwargs)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    pois = osm.read_poi_store(store_path)
    try:
        tree, dropped = build_quadtree(pois, bb, cfg)
    except DegenerateBbox as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    tree.save_snapshot(out_snapshot)
    if out_geojson:
        payload = tree.to_geojson()
        payload["version"] = "poisense-geojson v1"
        with open(out_geojson, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
    sparse = sum(1 for leaf in tree.leaves if leaf.sparse)
    click.echo(
        f"grid cell-size={cfg.base_cell_m:g}m h-min={cfg.h_min} h-max={cfg.h_max}"
    )
    click.echo(
        f"leaves={len(tree.leaves)} sparse={sparse} "
        f"pois={sum(l.poi_total for l in tree.leaves)} dropped={dropped}"
    )


@main.command()
@click.option("--snapshot", required=True)
@click.option("--taxonomy", "taxonomy_path", required=True)
@click.option("--lat", type=float)
@click.option("--lon", type=float)
@click.option("--time", "time_text", required=True)
@click.option("--day", required=True)
@click.option("--k", default=8, show_default=True)
@click.option("--level", type=click.Choice(["leaf", "parent"]), default="leaf")
@click.option("--all-cells", is_flag=True, help="score every leaf; write a batch table")
@click.option("--out", "out_path", default=None)
def predict(snapshot, taxonomy_path, lat, lon, time_text, day, k, level, all_cells, out_path) -> None:
    """Rank likely activities for a point (or every cell) and time."""
    g = _load_graph(taxonomy_path)
    tree = _load_tree(snapshot)
    time_id = resolve_time_class(g, time_text)
    if day not in g.day_classes:
        click.echo(f"error: unknown day class {day!r}", err=True)
        sys.exit(EXIT_USAGE)
    pri = prior(tree, g)
    if all_cells:
        rows = []
        for leaf in tree.leaves:
            try:
                dist = p_activity_given_context(Context(leaf.id, time_id, day), tree, g, pri)
            except likelihood.EmptyCandidateSet:
                continue
            for a, p in top_k(dist, k, level, g):
                rows.append((leaf.id, a, p))
        out = out_path or "-"
        lines = [TABLE_VERSION, "location\tactivity\tprobability"]
        lines += [f"{lid}\t{a}\t{p!r}" for lid, a, p in rows]
        if out == "-":
            click.echo("\n".join(lines))
        else:
            with open(out, "w", encoding="utf-8") as fh:
                fh.write("\n".join(lines) + "\n")
        return
    if lat is None or lon is None:
        click.echo("error: --lat/--lon required without --all-cells", err=True)
        sys.exit(EXIT_USAGE)
    try:
        dist = p_activity_given_context(Context((lat, lon), time_id, day), tree, g, pri)
    except OutOfBounds:
        click.echo("error: point outside the grid", err=True)
        sys.exit(EXIT_USAGE)
    except likelihood.EmptyCandidateSet:
        click.echo("error: no candidate activity for this context", err=True)
        sys.exit(EXIT_INVARIANT)
    for a, p in top_k(dist, k, level, g):
        click.echo(f"{a}\t{p!r}")


@main.command()
@click.option("--snapshot", required=True)
@click.option("--taxonomy", "taxonomy_path", required=True)
@click.option("--pos", "pos_path", required=True)
@click.option("--mapping", "mapping_path", required=True)
@click.option("--landuse", "landuse_path", required=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--sample-size", default=100, show_default=True)
@click.option("--out-dir", required=True)
def evaluate(snapshot, taxonomy_path, pos_path, mapping_path, landuse_path, seed, sample_size, out_dir) -> None:
    """Stratified POI-vs-POS comparison report."""
    g = _load_graph(taxonomy_path)
    tree = _load_tree(snapshot)
    for path in (pos_path, mapping_path, landuse_path):
        if not os.path.exists(path):
            click.echo(f"error: input not found: {path}", err=True)
            sys.exit(EXIT_USAGE)
    terminals, excluded = load_pos(pos_path, mapping_path, g)
    with open(landuse_path, encoding="utf-8") as fh:
        landuse = json.load(fh)
    zones = [
        LandUseZone(
            kind=feat["properties"]["kind"],
            polygon=tuple(
                (lat, lon) for lon, lat in feat["geometry"]["coordinates"][0]
            ),
        )
        for feat in landuse["features"]
    ]
    report = stratified_report(tree, g, terminals, zones, sample_size, seed)
    os.makedirs(out_dir, exist_ok=True)
    payload = {"version": "poisense-report v1", "excluded_categories": excluded}
    payload.update(report.as_dict())
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
    with open(os.path.join(out_dir, "error_densities.tsv"), "w", encoding="utf-8") as fh:
        fh.write(TABLE_VERSION + "\nzone\tvariant\terror\n")
        for z in report.zones:
            for name, values in (
                ("local", z.hellinger_local),
                ("poi_norm", z.hellinger_poi_norm),
                ("pos_norm", z.hellinger_pos_norm),
            ):
                for v in values:
                    fh.write(f"{z.kind}\t{name}\t{v!r}\n")
    with open(os.path.join(out_dir, "category_bars.tsv"), "w", encoding="utf-8") as fh:
        fh.write(TABLE_VERSION + "\nzone\tactivity\tmean_pd\n")
        for z in report.zones:
            for a, v in z.category_pd.items():
                fh.write(f"{z.kind}\t{a}\t{v!r}\n")
    plot_script = os.path.join(out_dir, "plot_report.py")
    with open(plot_script, "w", encoding="utf-8") as fh:
        fh.write(_PLOT_SCRIPT)
    for z in report.zones:
        modes = {name: m["kde_mode"] for name, m in z.modes.items()}
        click.echo(f"zone {z.kind}: n={len(z.sampled)} modes={json.dumps(modes, sort_keys=True)}")


@main.command()
@click.option("--snapshot", required=True)
@click.option("--taxonomy", "taxonomy_path", required=True)
@click.option("--feedback-log", required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(snapshot, taxonomy_path, feedback_log, host, port) -> None:
    """Serve the prediction/feedback HTTP API."""
    import uvicorn

    from .service import create_app

    g = _load_graph(taxonomy_path)
    tree = _load_tree(snapshot)
    app = create_app(tree, g, feedback_log)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--snapshot", required=True)
@click.option("--taxonomy", "taxonomy_path", required=True)
def check(snapshot, taxonomy_path) -> None:
    """Validate tiling, normalization and taxonomy integrity."""
    g = _load_graph(taxonomy_path)
    tree = _load_tree(snapshot)
    failures = []
    # Tiling: leaf areas sum to the working extent, no overlaps (exact in mm).
    extent = tree.cols * tree.cell_mm * tree.rows * tree.cell_mm
    area = sum(
        (leaf.rect_mm[2] - leaf.rect_mm[0]) * (leaf.rect_mm[3] - leaf.rect_mm[1])
        for leaf in tree.leaves
    )
    if area != extent:
        failures.append(f"tiling: leaf area {area} != extent {extent}")
    seen_cells: set[tuple[int, int]] = set()
    for leaf in tree.leaves:
        for c in range(leaf.col0, leaf.col1):
            for r in range(leaf.row0, leaf.row1):
                if (c, r) in seen_cells:
                    failures.append(f"tiling: cell {(c, r)} covered twice")
                seen_cells.add((c, r))
    # Normalization: every non-empty leaf distribution sums to 1.
    from .likelihood import doc_frequency, p_activity_given_location

    df = doc_frequency(tree)
    for leaf in tree.leaves:
        dist = p_activity_given_location(leaf, tree, g, df)
        if dist.entries and abs(sum(dist.entries.values()) - 1.0) > 1e-9:
            failures.append(f"normalization: leaf {leaf.id}")
    for msg in failures:
        click.echo(f"FAIL {msg}", err=True)
    if failures:
        sys.exit(EXIT_INVARIANT)
    click.echo("ok")


_PLOT_SCRIPT = '''"""Render the evaluation report tables with matplotlib."""
import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_table(path):
    with open(path) as fh:
        assert fh.readline().startswith("#")
        return list(csv.DictReader(fh, delimiter="\\t"))


def main():
    rows = read_table("error_densities.tsv")
    by_variant = defaultdict(list)
    for row in rows:
        by_variant[row["variant"]].append(float(row["error"]))
    fig, ax = plt.subplots()
    for name, values in sorted(by_variant.items()):
        ax.hist(values, bins=20, alpha=0.5, label=name, density=True)
    ax.set_xlabel("Hellinger error")
    ax.legend()
    fig.savefig("error_densities.png", dpi=150)


if __name__ == "__main__":
    sys.exit(main())
'''


if __name__ == "__main__":
    main()
