"""HTTP facade: prediction queries, grid geometry, feedback capture.

Thin and stateless apart from the append-only feedback log: every response is
a pure function of (grid snapshot, feedback log, request).
"""
from __future__ import annotations

import json
import os
import threading
import time as time_mod
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .evaluation import FeedbackRecord, topk_accuracy
from .grid import BoundingBox, DegenerateBbox, OutOfBounds, QuadTree
from .likelihood import Context, EmptyCandidateSet, p_activity_given_context, prior, top_k
from .taxonomy import TaxonomyGraph

FEEDBACK_VERSION = "poisense-feedback v1"


class FeedbackContext(BaseModel):
    location: str  # grid cell id
    time: str
    day: str


class FeedbackSubmission(BaseModel):
    context: FeedbackContext
    shown: list[str]
    selected: str
    client_timestamp: str


class FeedbackLog:
    """Append-only NDJSON record store; appends are fsynced and serialized."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()

    def append(self, record: dict) -> int:
        with self._lock:
            count = sum(1 for _ in self.read())
            record = dict(record, id=count, version=FEEDBACK_VERSION)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            return count

    def read(self) -> list[dict]:
        if not os.path.exists(self.path):
            return []
        with open(self.path, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]


def _label(activity_id: str) -> str:
    return activity_id.replace("_", " ")


def create_app(tree: QuadTree, g: TaxonomyGraph, feedback_path: str) -> FastAPI:
    app = FastAPI(title="poisense", version="1")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    log = FeedbackLog(feedback_path)
    pri = prior(tree, g)

    def _validate_context(time: str, day: str, level: str) -> None:
        if time not in g.time_classes:
            raise HTTPException(400, detail={"field": "time", "error": f"unknown time class {time!r}"})
        if day not in g.day_classes:
            raise HTTPException(400, detail={"field": "day", "error": f"unknown day class {day!r}"})
        if level not in ("leaf", "parent"):
            raise HTTPException(400, detail={"field": "level", "error": "must be leaf or parent"})

    @app.get("/grid")
    def get_grid(bbox: Optional[str] = None) -> dict:
        full = tree.to_geojson()
        if bbox is None:
            return full
        try:
            parts = [float(x) for x in bbox.split(",")]
            if len(parts) != 4:
                raise ValueError("need min_lat,min_lon,max_lat,max_lon")
            view = BoundingBox(*parts)
        except (ValueError, DegenerateBbox) as exc:
            raise HTTPException(400, detail={"field": "bbox", "error": str(exc)})
        vx0, vy0 = tree.bbox.project(view.min_lat, view.min_lon)
        vx1, vy1 = tree.bbox.project(view.max_lat, view.max_lon)
        features = []
        for leaf, feat in zip(tree.leaves, full["features"]):
            x0, y0, x1, y1 = (v / 1000 for v in leaf.rect_mm)
            if x0 < vx1 and vx0 < x1 and y0 < vy1 and vy0 < y1:
                features.append(feat)
        return {"type": "FeatureCollection", "features": features}

    @app.get("/predict")
    def get_prediction(
        lat: float,
        lon: float,
        time: str,
        day: str,
        k: int = 8,
        level: str = "leaf",
    ) -> dict:
        _validate_context(time, day, level)
        if k < 1:
            raise HTTPException(400, detail={"field": "k", "error": "k must be >= 1"})
        try:
            loc = tree.locate(lat, lon)
        except OutOfBounds:
            raise HTTPException(404, detail="point outside the grid")
        radius, _ = tree.aggregation_radius(loc)
        try:
            dist = p_activity_given_context(Context(loc.id, time, day), tree, g, pri)
            ranked = top_k(dist, k, level, g)
        except EmptyCandidateSet:
            ranked = []
        return {
            "context": {"lat": lat, "lon": lon, "time": time, "day": day, "k": k, "level": level},
            "cell_id": loc.id,
            "radius_m": radius,
            "activities": [
                {"id": a, "label": _label(a), "probability": p} for a, p in ranked
            ],
        }

    @app.post("/feedback", status_code=201)
    def post_feedback(submission: FeedbackSubmission) -> dict:
        if submission.selected not in g.activities:
            raise HTTPException(
                422, detail={"field": "selected", "error": f"unknown activity {submission.selected!r}"}
            )
        record = {
            "context": submission.context.model_dump(),
            "shown": submission.shown,
            "selected": submission.selected,
            "client_timestamp": submission.client_timestamp,
            "received_at": time_mod.strftime("%Y-%m-%dT%H:%M:%SZ", time_mod.gmtime()),
        }
        return {"id": log.append(record)}

    @app.get("/accuracy")
    def get_accuracy(k: int = 8, level: str = "leaf") -> dict:
        if level not in ("leaf", "parent"):
            raise HTTPException(400, detail={"field": "level", "error": "must be leaf or parent"})
        records = []
        for rec in log.read():
            ctx = rec["context"]
            records.append(
                FeedbackRecord(
                    context=Context(ctx["location"], ctx["time"], ctx["day"]),
                    shown=tuple(rec["shown"]),
                    selected=rec["selected"],
                    timestamp=rec["client_timestamp"],
                )
            )
        if not records:
            return {"count": 0, "accuracy": None, "k": k, "level": level}

        def predictor(ctx: Context):
            return p_activity_given_context(ctx, tree, g, pri)

        acc = topk_accuracy(records, k, level, predictor, g)
        return {"count": len(records), "accuracy": acc, "k": k, "level": level}

    static_dir = os.environ.get("POISENSE_STATIC")
    if static_dir and os.path.isdir(static_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="static")

    return app
