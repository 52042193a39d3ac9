// End-to-end loop against a running service. Skipped unless POISENSE_URL is
// set, e.g.:
//   poisense serve --snapshot grid.snap --taxonomy ... --port 8000 &
//   POISENSE_URL=http://127.0.0.1:8000 npm test
import { describe, expect, it } from "vitest";

import { ServiceClient, probabilityTokens } from "../src/api.js";
import { cellCenter, initialState, selectCell, setGrid } from "../src/state.js";

const BASE = process.env.POISENSE_URL;

describe.skipIf(!BASE)("live service loop", () => {
  const client = new ServiceClient(BASE ?? "");

  it("grid, prediction, feedback and accuracy round-trip", async () => {
    const grid = await client.grid();
    expect(grid.features.length).toBeGreaterThan(0);

    // pick the densest cell, mirroring a user clicking the darkest polygon
    const densest = [...grid.features].sort(
      (a, b) => b.properties.poi_total - a.properties.poi_total
    )[0]!;
    let state = setGrid(initialState(), grid);
    state = selectCell(state, densest.properties.id);
    const { lat, lon } = cellCenter(state, densest.properties.id);

    const before = await client.accuracy(1, "leaf");
    const prediction = await client.predict(lat, lon, "morning", "workday", 8, "leaf");
    expect(prediction.activities.length).toBeGreaterThan(0);

    const top = prediction.activities[0]!;
    const id = await client.submitFeedback({
      context: { location: prediction.cellId, time: "morning", day: "workday" },
      shown: prediction.activities.map((a) => a.id),
      selected: top.id,
      client_timestamp: new Date().toISOString(),
    });
    expect(id).toBeGreaterThanOrEqual(0);

    const after = await client.accuracy(1, "leaf");
    expect(after.count).toBe(before.count + 1);
    // the new record selected the rank-1 activity, so the k=1 hit count grows
    const hitsBefore = (before.accuracy ?? 0) * before.count;
    expect((after.accuracy ?? 0) * after.count).toBeCloseTo(hitsBefore + 1, 9);
  }, 10_000);

  it("displayed probabilities are byte-equal to the payload", async () => {
    const grid = await client.grid();
    const densest = [...grid.features].sort(
      (a, b) => b.properties.poi_total - a.properties.poi_total
    )[0]!;
    const state = setGrid(initialState(), grid);
    const { lat, lon } = cellCenter(state, densest.properties.id);
    const url =
      `${BASE}/predict?lat=${lat}&lon=${lon}` + `&time=morning&day=workday&k=8&level=leaf`;
    const raw = await (await fetch(url)).text();
    const prediction = await client.predict(lat, lon, "morning", "workday", 8, "leaf");
    expect(prediction.activities.map((a) => a.probabilityText)).toEqual(probabilityTokens(raw));
  }, 10_000);
});
