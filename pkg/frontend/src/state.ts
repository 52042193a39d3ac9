import type { Grid, Prediction } from "./api.js";

export interface Viewport {
  minLat: number;
  minLon: number;
  maxLat: number;
  maxLon: number;
}

export interface ViewState {
  viewport: Viewport | null;
  grid: Grid | null;
  selectedCell: string | null;
  time: string;
  day: string;
  k: number;
  level: "leaf" | "parent";
  prediction: Prediction | null;
}

export function initialState(): ViewState {
  return {
    viewport: null,
    grid: null,
    selectedCell: null,
    time: "morning",
    day: "workday",
    k: 8,
    level: "leaf",
    prediction: null,
  };
}

export function setGrid(state: ViewState, grid: Grid): ViewState {
  const ids = new Set(grid.features.map((f) => f.properties.id));
  const selected = state.selectedCell && ids.has(state.selectedCell) ? state.selectedCell : null;
  // dropping the selection also invalidates any prediction made for it
  const prediction = selected ? state.prediction : null;
  return { ...state, grid, selectedCell: selected, prediction };
}

export function selectCell(state: ViewState, cellId: string): ViewState {
  if (!state.grid || !state.grid.features.some((f) => f.properties.id === cellId)) {
    throw new Error(`cell ${cellId} is not in the loaded grid`);
  }
  return { ...state, selectedCell: cellId };
}

export function setK(state: ViewState, k: number): ViewState {
  if (!Number.isInteger(k) || k < 1) throw new Error("k must be an integer >= 1");
  return { ...state, k };
}

export function setLevel(state: ViewState, level: "leaf" | "parent"): ViewState {
  return { ...state, level };
}

export function setContext(state: ViewState, time: string, day: string): ViewState {
  return { ...state, time, day };
}

/** Center point of a cell polygon, for /predict lookups. */
export function cellCenter(state: ViewState, cellId: string): { lat: number; lon: number } {
  const feature = state.grid?.features.find((f) => f.properties.id === cellId);
  if (!feature) throw new Error(`cell ${cellId} is not in the loaded grid`);
  const ring = feature.geometry.coordinates[0]!;
  // closed ring: skip the repeated last vertex
  const pts = ring.slice(0, -1);
  const lon = pts.reduce((s, p) => s + p[0], 0) / pts.length;
  const lat = pts.reduce((s, p) => s + p[1], 0) / pts.length;
  return { lat, lon };
}

/**
 * Latest-wins sequencing for prediction requests: each call gets a ticket and
 * only the most recent ticket's result should be applied.
 */
export class LatestWins {
  private current = 0;

  issue(): number {
    this.current += 1;
    return this.current;
  }

  isCurrent(ticket: number): boolean {
    return ticket === this.current;
  }
}

/** Guards against double feedback submits while a request is in flight. */
export class SubmitGuard {
  private inFlight = false;

  tryAcquire(): boolean {
    if (this.inFlight) return false;
    this.inFlight = true;
    return true;
  }

  release(): void {
    this.inFlight = false;
  }

  get busy(): boolean {
    return this.inFlight;
  }
}
