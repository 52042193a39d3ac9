import { ApiError, ServiceClient } from "./api.js";
import { ACTIVITY_CATALOG, DAY_CLASSES, TIME_CLASSES, searchCatalog } from "./catalog.js";
import { accuracyHtml, feedbackOptionsHtml, gridOverlaySvg, predictionListHtml } from "./render.js";
import {
  LatestWins,
  SubmitGuard,
  ViewState,
  cellCenter,
  initialState,
  selectCell,
  setContext,
  setGrid,
  setK,
  setLevel,
} from "./state.js";

const client = new ServiceClient(""); // same origin; the service mounts dist/
let state: ViewState = initialState();
const predictions = new LatestWins();
const submitGuard = new SubmitGuard();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function showBanner(message: string | null): void {
  const banner = el<HTMLDivElement>("banner");
  banner.textContent = message ?? "";
  banner.hidden = message === null;
}

function fillSelect(select: HTMLSelectElement, options: string[], value: string): void {
  select.innerHTML = options
    .map((o) => `<option value="${o}">${o.replace(/_/g, " ")}</option>`)
    .join("");
  select.value = value;
}

function renderGrid(): void {
  const host = el<HTMLDivElement>("map");
  if (!state.grid) {
    host.innerHTML = "";
    return;
  }
  host.innerHTML = gridOverlaySvg(state.grid, 800, 600, state.selectedCell);
  for (const poly of host.querySelectorAll<SVGPolygonElement>("polygon[data-cell]")) {
    poly.addEventListener("click", () => {
      state = selectCell(state, poly.dataset.cell!);
      renderGrid();
      void refreshPrediction();
    });
  }
}

function renderPrediction(): void {
  const panel = el<HTMLDivElement>("prediction");
  if (!state.prediction) {
    panel.innerHTML = `<p class="empty">Pick a cell on the map.</p>`;
    return;
  }
  panel.innerHTML =
    `<p class="context-line">cell ${state.prediction.cellId}, ` +
    `radius ${state.prediction.radiusM} m</p>` +
    predictionListHtml(state.prediction);
  const select = el<HTMLSelectElement>("feedback-select");
  const shown = state.prediction.activities.map((a) => a.id);
  select.innerHTML = feedbackOptionsHtml(shown, searchCatalog(el<HTMLInputElement>("feedback-search").value));
  el<HTMLButtonElement>("feedback-submit").disabled = submitGuard.busy;
}

async function refreshPrediction(): Promise<void> {
  if (!state.selectedCell) return;
  const ticket = predictions.issue();
  const { lat, lon } = cellCenter(state, state.selectedCell);
  try {
    const prediction = await client.predict(lat, lon, state.time, state.day, state.k, state.level);
    if (!predictions.isCurrent(ticket)) return; // a newer request superseded this one
    state = { ...state, prediction };
    showBanner(null);
    renderPrediction();
  } catch (err) {
    if (!predictions.isCurrent(ticket)) return;
    if (err instanceof ApiError) {
      showBanner(err.field ? `${err.field}: ${err.message}` : err.message);
    } else {
      showBanner("service unreachable");
    }
  }
}

async function refreshAccuracy(): Promise<void> {
  try {
    const acc = await client.accuracy(state.k, state.level);
    el<HTMLDivElement>("accuracy").innerHTML = accuracyHtml(acc);
  } catch {
    showBanner("service unreachable");
  }
}

async function loadGrid(): Promise<void> {
  try {
    const grid = await client.grid();
    state = setGrid(state, grid);
    showBanner(null);
    renderGrid();
  } catch {
    showBanner("service unreachable");
  }
}

async function submitFeedback(): Promise<void> {
  if (!state.prediction || !state.selectedCell) return;
  if (!submitGuard.tryAcquire()) return;
  const button = el<HTMLButtonElement>("feedback-submit");
  button.disabled = true;
  try {
    await client.submitFeedback({
      context: { location: state.selectedCell, time: state.time, day: state.day },
      shown: state.prediction.activities.map((a) => a.id),
      selected: el<HTMLSelectElement>("feedback-select").value,
      client_timestamp: new Date().toISOString(),
    });
    showBanner(null);
    await refreshAccuracy();
  } catch (err) {
    showBanner(err instanceof ApiError ? err.message : "submit failed, please retry");
  } finally {
    submitGuard.release();
    button.disabled = false;
  }
}

function wireControls(): void {
  const time = el<HTMLSelectElement>("time-select");
  const day = el<HTMLSelectElement>("day-select");
  fillSelect(time, TIME_CLASSES, state.time);
  fillSelect(day, DAY_CLASSES, state.day);
  const onContext = () => {
    state = setContext(state, time.value, day.value);
    void refreshPrediction();
  };
  time.addEventListener("change", onContext);
  day.addEventListener("change", onContext);

  const kInput = el<HTMLInputElement>("k-input");
  kInput.value = String(state.k);
  kInput.addEventListener("change", () => {
    const k = Number(kInput.value);
    if (Number.isInteger(k) && k >= 1) {
      state = setK(state, k);
      void refreshPrediction();
      void refreshAccuracy();
    } else {
      kInput.value = String(state.k);
    }
  });

  const levelToggle = el<HTMLSelectElement>("level-select");
  levelToggle.value = state.level;
  levelToggle.addEventListener("change", () => {
    state = setLevel(state, levelToggle.value as "leaf" | "parent");
    void refreshPrediction();
    void refreshAccuracy();
  });

  el<HTMLInputElement>("feedback-search").addEventListener("input", renderPrediction);
  el<HTMLButtonElement>("feedback-submit").addEventListener("click", () => void submitFeedback());
  void (ACTIVITY_CATALOG.length); // catalog is also used via searchCatalog
}

async function start(): Promise<void> {
  wireControls();
  renderPrediction();
  await loadGrid();
  await refreshAccuracy();
}

document.addEventListener("DOMContentLoaded", () => void start());
