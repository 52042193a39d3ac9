// Markup builders. Pure string-in string-out so they are testable without a
// browser; main.ts assigns the results to innerHTML.
import type { Accuracy, Grid, Prediction } from "./api.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Fill opacity for a cell, strictly increasing in its POI count. */
export function densityShade(poiTotal: number, maxTotal: number): number {
  if (maxTotal <= 0) return 0.05;
  return 0.05 + 0.9 * (poiTotal / maxTotal);
}

interface Extent {
  minLon: number;
  minLat: number;
  maxLon: number;
  maxLat: number;
}

function gridExtent(grid: Grid): Extent | null {
  let ext: Extent | null = null;
  for (const f of grid.features) {
    for (const [lon, lat] of f.geometry.coordinates[0] ?? []) {
      if (!ext) {
        ext = { minLon: lon, minLat: lat, maxLon: lon, maxLat: lat };
      } else {
        ext.minLon = Math.min(ext.minLon, lon);
        ext.minLat = Math.min(ext.minLat, lat);
        ext.maxLon = Math.max(ext.maxLon, lon);
        ext.maxLat = Math.max(ext.maxLat, lat);
      }
    }
  }
  return ext;
}

/**
 * The whole grid as an SVG overlay: one polygon per leaf, shaded by POI
 * density, tagged with data-cell for click handling.
 */
export function gridOverlaySvg(
  grid: Grid,
  width: number,
  height: number,
  selectedCell: string | null
): string {
  const ext = gridExtent(grid);
  if (!ext) {
    return `<svg viewBox="0 0 ${width} ${height}" xmlns="http://www.w3.org/2000/svg"></svg>`;
  }
  const spanLon = ext.maxLon - ext.minLon || 1;
  const spanLat = ext.maxLat - ext.minLat || 1;
  const px = (lon: number) => ((lon - ext.minLon) / spanLon) * width;
  const py = (lat: number) => height - ((lat - ext.minLat) / spanLat) * height;
  const maxTotal = Math.max(...grid.features.map((f) => f.properties.poi_total));
  const polys = grid.features.map((f) => {
    const ring = f.geometry.coordinates[0] ?? [];
    const points = ring.map(([lon, lat]) => `${px(lon).toFixed(2)},${py(lat).toFixed(2)}`).join(" ");
    const p = f.properties;
    const classes = ["cell"];
    if (p.sparse_flag) classes.push("sparse");
    if (p.id === selectedCell) classes.push("selected");
    const shade = densityShade(p.poi_total, maxTotal).toFixed(3);
    return (
      `<polygon class="${classes.join(" ")}" data-cell="${escapeHtml(p.id)}" ` +
      `points="${points}" fill-opacity="${shade}">` +
      `<title>${escapeHtml(p.id)}: ${p.poi_total} POIs</title></polygon>`
    );
  });
  return (
    `<svg viewBox="0 0 ${width} ${height}" xmlns="http://www.w3.org/2000/svg">` +
    polys.join("") +
    `</svg>`
  );
}

/**
 * Ranked activity list. Probability text comes verbatim from the service
 * payload; the parsed float is only used to size the bar.
 */
export function predictionListHtml(prediction: Prediction): string {
  if (prediction.activities.length === 0) {
    return `<p class="empty">No activity fits this context.</p>`;
  }
  const rows = prediction.activities.map((a, i) => {
    const pct = Math.min(100, a.probability * 100);
    return (
      `<li data-activity="${escapeHtml(a.id)}">` +
      `<span class="rank">${i + 1}</span>` +
      `<span class="label">${escapeHtml(a.label)}</span>` +
      `<span class="bar"><span class="fill" style="width:${pct.toFixed(1)}%"></span></span>` +
      `<span class="prob">${escapeHtml(a.probabilityText)}</span>` +
      `</li>`
    );
  });
  return `<ol class="ranking">${rows.join("")}</ol>`;
}

export function accuracyHtml(acc: Accuracy): string {
  if (acc.count === 0) {
    return `<p class="empty">No feedback yet.</p>`;
  }
  return (
    `<p class="accuracy-line">top-${acc.k} (${escapeHtml(acc.level)}): ` +
    `<strong>${acc.accuracy}</strong> over ${acc.count} submissions</p>`
  );
}

export function feedbackOptionsHtml(shown: string[], catalog: string[]): string {
  const shownSet = new Set(shown);
  const shownOpts = shown.map(
    (a) => `<option value="${escapeHtml(a)}">${escapeHtml(a.replace(/_/g, " "))}</option>`
  );
  const rest = catalog
    .filter((a) => !shownSet.has(a))
    .map((a) => `<option value="${escapeHtml(a)}">${escapeHtml(a.replace(/_/g, " "))}</option>`);
  return (
    `<optgroup label="shown">${shownOpts.join("")}</optgroup>` +
    `<optgroup label="all activities">${rest.join("")}</optgroup>`
  );
}
