/** Figure assembly: error-vs-age curves per packet length, and sweep line
 * charts with confidence bands per policy. */

import { readFileSync } from "node:fs";

import { parseSurfaceCsv, parseSweepCsv, SchemaError, SurfaceRow, SweepRow } from "./csv.js";
import {
  PALETTE,
  circle,
  fmt,
  line,
  linearScale,
  niceTicks,
  polygon,
  polyline,
  svgDocument,
  text,
} from "./svg.js";

export type FigureKind = "surface-curves" | "sweep-lines";

export interface FigureSpec {
  kind: FigureKind;
  input: string;
  output: string;
  title?: string;
  xLabel?: string;
  yLabel?: string;
  /** lengths (surface-curves) or policy names (sweep-lines) to draw;
   * omitted = every series in the file. */
  series?: (number | string)[];
}

const WIDTH = 640;
const HEIGHT = 420;
const MARGIN = { top: 36, right: 24, bottom: 52, left: 72 };

interface Series {
  label: string;
  points: { x: number; y: number; band?: [number, number] }[];
}

function frame(
  xDomain: [number, number],
  yDomain: [number, number],
  spec: FigureSpec,
): { body: string[]; sx: (v: number) => number; sy: (v: number) => number } {
  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = HEIGHT - MARGIN.bottom;
  const y1 = MARGIN.top;
  const sx = linearScale(xDomain[0], xDomain[1], x0, x1);
  const sy = linearScale(yDomain[0], yDomain[1], y0, y1);
  const body: string[] = [];
  body.push(line(x0, y0, x1, y0));
  body.push(line(x0, y0, x0, y1));
  for (const t of niceTicks(xDomain[0], xDomain[1], 6)) {
    const px = sx(t);
    body.push(line(px, y0, px, y0 + 4));
    body.push(text(px, y0 + 17, fmt(t), "middle"));
  }
  for (const t of niceTicks(yDomain[0], yDomain[1], 6)) {
    const py = sy(t);
    body.push(line(x0 - 4, py, x0, py));
    body.push(line(x0, py, x1, py, "#eeeeee"));
    body.push(text(x0 - 7, py + 3.5, fmt(t), "end"));
  }
  if (spec.xLabel) body.push(text((x0 + x1) / 2, HEIGHT - 12, spec.xLabel, "middle", 12));
  if (spec.yLabel) body.push(text(16, (y0 + y1) / 2, spec.yLabel, "middle", 12, -90));
  if (spec.title) body.push(text((x0 + x1) / 2, 20, spec.title, "middle", 13));
  return { body, sx, sy };
}

function drawSeries(allSeries: Series[], spec: FigureSpec): string {
  if (allSeries.length === 0 || allSeries.every((s) => s.points.length === 0)) {
    throw new SchemaError(`${spec.input}: no data points to draw`);
  }
  const xs = allSeries.flatMap((s) => s.points.map((p) => p.x));
  const ys = allSeries.flatMap((s) =>
    s.points.flatMap((p) => (p.band ? [p.band[0], p.band[1], p.y] : [p.y])),
  );
  const xDomain: [number, number] = [Math.min(...xs), Math.max(...xs)];
  const yLow = Math.min(...ys);
  const yHigh = Math.max(...ys);
  const pad = yLow === yHigh ? Math.max(Math.abs(yLow) * 0.1, 1e-6) : (yHigh - yLow) * 0.06;
  const yDomain: [number, number] = [Math.max(0, yLow - pad), yHigh + pad];
  const { body, sx, sy } = frame(xDomain, yDomain, spec);
  allSeries.forEach((series, i) => {
    const color = PALETTE[i % PALETTE.length];
    const pts = series.points;
    const banded = pts.filter((p) => p.band !== undefined);
    if (banded.length >= 2) {
      const upper = banded.map((p) => [sx(p.x), sy(p.band![1])] as [number, number]);
      const lower = banded
        .slice()
        .reverse()
        .map((p) => [sx(p.x), sy(p.band![0])] as [number, number]);
      body.push(polygon(upper.concat(lower), color, 0.18));
    }
    if (pts.length >= 2) {
      body.push(polyline(pts.map((p) => [sx(p.x), sy(p.y)] as [number, number]), color));
    }
    for (const p of pts) {
      body.push(circle(sx(p.x), sy(p.y), 2.4, color));
    }
    const lx = WIDTH - MARGIN.right - 10;
    const ly = MARGIN.top + 14 + i * 16;
    body.push(line(lx - 28, ly - 4, lx - 8, ly - 4, color, 2));
    body.push(text(lx - 34, ly, series.label, "end"));
  });
  return svgDocument(WIDTH, HEIGHT, body);
}

export function surfaceCurves(rows: SurfaceRow[], spec: FigureSpec): string {
  const lengths = spec.series
    ? spec.series.map(Number)
    : [...new Set(rows.map((r) => r.length))].sort((a, b) => a - b);
  const series: Series[] = lengths.map((l) => ({
    label: `l=${l}`,
    points: rows
      .filter((r) => r.length === l)
      .sort((a, b) => a.delta - b.delta)
      .map((r) => ({ x: r.delta, y: r.error })),
  }));
  return drawSeries(series, spec);
}

export function sweepLines(rows: SweepRow[], spec: FigureSpec): string {
  const policies = spec.series
    ? spec.series.map(String)
    : [...new Set(rows.map((r) => r.policy))];
  const series: Series[] = policies.map((policy) => ({
    label: policy,
    points: rows
      .filter((r) => r.policy === policy)
      .sort((a, b) => a.x - b.x)
      .map((r) => ({
        x: r.x,
        y: r.value,
        band:
          r.ci95 === null ? undefined : ([r.value - r.ci95, r.value + r.ci95] as [number, number]),
      })),
  }));
  return drawSeries(series, spec);
}

/** Render the figure described by the spec and return the SVG text. */
export function renderFigure(spec: FigureSpec): string {
  const raw = readFileSync(spec.input, "utf8");
  if (spec.kind === "surface-curves") {
    return surfaceCurves(parseSurfaceCsv(raw, spec.input), spec);
  }
  if (spec.kind === "sweep-lines") {
    return sweepLines(parseSweepCsv(raw, spec.input), spec);
  }
  throw new SchemaError(`unknown figure kind ${JSON.stringify(spec.kind)}`);
}
