export { parseSurfaceCsv, parseSweepCsv, SchemaError } from "./csv.js";
export type { SurfaceRow, SweepRow } from "./csv.js";
export { renderFigure, surfaceCurves, sweepLines } from "./figures.js";
export type { FigureSpec, FigureKind } from "./figures.js";
export { presetSpec, PRESET_NAMES } from "./presets.js";
export { run } from "./cli.js";
