/** Parsing and schema validation for the harness's CSV artifacts. */

export interface SurfaceRow {
  delta: number;
  length: number;
  error: number;
}

export interface SweepRow {
  x: number;
  policy: string;
  value: number;
  ci95: number | null;
  method: string;
}

export class SchemaError extends Error {}

function rows(text: string): string[][] {
  return text
    .split(/\r?\n/)
    .filter((line) => line.length > 0)
    .map((line) => line.split(","));
}

function columnIndex(header: string[], name: string, file: string): number {
  const idx = header.indexOf(name);
  if (idx < 0) {
    throw new SchemaError(`${file}: missing column "${name}" (header: ${header.join(",")})`);
  }
  return idx;
}

function toNumber(raw: string, file: string, line: number, column: string): number {
  const value = Number(raw);
  if (raw === "" || !Number.isFinite(value)) {
    throw new SchemaError(`${file}: line ${line}: bad ${column} value ${JSON.stringify(raw)}`);
  }
  return value;
}

/** Surface table: header delta,length,error. */
export function parseSurfaceCsv(text: string, file = "surface csv"): SurfaceRow[] {
  const table = rows(text);
  if (table.length === 0) throw new SchemaError(`${file}: empty file`);
  const header = table[0].map((h) => h.trim());
  const dCol = columnIndex(header, "delta", file);
  const lCol = columnIndex(header, "length", file);
  const eCol = columnIndex(header, "error", file);
  return table.slice(1).map((fields, i) => ({
    delta: toNumber(fields[dCol], file, i + 2, "delta"),
    length: toNumber(fields[lCol], file, i + 2, "length"),
    error: toNumber(fields[eCol], file, i + 2, "error"),
  }));
}

/** Sweep table: header x,policy,value,ci95,method[,error]; rows whose error
 * field is set (failed sweep points) are dropped. */
export function parseSweepCsv(text: string, file = "sweep csv"): SweepRow[] {
  const table = rows(text);
  if (table.length === 0) throw new SchemaError(`${file}: empty file`);
  const header = table[0].map((h) => h.trim());
  const xCol = columnIndex(header, "x", file);
  const pCol = columnIndex(header, "policy", file);
  const vCol = columnIndex(header, "value", file);
  const cCol = columnIndex(header, "ci95", file);
  const mCol = columnIndex(header, "method", file);
  const errCol = header.indexOf("error");
  const out: SweepRow[] = [];
  table.slice(1).forEach((fields, i) => {
    if (errCol >= 0 && (fields[errCol] ?? "") !== "") return;
    out.push({
      x: toNumber(fields[xCol], file, i + 2, "x"),
      policy: fields[pCol],
      value: toNumber(fields[vCol], file, i + 2, "value"),
      ci95: fields[cCol] === "" || fields[cCol] === undefined ? null : toNumber(fields[cCol], file, i + 2, "ci95"),
      method: fields[mCol] ?? "",
    });
  });
  return out;
}
