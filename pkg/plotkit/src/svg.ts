/** Minimal deterministic SVG assembly: no timestamps, no randomness. */

export interface Margin {
  top: number;
  right: number;
  bottom: number;
  left: number;
}

export const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#17becf",
  "#7f7f7f",
];

export function linearScale(d0: number, d1: number, r0: number, r1: number) {
  const span = d1 - d0;
  if (span === 0) {
    const mid = (r0 + r1) / 2;
    return (_v: number) => mid;
  }
  return (v: number) => r0 + ((v - d0) / span) * (r1 - r0);
}

/** Round tick positions covering [min, max] at a 1/2/5 step. */
export function niceTicks(min: number, max: number, count = 5): number[] {
  if (min === max) return [min];
  const rawStep = (max - min) / Math.max(count - 1, 1);
  const power = Math.pow(10, Math.floor(Math.log10(rawStep)));
  const candidates = [1, 2, 5, 10].map((m) => m * power);
  const step = candidates.find((s) => s >= rawStep) ?? candidates[3];
  const start = Math.ceil(min / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= max + step * 1e-9; v += step) {
    ticks.push(Number(v.toPrecision(12)));
  }
  return ticks;
}

export function fmt(v: number): string {
  if (v === 0) return "0";
  const abs = Math.abs(v);
  if (abs >= 0.01 && abs < 10000) return String(Number(v.toPrecision(6)));
  return v.toExponential(2);
}

export function polyline(points: [number, number][], stroke: string, width = 1.5): string {
  const attr = points.map(([x, y]) => `${x.toFixed(2)},${y.toFixed(2)}`).join(" ");
  return `<polyline fill="none" stroke="${stroke}" stroke-width="${width}" points="${attr}"/>`;
}

export function polygon(points: [number, number][], fill: string, opacity: number): string {
  const attr = points.map(([x, y]) => `${x.toFixed(2)},${y.toFixed(2)}`).join(" ");
  return `<polygon fill="${fill}" fill-opacity="${opacity}" stroke="none" points="${attr}"/>`;
}

export function circle(x: number, y: number, r: number, fill: string): string {
  return `<circle cx="${x.toFixed(2)}" cy="${y.toFixed(2)}" r="${r}" fill="${fill}"/>`;
}

export function text(
  x: number,
  y: number,
  content: string,
  anchor: "start" | "middle" | "end" = "start",
  size = 11,
  rotate = 0,
): string {
  const transform = rotate ? ` transform="rotate(${rotate} ${x} ${y})"` : "";
  return (
    `<text x="${x.toFixed(2)}" y="${y.toFixed(2)}" text-anchor="${anchor}" ` +
    `font-family="Helvetica, Arial, sans-serif" font-size="${size}"${transform}>` +
    `${escapeXml(content)}</text>`
  );
}

export function line(x1: number, y1: number, x2: number, y2: number, stroke = "#333", width = 1): string {
  return (
    `<line x1="${x1.toFixed(2)}" y1="${y1.toFixed(2)}" x2="${x2.toFixed(2)}" ` +
    `y2="${y2.toFixed(2)}" stroke="${stroke}" stroke-width="${width}"/>`
  );
}

export function escapeXml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function svgDocument(width: number, height: number, body: string[]): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}">\n<rect width="${width}" height="${height}" fill="white"/>\n` +
    body.join("\n") +
    "\n</svg>\n"
  );
}
