/** plot --spec <file> | plot --preset fig4 --in-dir <dir> [--out <path>] */

import { readFileSync, writeFileSync } from "node:fs";

import { SchemaError } from "./csv.js";
import { FigureSpec, renderFigure } from "./figures.js";
import { presetSpec } from "./presets.js";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 1) {
    const arg = argv[i];
    if (!arg.startsWith("--")) throw new Error(`unexpected argument ${arg}`);
    const value = argv[i + 1];
    if (value === undefined) throw new Error(`missing value for ${arg}`);
    out.set(arg.slice(2), value);
    i += 1;
  }
  return out;
}

function loadSpec(args: Map<string, string>): FigureSpec {
  const specPath = args.get("spec");
  const preset = args.get("preset");
  if ((specPath === undefined) === (preset === undefined)) {
    throw new Error("give exactly one of --spec <file> or --preset <name> --in-dir <dir>");
  }
  if (specPath !== undefined) {
    const spec = JSON.parse(readFileSync(specPath, "utf8")) as FigureSpec;
    if (!spec.kind || !spec.input || !spec.output) {
      throw new Error(`${specPath}: spec needs kind, input and output fields`);
    }
    return spec;
  }
  const inDir = args.get("in-dir");
  if (inDir === undefined) throw new Error("--preset needs --in-dir");
  return presetSpec(preset!, inDir, args.get("out"));
}

export function run(argv: string[]): number {
  let spec: FigureSpec;
  try {
    spec = loadSpec(parseArgs(argv));
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
  try {
    const svg = renderFigure(spec);
    writeFileSync(spec.output, svg);
    console.log(`wrote ${spec.output}`);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema error: ${err.message}`);
      return 1;
    }
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

