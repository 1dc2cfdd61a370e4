/** Named figure presets over the harness's artifact layout. */

import { join } from "node:path";

import { FigureSpec } from "./figures.js";

export const PRESET_NAMES = ["fig3", "fig4", "fig5"] as const;

export function presetSpec(name: string, inDir: string, output?: string): FigureSpec {
  switch (name) {
    case "fig3":
      return {
        kind: "surface-curves",
        input: join(inDir, "surface.csv"),
        output: output ?? join(inDir, "fig3.svg"),
        series: [1, 2, 4, 6, 8, 10],
        xLabel: "age of the freshest delivered sample (slots)",
        yLabel: "inference error",
        title: "Inference error vs age per packet length",
      };
    case "fig4":
      return {
        kind: "sweep-lines",
        input: join(inDir, "sweep_sigma.csv"),
        output: output ?? join(inDir, "fig4.svg"),
        xLabel: "transmission-delay scale",
        yLabel: "time-average inference error",
        title: "Constant-length schedulers vs zero-wait baseline",
      };
    case "fig5":
      return {
        kind: "sweep-lines",
        input: join(inDir, "sweep_alpha.csv"),
        output: output ?? join(inDir, "fig5.svg"),
        xLabel: "transition-probability sum",
        yLabel: "time-average inference error",
        title: "Delay-memory-aware vs memoryless-misspecified scheduler",
      };
    default:
      throw new Error(`unknown preset ${JSON.stringify(name)}; expected ${PRESET_NAMES.join(", ")}`);
  }
}
