import { readFileSync } from "node:fs";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { parseSurfaceCsv, parseSweepCsv, SchemaError } from "../src/csv.js";

const FIXTURES = join(__dirname, "fixtures");

describe("parseSurfaceCsv", () => {
  it("reads the harness surface artifact", () => {
    const rows = parseSurfaceCsv(readFileSync(join(FIXTURES, "surface.csv"), "utf8"));
    expect(rows).toHaveLength(510);
    expect(rows[0]).toEqual({ delta: 0, length: 1, error: expect.any(Number) });
    const lengths = new Set(rows.map((r) => r.length));
    expect(lengths.size).toBe(10);
  });

  it("names a missing column", () => {
    expect(() => parseSurfaceCsv("delta,error\n0,0.5\n", "x.csv")).toThrowError(
      /x\.csv: missing column "length"/,
    );
  });

  it("rejects non-numeric cells with the line number", () => {
    expect(() =>
      parseSurfaceCsv("delta,length,error\n0,1,oops\n", "x.csv"),
    ).toThrowError(/line 2: bad error/);
  });
});

describe("parseSweepCsv", () => {
  it("reads exact rows with empty ci95 as null", () => {
    const rows = parseSweepCsv(readFileSync(join(FIXTURES, "sweep_sigma.csv"), "utf8"));
    expect(rows).toHaveLength(27);
    expect(rows[0].ci95).toBeNull();
    expect(rows[0].method).toBe("exact");
  });

  it("keeps ci95 values from simulated rows", () => {
    const rows = parseSweepCsv(readFileSync(join(FIXTURES, "sweep_buffer.csv"), "utf8"));
    expect(rows.every((r) => r.ci95 !== null && r.ci95 >= 0)).toBe(true);
  });

  it("drops failed sweep points", () => {
    const text =
      "x,policy,value,ci95,method,error\n" +
      "0.5,theorem1-l1,0.25,,exact,\n" +
      "1.0,theorem1-l1,,,exact,solver blew up\n";
    const rows = parseSweepCsv(text);
    expect(rows).toHaveLength(1);
    expect(rows[0].x).toBe(0.5);
  });

  it("names a missing column", () => {
    expect(() => parseSweepCsv("x,policy,value\n1,a,2\n", "s.csv")).toThrowError(SchemaError);
    expect(() => parseSweepCsv("x,policy,value\n1,a,2\n", "s.csv")).toThrowError(
      /missing column "ci95"/,
    );
  });
});
