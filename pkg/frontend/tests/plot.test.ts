import { existsSync, mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";
import { main } from "../src/cli.js";
import { SchemaError } from "../src/csv.js";
import { paretoFigure, regretFigure, renderPlot } from "../src/plot.js";

const FIX = join(__dirname, "fixtures");
const STEPS_A = join(FIX, "steps_a.csv");
const STEPS_B = join(FIX, "steps_b.csv");
const INDEX = join(FIX, "index.csv");

function outPath(name: string): string {
  return join(mkdtempSync(join(tmpdir(), "plots-")), name);
}

function cumulativeColumn(path: string): number[] {
  // independent of src/csv.ts on purpose
  const lines = readFileSync(path, "utf-8").trim().split("\n");
  const idx = lines[0]!.split(",").indexOf("cumulative_loss_nats");
  return lines.slice(1).map((l) => Number(l.split(",")[idx]));
}

describe("figure rendering from fixture files", () => {
  it("renders all three kinds without error", () => {
    const requests = [
      { kind: "regret", input: STEPS_A, against: STEPS_B },
      { kind: "rolling_loss", input: STEPS_A, window: 25 },
      { kind: "pareto", input: INDEX },
    ] as const;
    for (const req of requests) {
      const out = outPath(`${req.kind}.svg`);
      const { svg } = renderPlot({ ...req, output: out });
      expect(existsSync(out)).toBe(true);
      expect(readFileSync(out, "utf-8")).toBe(svg);
      expect(svg.startsWith("<svg ")).toBe(true);
      expect(svg.endsWith("</svg>\n")).toBe(true);
      expect(svg).toContain("<polyline");
    }
  });

  it("self-regret plots a zero line", () => {
    const { svg, plotted } = regretFigure(STEPS_A, STEPS_A);
    expect(plotted.every((v) => v === 0)).toBe(true);
    // every polyline vertex sits on one horizontal pixel row
    const points = /points="([^"]+)"/.exec(svg)![1]!;
    const ys = new Set(points.split(" ").map((p) => p.split(",")[1]));
    expect(ys.size).toBe(1);
  });

  it("regret equals the cumulative column difference exactly", () => {
    const { plotted } = regretFigure(STEPS_A, STEPS_B);
    const a = cumulativeColumn(STEPS_A);
    const b = cumulativeColumn(STEPS_B);
    expect(plotted).toEqual(a.map((v, i) => v - b[i]!));
  });

  it("pareto front polyline is non-increasing and log-scaled", () => {
    const { svg, plotted } = paretoFigure(INDEX);
    for (let i = 1; i < plotted.length; i++) {
      expect(plotted[i]!).toBeLessThan(plotted[i - 1]!);
    }
    expect(svg).toContain("<circle");
  });

  it("reproduces the worked dominance example", () => {
    const { plotted } = paretoFigure(join(FIX, "tiny_index.csv"));
    expect(plotted).toEqual([10, 5]);
  });

  it("rolling window is honored", () => {
    const wide = renderPlot({
      kind: "rolling_loss",
      input: STEPS_A,
      output: outPath("w.svg"),
      window: 120,
    });
    const narrow = renderPlot({
      kind: "rolling_loss",
      input: STEPS_A,
      output: outPath("n.svg"),
      window: 1,
    });
    expect(wide.plotted).not.toEqual(narrow.plotted);
    expect(wide.plotted.length).toBe(120);
  });

  it("identical requests give identical SVG bytes", () => {
    const a = renderPlot({
      kind: "pareto",
      input: INDEX,
      output: outPath("a.svg"),
    });
    const b = renderPlot({
      kind: "pareto",
      input: INDEX,
      output: outPath("b.svg"),
    });
    expect(a.svg).toBe(b.svg);
  });

  it("missing column fails with the column named", () => {
    expect(() =>
      renderPlot({
        kind: "regret",
        input: join(FIX, "bad_steps.csv"),
        output: outPath("x.svg"),
      }),
    ).toThrowError(SchemaError);
    try {
      regretFigure(join(FIX, "bad_steps.csv"), STEPS_A);
    } catch (err) {
      expect((err as Error).message).toContain("cumulative_loss_nats");
    }
  });
});

describe("cli", () => {
  it("plots and exits 0", async () => {
    const out = outPath("cli.svg");
    const code = await main([
      "plot",
      "--kind",
      "regret",
      "--in",
      STEPS_A,
      "--against",
      STEPS_B,
      "--out",
      out,
    ]);
    expect(code).toBe(0);
    expect(existsSync(out)).toBe(true);
  });

  it("returns 2 on schema errors", async () => {
    const code = await main([
      "plot",
      "--kind",
      "regret",
      "--in",
      join(FIX, "bad_steps.csv"),
      "--out",
      outPath("x.svg"),
    ]);
    expect(code).toBe(2);
  });

  it("returns 2 on a missing file", async () => {
    const code = await main([
      "plot",
      "--kind",
      "pareto",
      "--in",
      join(FIX, "nope.csv"),
      "--out",
      outPath("x.svg"),
    ]);
    expect(code).toBe(2);
  });

  it("rejects an unknown kind", async () => {
    const code = await main([
      "plot",
      "--kind",
      "histogram",
      "--in",
      STEPS_A,
      "--out",
      outPath("x.svg"),
    ]);
    expect(code).toBe(1);
  });
});
