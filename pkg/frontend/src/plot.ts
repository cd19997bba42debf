import { writeFileSync } from "node:fs";
import { numberColumn, readCsv } from "./csv.js";
import {
  paretoFrontIndices,
  regretValues,
  rollingMean,
  type RunPoint,
} from "./series.js";
import { buildChart } from "./svg.js";

export type PlotKind = "regret" | "pareto" | "rolling_loss";

export interface PlotRequest {
  kind: PlotKind;
  input: string;
  /** second steps.csv for regret; defaults to input (self-regret) */
  against?: string;
  output: string;
  window?: number;
}

export interface PlotResult {
  svg: string;
  /** the y-values actually plotted, for assertions */
  plotted: number[];
}

export function regretFigure(aPath: string, bPath: string): PlotResult {
  const need = ["step", "cumulative_loss_nats"];
  const a = readCsv(aPath, need);
  const b = readCsv(bPath, need);
  const steps = numberColumn(a, "step", aPath);
  const regret = regretValues(
    numberColumn(a, "cumulative_loss_nats", aPath),
    numberColumn(b, "cumulative_loss_nats", bPath),
  );
  const svg = buildChart({
    title: "Cumulative regret",
    xLabel: "examples seen",
    yLabel: "regret (nats)",
    zeroLine: true,
    lines: [{ xs: steps, ys: regret, color: "#4361ee", label: "A - B" }],
  });
  return { svg, plotted: regret };
}

export function rollingLossFigure(path: string, window: number): PlotResult {
  const rows = readCsv(path, ["step", "next_step_loss_nats"]);
  const steps = numberColumn(rows, "step", path);
  const smooth = rollingMean(
    numberColumn(rows, "next_step_loss_nats", path),
    window,
  );
  const svg = buildChart({
    title: `Next-step loss, rolling mean (window ${window})`,
    xLabel: "examples seen",
    yLabel: "loss (nats)",
    lines: [{ xs: steps, ys: smooth, color: "#e63946" }],
  });
  return { svg, plotted: smooth };
}

export function paretoFigure(path: string): PlotResult {
  const rows = readCsv(path, [
    "run_id",
    "total_flops",
    "description_length_nats",
  ]);
  const points: RunPoint[] = rows.map((r, i) => ({
    runId: r["run_id"] ?? String(i),
    flops: numberColumn([r], "total_flops", path)[0]!,
    length: numberColumn([r], "description_length_nats", path)[0]!,
  }));
  const front = paretoFrontIndices(points);
  const frontLengths = front.map((i) => points[i]!.length);
  const svg = buildChart({
    title: "Description length vs compute",
    xLabel: "total FLOPs",
    yLabel: "description length (nats)",
    logX: true,
    scatter: [
      {
        xs: points.map((p) => p.flops),
        ys: points.map((p) => p.length),
        color: "#777",
        label: "runs",
      },
    ],
    lines: [
      {
        xs: front.map((i) => points[i]!.flops),
        ys: frontLengths,
        color: "#2d6a4f",
        width: 2,
        label: "Pareto front",
      },
    ],
  });
  return { svg, plotted: frontLengths };
}

/** Render one figure and write it; returns what was plotted. */
export function renderPlot(request: PlotRequest): PlotResult {
  let result: PlotResult;
  switch (request.kind) {
    case "regret":
      result = regretFigure(request.input, request.against ?? request.input);
      break;
    case "rolling_loss":
      result = rollingLossFigure(request.input, request.window ?? 500);
      break;
    case "pareto":
      result = paretoFigure(request.input);
      break;
  }
  writeFileSync(request.output, result.svg, "utf-8");
  return result;
}
