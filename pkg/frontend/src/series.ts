import { DataError } from "./csv.js";

/**
 * Cumulative code-length difference of run A over run B, straight from the
 * two cumulative_loss_nats columns.  No smoothing: the plotted array IS the
 * column difference.
 */
export function regretValues(cumA: number[], cumB: number[]): number[] {
  if (cumA.length !== cumB.length) {
    throw new DataError(
      `step counts differ: ${cumA.length} vs ${cumB.length}`,
    );
  }
  return cumA.map((a, i) => a - cumB[i]!);
}

/** Trailing mean over the last min(window, i + 1) values at each index. */
export function rollingMean(values: number[], window: number): number[] {
  if (!Number.isInteger(window) || window < 1) {
    throw new DataError(`window must be a positive integer, got ${window}`);
  }
  const out = new Array<number>(values.length);
  let sum = 0;
  for (let i = 0; i < values.length; i++) {
    sum += values[i]!;
    if (i >= window) sum -= values[i - window]!;
    out[i] = sum / Math.min(window, i + 1);
  }
  return out;
}

export interface RunPoint {
  runId: string;
  flops: number;
  length: number;
}

/**
 * Indices of the runs on the Pareto front of (flops, length), cheapest
 * first.  A run is kept only if it is strictly shorter than every run that
 * costs no more, so the front polyline is strictly decreasing in length.
 */
export function paretoFrontIndices(points: RunPoint[]): number[] {
  const order = points
    .map((_, i) => i)
    .sort((a, b) => {
      const pa = points[a]!;
      const pb = points[b]!;
      if (pa.flops !== pb.flops) return pa.flops - pb.flops;
      if (pa.length !== pb.length) return pa.length - pb.length;
      return a - b;
    });
  const keep: number[] = [];
  let best = Number.POSITIVE_INFINITY;
  for (const i of order) {
    if (points[i]!.length < best) {
      keep.push(i);
      best = points[i]!.length;
    }
  }
  return keep;
}
