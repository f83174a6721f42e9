/**
 * Aggregations over a parsed metrics table.
 *
 * These mirror the experiment tooling's formulas exactly (the test suite
 * cross-checks them against values recomputed by that tooling on the
 * bundled fixtures): average UA is the flat mean of the last `window`
 * rounds' accuracy cells in percent, client UAs average each column over
 * the same window, and the fairness histogram buckets client UAs with the
 * top edge folded into the last bucket.
 */

import { MetricsTable } from "./csv.js";

/** (rounds x clients) test accuracies in [0, 1]. */
export function accuracyMatrix(t: MetricsTable): number[][] {
  return t.rounds.map((g) => g.clients.map((c) => c.testAcc));
}

/** Per-round client means, in percent. */
export function roundMeans(t: MetricsTable): number[] {
  return accuracyMatrix(t).map((row) => (100 * row.reduce((a, b) => a + b, 0)) / row.length);
}

function checkWindow(t: MetricsTable, window: number): void {
  if (!(Number.isInteger(window) && window >= 1 && window <= t.rounds.length)) {
    throw new Error(`window ${window} exceeds the ${t.rounds.length} recorded rounds`);
  }
}

export function averageUa(t: MetricsTable, window: number): number {
  checkWindow(t, window);
  const tail = accuracyMatrix(t).slice(-window);
  let sum = 0;
  let n = 0;
  for (const row of tail) {
    for (const v of row) {
      sum += v;
      n += 1;
    }
  }
  return (100 * sum) / n;
}

export function clientUas(t: MetricsTable, window: number): number[] {
  checkWindow(t, window);
  const tail = accuracyMatrix(t).slice(-window);
  return t.clientIds.map(
    (_, j) => (100 * tail.reduce((a, row) => a + row[j], 0)) / tail.length,
  );
}

export function fairnessHistogram(uasPercent: number[], bucketWidth: number): number[] {
  if (!(Number.isInteger(bucketWidth) && bucketWidth >= 1 && 100 % bucketWidth === 0)) {
    throw new Error(`bucket width must divide 100, got ${bucketWidth}`);
  }
  const nBuckets = 100 / bucketWidth;
  const counts = new Array<number>(nBuckets).fill(0);
  for (const ua of uasPercent) {
    if (!(ua >= 0 && ua <= 100)) {
      throw new Error(`accuracy ${ua} outside [0, 100]`);
    }
    counts[Math.min(Math.floor(ua / bucketWidth), nBuckets - 1)] += 1;
  }
  return counts;
}

/** Mean and population standard deviation (the band half-width). */
export function meanStd(values: number[]): { mean: number; std: number } {
  const n = values.length;
  const mean = values.reduce((a, b) => a + b, 0) / n;
  const varSum = values.reduce((a, b) => a + (b - mean) * (b - mean), 0);
  return { mean, std: Math.sqrt(varSum / n) };
}

export function defaultWindow(t: MetricsTable): number {
  return Math.min(10, t.rounds.length);
}
