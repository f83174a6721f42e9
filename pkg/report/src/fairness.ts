/**
 * Fairness histogram: how many clients land in each accuracy bucket,
 * computed from per-client UAs over the last rounds. Bar heights sum to
 * the client count by construction.
 */

import { MetricsTable } from "./csv.js";
import { clientUas, fairnessHistogram } from "./metrics.js";
import { Svg, PALETTE, chartFrame, linearScale, plotArea } from "./svg.js";

export function renderFairness(counts: number[], bucketWidth: number): string {
  const a = plotArea();
  const top = Math.max(1, ...counts);
  const xs = linearScale(0, 100, a.x0, a.x1);
  const ys = linearScale(0, top, a.y0, a.y1);

  const yTicks = [];
  for (let v = 0; v <= top; v += Math.max(1, Math.ceil(top / 8))) {
    yTicks.push({ v, label: String(v) });
  }
  const xTicks = [];
  for (let v = 0; v <= 100; v += bucketWidth * Math.ceil(10 / bucketWidth)) {
    xTicks.push({ v, label: String(v) });
  }

  const svg = new Svg();
  chartFrame(svg, "client accuracy spread", "UA bucket (%)", "clients", xTicks, yTicks, xs, ys);
  counts.forEach((n, i) => {
    if (n === 0) {
      return;
    }
    const x = xs(i * bucketWidth);
    const w = xs(bucketWidth) - xs(0);
    svg.rect(x + 1, ys(n), w - 2, a.y0 - ys(n), PALETTE[0], ' stroke="#ffffff"');
    svg.text(x + w / 2, ys(n) - 5, String(n), "middle", 11);
  });
  return svg.render();
}

export function fairnessFigure(table: MetricsTable, bucketWidth: number, window: number): string {
  return renderFairness(fairnessHistogram(clientUas(table, window), bucketWidth), bucketWidth);
}
