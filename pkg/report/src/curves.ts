/**
 * Learning curves: average UA (%) against round, one line per label.
 * Files sharing a label are treated as seeds of one protocol and drawn as
 * mean line plus a mean+-std band.
 */

import { CsvError, MetricsTable } from "./csv.js";
import { meanStd, roundMeans } from "./metrics.js";
import { Svg, PALETTE, chartFrame, integerTicks, linearScale, plotArea } from "./svg.js";

export interface LabeledTable {
  label: string;
  table: MetricsTable;
}

export interface CurveSeries {
  label: string;
  rounds: number[];
  mean: number[]; // percent
  std: number[]; // zero when the label has a single file
  n: number; // files under this label
}

export function curveSeries(inputs: LabeledTable[]): CurveSeries[] {
  if (inputs.length === 0) {
    throw new Error("curves need at least one input file");
  }
  const order: string[] = [];
  const groups = new Map<string, MetricsTable[]>();
  for (const { label, table } of inputs) {
    if (!groups.has(label)) {
      groups.set(label, []);
      order.push(label);
    }
    groups.get(label)!.push(table);
  }
  return order.map((label) => {
    const tables = groups.get(label)!;
    const rounds = tables[0].rounds.map((g) => g.round);
    for (const t of tables.slice(1)) {
      const here = t.rounds.map((g) => g.round);
      if (here.length !== rounds.length || here.some((r, i) => r !== rounds[i])) {
        throw new CsvError(
          `label '${label}': ${t.source} covers rounds ${here[0]}..${here[here.length - 1]} ` +
            `but ${tables[0].source} covers ${rounds[0]}..${rounds[rounds.length - 1]}`,
        );
      }
    }
    const perFile = tables.map((t) => roundMeans(t));
    const mean: number[] = [];
    const std: number[] = [];
    for (let i = 0; i < rounds.length; i++) {
      const ms = meanStd(perFile.map((m) => m[i]));
      mean.push(ms.mean);
      std.push(tables.length > 1 ? ms.std : 0);
    }
    return { label, rounds, mean, std, n: tables.length };
  });
}

export function renderCurves(series: CurveSeries[]): string {
  const a = plotArea();
  const lastRound = Math.max(...series.map((s) => s.rounds[s.rounds.length - 1]));
  const firstRound = Math.min(...series.map((s) => s.rounds[0]));
  const xs = linearScale(firstRound, lastRound, a.x0, a.x1);
  const ys = linearScale(0, 100, a.y0, a.y1);

  const svg = new Svg();
  chartFrame(
    svg,
    "learning curves",
    "round",
    "average UA (%)",
    integerTicks(firstRound, lastRound),
    [0, 20, 40, 60, 80, 100].map((v) => ({ v, label: String(v) })),
    xs,
    ys,
  );
  series.forEach((s, k) => {
    const color = PALETTE[k % PALETTE.length];
    if (s.n > 1) {
      const upper = s.rounds.map((r, i): [number, number] => [xs(r), ys(s.mean[i] + s.std[i])]);
      const lower = s.rounds.map((r, i): [number, number] => [xs(r), ys(s.mean[i] - s.std[i])]);
      svg.polygon([...upper, ...lower.reverse()], color, 0.18);
    }
    svg.polyline(s.rounds.map((r, i): [number, number] => [xs(r), ys(s.mean[i])]), color);
  });
  // legend, input order, top-left of the plot area
  series.forEach((s, k) => {
    const y = a.y1 + 14 + 16 * k;
    svg.rect(a.x0 + 8, y - 9, 18, 4, PALETTE[k % PALETTE.length]);
    svg.text(a.x0 + 32, y, s.n > 1 ? `${s.label} (${s.n} seeds)` : s.label, "start", 12);
  });
  return svg.render();
}
