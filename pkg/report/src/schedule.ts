/**
 * Distillation-boundary heatmap: which layer each client distilled at in
 * each round. Cells are blank when a client sat the round out (and in
 * round 0, the pre-training snapshot). A pinned-boundary run renders in a
 * single color; the adaptive schedule shows deepening steps.
 */

import { MetricsTable } from "./csv.js";
import { Svg, PALETTE, chartFrame, integerTicks, linearScale, plotArea } from "./svg.js";

export interface ScheduleGrid {
  rounds: number[];
  clientIds: number[];
  layers: Array<Array<number | null>>; // [round][client]
  layerValues: number[]; // distinct, ascending
}

export function scheduleGrid(t: MetricsTable): ScheduleGrid {
  const layers = t.rounds.map((g) => g.clients.map((c) => c.distillLayer));
  const seen = new Set<number>();
  for (const row of layers) {
    for (const v of row) {
      if (v !== null) {
        seen.add(v);
      }
    }
  }
  return {
    rounds: t.rounds.map((g) => g.round),
    clientIds: t.clientIds,
    layers,
    layerValues: [...seen].sort((a, b) => a - b),
  };
}

export function renderSchedule(grid: ScheduleGrid): string {
  const a = plotArea();
  const xs = linearScale(grid.rounds[0], grid.rounds[grid.rounds.length - 1] + 1, a.x0, a.x1);
  const ys = linearScale(0, grid.clientIds.length, a.y0, a.y1);
  const color = new Map(grid.layerValues.map((v, i) => [v, PALETTE[i % PALETTE.length]]));

  const svg = new Svg();
  chartFrame(
    svg,
    "distillation boundary by round",
    "round",
    "client",
    integerTicks(grid.rounds[0], grid.rounds[grid.rounds.length - 1]),
    grid.clientIds.map((id, j) => ({ v: j + 0.5, label: String(id) })),
    xs,
    ys,
  );
  const cw = xs(grid.rounds[0] + 1) - xs(grid.rounds[0]);
  const ch = ys(0) - ys(1);
  grid.layers.forEach((row, i) => {
    row.forEach((v, j) => {
      if (v === null) {
        return;
      }
      svg.rect(xs(grid.rounds[i]), ys(j + 1), cw - 1, ch - 1, color.get(v)!);
    });
  });
  if (grid.layerValues.length === 0) {
    svg.text((a.x0 + a.x1) / 2, (a.y0 + a.y1) / 2, "no boundaries logged", "middle", 13);
  } else {
    // legend backing so top-right cells stay readable underneath
    svg.rect(a.x1 - 98, a.y1 + 2, 98, 16 * grid.layerValues.length + 8, "#ffffff");
  }
  grid.layerValues.forEach((v, i) => {
    const y = a.y1 + 14 + 16 * i;
    svg.rect(a.x1 - 92, y - 9, 12, 12, color.get(v)!);
    svg.text(a.x1 - 74, y, `layer ${v}`, "start", 12);
  });
  return svg.render();
}
