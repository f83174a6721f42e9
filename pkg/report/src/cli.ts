#!/usr/bin/env node
/**
 * Figure generator for experiment metrics files.
 *
 * usage:
 *   plot curves --in a.csv --in b.csv [--labels x,y] --out fig.svg
 *   plot fairness --in a.csv [--bucket-width 10] [--window W] --out fig.svg
 *   plot schedule --in a.csv --out fig.svg
 *
 * The output file is written only after a successful render, so a failed
 * invocation never leaves a partial or stale-looking image behind.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { basename, extname } from "node:path";
import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";

import { parseMetricsCsv } from "./csv.js";
import { defaultWindow } from "./metrics.js";
import { LabeledTable, curveSeries, renderCurves } from "./curves.js";
import { fairnessFigure } from "./fairness.js";
import { renderSchedule, scheduleGrid } from "./schedule.js";

const KINDS = "curves|fairness|schedule";

function intFlag(raw: string, flag: string): number {
  if (!/^\d+$/.test(raw)) {
    throw new Error(`${flag} must be a positive integer, got '${raw}'`);
  }
  return Number(raw);
}

function run(argv: string[]): number {
  const { values, positionals } = parseArgs({
    args: argv,
    allowPositionals: true,
    options: {
      in: { type: "string", multiple: true },
      labels: { type: "string" },
      out: { type: "string" },
      "bucket-width": { type: "string", default: "10" },
      window: { type: "string" },
    },
  });
  if (positionals.length !== 1) {
    throw new Error(`expected exactly one figure kind (${KINDS})`);
  }
  const kind = positionals[0];
  const files = values.in ?? [];
  if (files.length === 0) {
    throw new Error("at least one --in file is required");
  }
  const out = values.out;
  if (out === undefined) {
    throw new Error("--out is required");
  }
  if (extname(out) !== ".svg") {
    throw new Error(`only .svg output is supported, got '${out}'`);
  }

  const tables = files.map((f) => parseMetricsCsv(readFileSync(f, "utf8"), f));

  let figure: string;
  if (kind === "curves") {
    const labels =
      values.labels === undefined
        ? files.map((f) => basename(f, extname(f)))
        : values.labels.split(",");
    if (labels.length !== files.length) {
      throw new Error(`got ${labels.length} labels for ${files.length} input files`);
    }
    const inputs: LabeledTable[] = tables.map((table, i) => ({ label: labels[i], table }));
    figure = renderCurves(curveSeries(inputs));
  } else if (kind === "fairness") {
    if (tables.length !== 1) {
      throw new Error(`fairness takes exactly one --in file, got ${tables.length}`);
    }
    const window =
      values.window === undefined
        ? defaultWindow(tables[0])
        : intFlag(values.window, "--window");
    figure = fairnessFigure(tables[0], intFlag(values["bucket-width"], "--bucket-width"), window);
  } else if (kind === "schedule") {
    if (tables.length !== 1) {
      throw new Error(`schedule takes exactly one --in file, got ${tables.length}`);
    }
    figure = renderSchedule(scheduleGrid(tables[0]));
  } else {
    throw new Error(`unknown figure kind '${kind}' (${KINDS})`);
  }

  writeFileSync(out, figure);
  process.stdout.write(`wrote ${out}\n`);
  return 0;
}

export function main(argv: string[]): number {
  try {
    return run(argv);
  } catch (e) {
    process.stderr.write(`error: ${(e as Error).message}\n`);
    return 1;
  }
}

if (process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(main(process.argv.slice(2)));
}
