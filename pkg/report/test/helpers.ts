import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";

import { MetricsTable, parseMetricsCsv } from "../src/csv.js";

export const ROOT = fileURLToPath(new URL("..", import.meta.url));

export function fixturePath(name: string): string {
  return `${ROOT}fixtures/${name}`;
}

export function fixtureText(name: string): string {
  return readFileSync(fixturePath(name), "utf8");
}

export function loadFixture(name: string): MetricsTable {
  return parseMetricsCsv(fixtureText(name), name);
}

export interface Oracle {
  window: number;
  bucket_width: number;
  files: Record<
    string,
    {
      rounds: number[];
      round_means: number[];
      average_ua: number;
      client_uas: number[];
      fairness: number[];
    }
  >;
  fedd2s_band: { files: string[]; mean: number[]; std: number[] };
}

export function oracle(): Oracle {
  return JSON.parse(fixtureText("oracle.json")) as Oracle;
}

export const SEED_FILES = ["fedd2s_s0.csv", "fedd2s_s1.csv", "fedd2s_s2.csv"];
