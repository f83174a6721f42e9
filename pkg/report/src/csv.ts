/**
 * Strict reader for the experiment metrics CSV.
 *
 * The schema is fixed: one header line, then one row per (round, client)
 * with empty cells for unlogged optionals. Every round lists every client
 * exactly once; round 0 is the pre-training snapshot. All diagnostics name
 * the source and, for row problems, the 1-based line number.
 */

export const HEADER = "round,client_id,selected,test_acc,distill_layer,loss_kl,loss_ce";

export interface ClientRow {
  round: number;
  clientId: number;
  selected: boolean;
  testAcc: number;
  distillLayer: number | null;
  lossKl: number | null;
  lossCe: number | null;
}

export interface RoundGroup {
  round: number;
  clients: ClientRow[]; // sorted by clientId
}

export interface MetricsTable {
  source: string;
  rounds: RoundGroup[]; // sorted by round
  clientIds: number[];
}

export class CsvError extends Error {}

function intCell(raw: string, what: string, where: string): number {
  if (!/^-?\d+$/.test(raw)) {
    throw new CsvError(`${where}: ${what} must be an integer, got '${raw}'`);
  }
  return Number(raw);
}

function floatCell(raw: string, what: string, where: string): number {
  const v = Number(raw);
  if (raw.trim() === "" || !Number.isFinite(v)) {
    throw new CsvError(`${where}: ${what} must be a finite number, got '${raw}'`);
  }
  return v;
}

export function parseMetricsCsv(text: string, source = "<csv>"): MetricsTable {
  const lines = text.split(/\r?\n/).filter((l) => l.trim() !== "");
  if (lines.length === 0) {
    throw new CsvError(`${source}: metrics csv is empty`);
  }
  const got = lines[0].trim().split(",");
  const want = HEADER.split(",");
  for (const col of want) {
    if (!got.includes(col)) {
      throw new CsvError(`${source}: missing column '${col}'`);
    }
  }
  if (got.join(",") !== HEADER) {
    throw new CsvError(`${source}: header '${lines[0]}' does not match '${HEADER}'`);
  }

  const byRound = new Map<number, ClientRow[]>();
  for (let i = 1; i < lines.length; i++) {
    const where = `${source} line ${i + 1}`;
    const cells = lines[i].split(",");
    if (cells.length !== want.length) {
      throw new CsvError(`${where}: expected ${want.length} cells, got ${cells.length}`);
    }
    const selRaw = cells[2];
    if (selRaw !== "0" && selRaw !== "1") {
      throw new CsvError(`${where}: selected must be 0 or 1, got '${selRaw}'`);
    }
    const row: ClientRow = {
      round: intCell(cells[0], "round", where),
      clientId: intCell(cells[1], "client_id", where),
      selected: selRaw === "1",
      testAcc: floatCell(cells[3], "test_acc", where),
      distillLayer: cells[4] === "" ? null : intCell(cells[4], "distill_layer", where),
      lossKl: cells[5] === "" ? null : floatCell(cells[5], "loss_kl", where),
      lossCe: cells[6] === "" ? null : floatCell(cells[6], "loss_ce", where),
    };
    const group = byRound.get(row.round);
    if (group === undefined) {
      byRound.set(row.round, [row]);
    } else {
      group.push(row);
    }
  }

  const rounds: RoundGroup[] = [...byRound.keys()]
    .sort((a, b) => a - b)
    .map((r) => ({
      round: r,
      clients: byRound.get(r)!.sort((a, b) => a.clientId - b.clientId),
    }));
  if (rounds.length === 0) {
    throw new CsvError(`${source}: no data rows after the header`);
  }
  const ids = rounds[0].clients.map((c) => c.clientId);
  for (const g of rounds) {
    const here = g.clients.map((c) => c.clientId);
    if (here.length !== ids.length || here.some((id, k) => id !== ids[k])) {
      throw new CsvError(
        `${source}: round ${g.round} lists clients [${here}] but round ${rounds[0].round} lists [${ids}]`,
      );
    }
  }
  if (new Set(ids).size !== ids.length) {
    throw new CsvError(`${source}: duplicate client rows in round ${rounds[0].round}`);
  }
  return { source, rounds, clientIds: ids };
}
