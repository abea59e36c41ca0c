// Reader for the benchmark harness CSV (schema version 1).
//
// The harness writes raw per-run rows plus mean/stderr aggregates per
// (sweep_value, scheme); plotting consumes the aggregates only, so the
// two sides can never disagree on statistics.

export const EXPECTED_COLUMNS = [
  "schema_version", "row_kind", "sweep_axis", "sweep_value", "scheme",
  "drop", "seed", "utility_bps_hz", "secrecy_bps_hz", "iters",
  "rank_ratio_max", "binarity_gap", "status", "wall_ms",
] as const;

export const METRIC_COLUMNS = ["utility_bps_hz", "secrecy_bps_hz"] as const;
export type MetricColumn = (typeof METRIC_COLUMNS)[number];

export interface Row {
  schemaVersion: number;
  rowKind: string;
  sweepAxis: string;
  sweepValue: number;
  scheme: string;
  drop: number;
  seed: number;
  utility_bps_hz: number;
  secrecy_bps_hz: number;
  iters: number;
  rank_ratio_max: number;
  binarity_gap: number;
  status: string;
  wall_ms: number;
}

export class SchemaError extends Error {}

export function parseCsv(text: string): Row[] {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError("empty CSV: no header row");
  }
  const header = lines[0].split(",");
  for (let i = 0; i < EXPECTED_COLUMNS.length; i++) {
    if (header[i] !== EXPECTED_COLUMNS[i]) {
      throw new SchemaError(
        `column ${i + 1} is ${JSON.stringify(header[i] ?? "<missing>")}, ` +
        `expected "${EXPECTED_COLUMNS[i]}"`);
    }
  }
  if (header.length !== EXPECTED_COLUMNS.length) {
    throw new SchemaError(
      `unexpected extra column "${header[EXPECTED_COLUMNS.length]}"`);
  }
  const rows: Row[] = [];
  for (let ln = 1; ln < lines.length; ln++) {
    const parts = lines[ln].split(",");
    if (parts.length !== EXPECTED_COLUMNS.length) {
      throw new SchemaError(`row ${ln + 1} has ${parts.length} fields`);
    }
    const num = (idx: number): number => {
      const v = Number(parts[idx]);
      if (Number.isNaN(v) && parts[idx] !== "nan") {
        throw new SchemaError(
          `row ${ln + 1}, column "${EXPECTED_COLUMNS[idx]}": ` +
          `cannot parse ${JSON.stringify(parts[idx])}`);
      }
      return v;
    };
    rows.push({
      schemaVersion: num(0),
      rowKind: parts[1],
      sweepAxis: parts[2],
      sweepValue: num(3),
      scheme: parts[4],
      drop: num(5),
      seed: num(6),
      utility_bps_hz: num(7),
      secrecy_bps_hz: num(8),
      iters: num(9),
      rank_ratio_max: num(10),
      binarity_gap: num(11),
      status: parts[12],
      wall_ms: num(13),
    });
  }
  const bad = rows.find((r) => r.schemaVersion !== 1);
  if (bad) {
    throw new SchemaError(`unsupported schema_version ${bad.schemaVersion}`);
  }
  return rows;
}
