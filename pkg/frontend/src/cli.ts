// fdsec-plots: render benchmark CSVs into deterministic SVG + PNG charts.
//
//   fdsec-plots <results.csv> [--metric utility_bps_hz|secrecy_bps_hz]
//                             [--out basename] [--title ...]
//                             [--xlabel ...] [--ylabel ...]
//
// Writes <basename>.svg and <basename>.png (default basename: the CSV
// path without extension). Exits 2 on schema or argument errors, naming
// the offending column.

import * as fs from "node:fs";
import * as path from "node:path";
import { buildChart } from "./chart.js";
import { METRIC_COLUMNS, MetricColumn, SchemaError, parseCsv } from "./csv.js";
import { renderPng } from "./raster.js";
import { renderSvg } from "./svg.js";

interface Args {
  csv: string;
  metric: MetricColumn;
  out: string;
  title?: string;
  xlabel?: string;
  ylabel?: string;
}

export function parseArgs(argv: string[]): Args {
  const positional: string[] = [];
  const opts: Record<string, string> = {};
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a.startsWith("--")) {
      const key = a.slice(2);
      const val = argv[++i];
      if (val === undefined) throw new Error(`missing value for --${key}`);
      opts[key] = val;
    } else {
      positional.push(a);
    }
  }
  if (positional.length !== 1) {
    throw new Error("expected exactly one CSV path");
  }
  const metric = (opts["metric"] ?? "utility_bps_hz") as MetricColumn;
  if (!METRIC_COLUMNS.includes(metric)) {
    throw new Error(
      `--metric must be one of ${METRIC_COLUMNS.join(", ")}, got "${metric}"`);
  }
  const csv = positional[0];
  return {
    csv,
    metric,
    out: opts["out"] ?? csv.replace(/\.csv$/i, ""),
    title: opts["title"],
    xlabel: opts["xlabel"],
    ylabel: opts["ylabel"],
  };
}

export function run(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
  let text: string;
  try {
    text = fs.readFileSync(args.csv, "utf8");
  } catch {
    console.error(`error: cannot read ${args.csv}`);
    return 2;
  }
  try {
    const rows = parseCsv(text);
    const model = buildChart(rows, args.metric, args.title, args.xlabel,
                             args.ylabel);
    const svgPath = `${args.out}.svg`;
    const pngPath = `${args.out}.png`;
    fs.mkdirSync(path.dirname(path.resolve(svgPath)), { recursive: true });
    fs.writeFileSync(svgPath, renderSvg(model));
    fs.writeFileSync(pngPath, renderPng(model));
    console.log(`wrote ${svgPath} and ${pngPath} ` +
                `(${model.series.length} series, metric ${args.metric})`);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`error: CSV schema mismatch: ${err.message}`);
    } else {
      console.error(`error: ${(err as Error).message}`);
    }
    return 2;
  }
}

const isMain = process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${path.resolve(process.argv[1])}`).href;
if (isMain) {
  process.exit(run(process.argv.slice(2)));
}
