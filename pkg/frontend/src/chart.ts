// Chart model: one line series per scheme with symmetric error bars,
// assembled purely from the harness aggregate rows.

import { MetricColumn, Row } from "./csv.js";

export interface Point {
  x: number;
  y: number;
  err: number;
}

export interface Series {
  scheme: string;
  label: string;
  color: string;
  points: Point[];
}

export interface ChartModel {
  title: string;
  xLabel: string;
  yLabel: string;
  series: Series[];
}

// Fixed palette and ordering keep renders deterministic.
const SCHEME_ORDER = ["proposed", "baseline_mrt", "baseline_isotropic"];
const SCHEME_LABEL: Record<string, string> = {
  proposed: "proposed",
  baseline_mrt: "baseline 1 (MRT-BF)",
  baseline_isotropic: "baseline 2 (isotropic AN)",
};
const SCHEME_COLOR: Record<string, string> = {
  proposed: "#c23a2b",
  baseline_mrt: "#2b6cc2",
  baseline_isotropic: "#3a9943",
};

const AXIS_LABEL: Record<string, string> = {
  p_max_dbm: "maximum DL transmit power [dBm]",
  user_count: "number of DL users = UL users",
  n_tx: "transmit antennas",
  m_eve: "eavesdropper antennas",
};

const METRIC_LABEL: Record<string, string> = {
  utility_bps_hz: "average system throughput [bits/s/Hz]",
  secrecy_bps_hz: "average system secrecy throughput [bits/s/Hz]",
};

export function buildChart(rows: Row[], metric: MetricColumn,
                           title?: string, xLabel?: string,
                           yLabel?: string): ChartModel {
  const means = rows.filter((r) => r.rowKind === "mean");
  if (means.length === 0) {
    throw new Error("no aggregate (mean) rows in the CSV; cannot plot");
  }
  const errs = new Map<string, number>();
  for (const r of rows) {
    if (r.rowKind === "stderr") {
      errs.set(`${r.scheme}@${r.sweepValue}`, r[metric]);
    }
  }
  const schemes = SCHEME_ORDER.filter((s) => means.some((r) => r.scheme === s));
  for (const r of means) {
    if (!schemes.includes(r.scheme)) schemes.push(r.scheme);
  }
  const series: Series[] = schemes.map((scheme) => {
    const pts = means
      .filter((r) => r.scheme === scheme && !Number.isNaN(r[metric]))
      .map((r) => ({
        x: r.sweepValue,
        y: r[metric],
        err: errs.get(`${scheme}@${r.sweepValue}`) ?? 0,
      }))
      .sort((a, b) => a.x - b.x);
    return {
      scheme,
      label: SCHEME_LABEL[scheme] ?? scheme,
      color: SCHEME_COLOR[scheme] ?? "#777777",
      points: pts,
    };
  }).filter((s) => s.points.length > 0);
  const axis = means[0].sweepAxis;
  return {
    title: title ?? `${METRIC_LABEL[metric] ?? metric} vs ${AXIS_LABEL[axis] ?? axis}`,
    xLabel: xLabel ?? (AXIS_LABEL[axis] ?? axis),
    yLabel: yLabel ?? (METRIC_LABEL[metric] ?? metric),
    series,
  };
}

export interface AxisTicks {
  min: number;
  max: number;
  ticks: number[];
}

// Tick positions at 1/2/5 decades covering [lo, hi]; degenerate ranges
// expand symmetrically so single-point sweeps still render.
export function niceTicks(lo: number, hi: number, target = 5): AxisTicks {
  if (!(hi > lo)) {
    const pad = Math.max(1, Math.abs(lo) * 0.1);
    lo -= pad;
    hi += pad;
  }
  const span = hi - lo;
  const rawStep = span / Math.max(1, target - 1);
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (mag * m >= rawStep) { step = mag * m; break; }
  }
  const start = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= hi + 1e-9 * step; v += step) {
    ticks.push(Math.abs(v) < 1e-12 * step ? 0 : v);
  }
  return { min: lo, max: hi, ticks };
}

export function fmtNum(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(2);
  const s = v.toPrecision(6);
  return s.includes(".") ? s.replace(/\.?0+$/, "") : s;
}
