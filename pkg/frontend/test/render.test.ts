import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { beforeAll, describe, expect, it } from "vitest";
import { buildChart, fmtNum, niceTicks } from "../src/chart.js";
import { SchemaError, parseCsv } from "../src/csv.js";
import { renderPng } from "../src/raster.js";
import { renderSvg } from "../src/svg.js";

const FIXTURE = path.join(__dirname, "fixtures", "sample.csv");
const AGG_ONLY = path.join(__dirname, "fixtures", "aggregates_only.csv");

describe("csv parsing", () => {
  it("parses the harness schema", () => {
    const rows = parseCsv(fs.readFileSync(FIXTURE, "utf8"));
    expect(rows.length).toBeGreaterThan(0);
    expect(rows.filter((r) => r.rowKind === "mean").length).toBe(12);
    expect(rows[0].sweepAxis).toBe("p_max_dbm");
  });

  it("names the offending column on schema mismatch", () => {
    const text = fs.readFileSync(FIXTURE, "utf8")
      .replace("rank_ratio_max", "rank_ratio");
    expect(() => parseCsv(text)).toThrowError(/rank_ratio_max/);
  });

  it("rejects unparsable numerics with the column name", () => {
    const lines = fs.readFileSync(FIXTURE, "utf8").split("\n");
    const parts = lines[1].split(",");
    parts[7] = "not-a-number";
    lines[1] = parts.join(",");
    expect(() => parseCsv(lines.join("\n"))).toThrowError(/utility_bps_hz/);
  });
});

describe("chart model", () => {
  it("builds ordered series from aggregates", () => {
    const rows = parseCsv(fs.readFileSync(FIXTURE, "utf8"));
    const model = buildChart(rows, "utility_bps_hz");
    expect(model.series.map((s) => s.scheme)).toEqual(
      ["proposed", "baseline_mrt", "baseline_isotropic"]);
    for (const s of model.series) {
      expect(s.points.map((p) => p.x)).toEqual([30, 35, 40, 45]);
      for (const p of s.points) expect(p.err).toBeGreaterThan(0);
    }
  });

  it("renders from aggregates alone", () => {
    const rows = parseCsv(fs.readFileSync(AGG_ONLY, "utf8"));
    const model = buildChart(rows, "utility_bps_hz");
    expect(model.series.length).toBe(3);
    expect(renderSvg(model)).toContain("<svg");
  });

  it("switches metric columns", () => {
    const rows = parseCsv(fs.readFileSync(FIXTURE, "utf8"));
    const util = buildChart(rows, "utility_bps_hz");
    const sec = buildChart(rows, "secrecy_bps_hz");
    expect(sec.series[0].points[0].y).toBeCloseTo(
      util.series[0].points[0].y * 0.82, 6);
    expect(sec.yLabel).toMatch(/secrecy/);
  });

  it("tick construction covers the range with 1/2/5 steps", () => {
    const t = niceTicks(30, 45);
    expect(t.ticks[0]).toBeGreaterThanOrEqual(30);
    expect(t.ticks[t.ticks.length - 1]).toBeLessThanOrEqual(45 + 1e-9);
    expect(fmtNum(35)).toBe("35");
    expect(fmtNum(0)).toBe("0");
  });
});

describe("deterministic rendering", () => {
  it("re-rendering yields byte-identical vector output", () => {
    const rows = parseCsv(fs.readFileSync(FIXTURE, "utf8"));
    const a = renderSvg(buildChart(rows, "utility_bps_hz"));
    const b = renderSvg(buildChart(rows, "utility_bps_hz"));
    expect(Buffer.from(a).equals(Buffer.from(b))).toBe(true);
    expect(a).toContain("baseline 1 (MRT-BF)");
  });

  it("re-rendering yields byte-identical raster output", () => {
    const rows = parseCsv(fs.readFileSync(FIXTURE, "utf8"));
    const a = renderPng(buildChart(rows, "utility_bps_hz"));
    const b = renderPng(buildChart(rows, "utility_bps_hz"));
    expect(a.equals(b)).toBe(true);
    // PNG magic + IHDR
    expect(a.subarray(0, 8)).toEqual(
      Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]));
  });

  it("proposed series sits above both baselines in the fixture", () => {
    const rows = parseCsv(fs.readFileSync(FIXTURE, "utf8"));
    const model = buildChart(rows, "utility_bps_hz");
    const prop = model.series.find((s) => s.scheme === "proposed")!;
    for (const other of model.series) {
      if (other === prop) continue;
      for (let i = 0; i < prop.points.length; i++) {
        expect(prop.points[i].y).toBeGreaterThan(other.points[i].y);
      }
    }
  });
});

describe("cli", () => {
  const cliPath = path.join(__dirname, "..", "dist", "cli.js");

  beforeAll(() => {
    execFileSync("npx", ["tsc"], { cwd: path.join(__dirname, "..") });
  });

  it("writes svg + png and exits 0", () => {
    const out = fs.mkdtempSync(path.join(os.tmpdir(), "fdsec-plots-"));
    const base = path.join(out, "fig2");
    const stdout = execFileSync(
      process.execPath, [cliPath, FIXTURE, "--out", base], { encoding: "utf8" });
    expect(stdout).toContain("fig2.svg");
    expect(fs.existsSync(`${base}.svg`)).toBe(true);
    expect(fs.existsSync(`${base}.png`)).toBe(true);
  });

  it("exits 2 naming the column on schema mismatch", () => {
    const out = fs.mkdtempSync(path.join(os.tmpdir(), "fdsec-plots-"));
    const badCsv = path.join(out, "bad.csv");
    fs.writeFileSync(badCsv, fs.readFileSync(FIXTURE, "utf8")
      .replace("binarity_gap", "binarity"));
    let code = 0;
    let stderr = "";
    try {
      execFileSync(process.execPath, [cliPath, badCsv], { encoding: "utf8" });
    } catch (err: any) {
      code = err.status;
      stderr = String(err.stderr);
    }
    expect(code).toBe(2);
    expect(stderr).toContain("binarity_gap");
  });

  it("exits 2 on unknown metric", () => {
    let code = 0;
    try {
      execFileSync(process.execPath, [cliPath, FIXTURE, "--metric", "nope"],
                   { encoding: "utf8" });
    } catch (err: any) {
      code = err.status;
    }
    expect(code).toBe(2);
  });
});
