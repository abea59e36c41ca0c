// Deterministic SVG line-chart renderer: fixed canvas, fixed fonts,
// fixed ordering and number formatting, no timestamps - re-rendering the
// same chart model yields byte-identical output.

import { ChartModel, fmtNum, niceTicks } from "./chart.js";

export const WIDTH = 760;
export const HEIGHT = 500;
const MARGIN = { left: 78, right: 24, top: 46, bottom: 64 };

function xml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function px(v: number): string {
  return v.toFixed(2).replace(/\.?0+$/, "");
}

export function renderSvg(model: ChartModel): string {
  const innerW = WIDTH - MARGIN.left - MARGIN.right;
  const innerH = HEIGHT - MARGIN.top - MARGIN.bottom;
  const xs = model.series.flatMap((s) => s.points.map((p) => p.x));
  const ys = model.series.flatMap((s) =>
    s.points.flatMap((p) => [p.y - p.err, p.y + p.err]));
  const xAxis = niceTicks(Math.min(...xs), Math.max(...xs));
  const yLo = Math.min(0, ...ys);
  const yAxis = niceTicks(yLo, Math.max(...ys));
  const sx = (v: number) =>
    MARGIN.left + ((v - xAxis.min) / (xAxis.max - xAxis.min)) * innerW;
  const sy = (v: number) =>
    MARGIN.top + innerH - ((v - yAxis.min) / (yAxis.max - yAxis.min)) * innerH;

  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" ` +
             `height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`);
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
  parts.push(`<text x="${WIDTH / 2}" y="24" text-anchor="middle" ` +
             `font-family="Helvetica,Arial,sans-serif" font-size="15">` +
             `${xml(model.title)}</text>`);

  // gridlines and tick labels
  for (const t of yAxis.ticks) {
    const y = sy(t);
    parts.push(`<line x1="${px(MARGIN.left)}" y1="${px(y)}" ` +
               `x2="${px(WIDTH - MARGIN.right)}" y2="${px(y)}" ` +
               `stroke="#dddddd" stroke-width="1"/>`);
    parts.push(`<text x="${px(MARGIN.left - 8)}" y="${px(y + 4)}" ` +
               `text-anchor="end" font-family="Helvetica,Arial,sans-serif" ` +
               `font-size="11">${fmtNum(t)}</text>`);
  }
  for (const t of xAxis.ticks) {
    const x = sx(t);
    parts.push(`<line x1="${px(x)}" y1="${px(MARGIN.top + innerH)}" ` +
               `x2="${px(x)}" y2="${px(MARGIN.top + innerH + 5)}" ` +
               `stroke="#333333" stroke-width="1"/>`);
    parts.push(`<text x="${px(x)}" y="${px(MARGIN.top + innerH + 20)}" ` +
               `text-anchor="middle" font-family="Helvetica,Arial,sans-serif" ` +
               `font-size="11">${fmtNum(t)}</text>`);
  }
  parts.push(`<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${innerW}" ` +
             `height="${innerH}" fill="none" stroke="#333333" stroke-width="1"/>`);
  parts.push(`<text x="${WIDTH / 2}" y="${HEIGHT - 18}" text-anchor="middle" ` +
             `font-family="Helvetica,Arial,sans-serif" font-size="13">` +
             `${xml(model.xLabel)}</text>`);
  parts.push(`<text x="20" y="${MARGIN.top + innerH / 2}" text-anchor="middle" ` +
             `font-family="Helvetica,Arial,sans-serif" font-size="13" ` +
             `transform="rotate(-90 20 ${MARGIN.top + innerH / 2})">` +
             `${xml(model.yLabel)}</text>`);

  // series: error bars, polyline, square markers
  for (const s of model.series) {
    for (const p of s.points) {
      if (p.err > 0) {
        const x = sx(p.x);
        parts.push(`<line x1="${px(x)}" y1="${px(sy(p.y - p.err))}" ` +
                   `x2="${px(x)}" y2="${px(sy(p.y + p.err))}" ` +
                   `stroke="${s.color}" stroke-width="1.2"/>`);
        for (const e of [p.y - p.err, p.y + p.err]) {
          parts.push(`<line x1="${px(x - 4)}" y1="${px(sy(e))}" ` +
                     `x2="${px(x + 4)}" y2="${px(sy(e))}" ` +
                     `stroke="${s.color}" stroke-width="1.2"/>`);
        }
      }
    }
    const path = s.points.map((p, i) =>
      `${i === 0 ? "M" : "L"}${px(sx(p.x))} ${px(sy(p.y))}`).join(" ");
    parts.push(`<path d="${path}" fill="none" stroke="${s.color}" ` +
               `stroke-width="2"/>`);
    for (const p of s.points) {
      parts.push(`<rect x="${px(sx(p.x) - 3)}" y="${px(sy(p.y) - 3)}" ` +
                 `width="6" height="6" fill="${s.color}"/>`);
    }
  }

  // legend, top-left inside the plot area
  let ly = MARGIN.top + 14;
  for (const s of model.series) {
    parts.push(`<line x1="${MARGIN.left + 12}" y1="${px(ly - 4)}" ` +
               `x2="${MARGIN.left + 40}" y2="${px(ly - 4)}" ` +
               `stroke="${s.color}" stroke-width="2"/>`);
    parts.push(`<text x="${MARGIN.left + 46}" y="${px(ly)}" ` +
               `font-family="Helvetica,Arial,sans-serif" font-size="12">` +
               `${xml(s.label)}</text>`);
    ly += 18;
  }
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
