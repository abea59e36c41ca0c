// Minimal deterministic rasterizer + PNG encoder for the chart model.
//
// The raster mirrors the SVG geometry: axes box, gridlines, error bars,
// polylines, square markers and a built-in 5x7 bitmap font (lowercase
// maps onto uppercase shapes). Only node:zlib is needed; the encoder
// writes 8-bit RGBA scanlines with filter 0 and a fixed deflate level,
// so identical inputs produce identical bytes.

import * as zlib from "node:zlib";
import { ChartModel, fmtNum, niceTicks } from "./chart.js";
import { HEIGHT, WIDTH } from "./svg.js";

const MARGIN = { left: 78, right: 24, top: 46, bottom: 64 };

type RGB = [number, number, number];

function hex(color: string): RGB {
  return [parseInt(color.slice(1, 3), 16), parseInt(color.slice(3, 5), 16),
          parseInt(color.slice(5, 7), 16)];
}

class Canvas {
  data: Uint8Array;

  constructor(readonly w: number, readonly h: number) {
    this.data = new Uint8Array(w * h * 4).fill(255);
  }

  set(x: number, y: number, [r, g, b]: RGB) {
    x = Math.round(x);
    y = Math.round(y);
    if (x < 0 || y < 0 || x >= this.w || y >= this.h) return;
    const o = (y * this.w + x) * 4;
    this.data[o] = r;
    this.data[o + 1] = g;
    this.data[o + 2] = b;
    this.data[o + 3] = 255;
  }

  line(x0: number, y0: number, x1: number, y1: number, c: RGB, width = 1) {
    const dx = Math.abs(x1 - x0), dy = Math.abs(y1 - y0);
    const steps = Math.max(dx, dy, 1);
    for (let i = 0; i <= steps; i++) {
      const x = x0 + ((x1 - x0) * i) / steps;
      const y = y0 + ((y1 - y0) * i) / steps;
      this.set(x, y, c);
      if (width > 1) {
        if (dx >= dy) this.set(x, y + 1, c);
        else this.set(x + 1, y, c);
      }
    }
  }

  rect(x: number, y: number, w: number, h: number, c: RGB) {
    for (let j = 0; j < h; j++) {
      for (let i = 0; i < w; i++) this.set(x + i, y + j, c);
    }
  }
}

// Classic 5x7 dot-matrix glyphs, rows top to bottom, bit 4 = left column.
const FONT: Record<string, number[]> = {
  "0": [0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e],
  "1": [0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e],
  "2": [0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f],
  "3": [0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e],
  "4": [0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02],
  "5": [0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e],
  "6": [0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e],
  "7": [0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
  "8": [0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e],
  "9": [0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c],
  A: [0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11],
  B: [0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e],
  C: [0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e],
  D: [0x1c, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1c],
  E: [0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f],
  F: [0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10],
  G: [0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f],
  H: [0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11],
  I: [0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e],
  J: [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c],
  K: [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
  L: [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f],
  M: [0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11],
  N: [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11],
  O: [0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e],
  P: [0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10],
  Q: [0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d],
  R: [0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11],
  S: [0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e],
  T: [0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
  U: [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e],
  V: [0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04],
  W: [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0a],
  X: [0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11],
  Y: [0x11, 0x11, 0x0a, 0x04, 0x04, 0x04, 0x04],
  Z: [0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f],
  " ": [0, 0, 0, 0, 0, 0, 0],
  "-": [0, 0, 0, 0x1f, 0, 0, 0],
  "+": [0, 0x04, 0x04, 0x1f, 0x04, 0x04, 0],
  ".": [0, 0, 0, 0, 0, 0x0c, 0x0c],
  ",": [0, 0, 0, 0, 0x0c, 0x04, 0x08],
  ":": [0, 0x0c, 0x0c, 0, 0x0c, 0x0c, 0],
  "=": [0, 0, 0x1f, 0, 0x1f, 0, 0],
  "/": [0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10],
  "(": [0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02],
  ")": [0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08],
  "[": [0x0e, 0x08, 0x08, 0x08, 0x08, 0x08, 0x0e],
  "]": [0x0e, 0x02, 0x02, 0x02, 0x02, 0x02, 0x0e],
  "%": [0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03],
  "_": [0, 0, 0, 0, 0, 0, 0x1f],
};

function drawText(cv: Canvas, x: number, y: number, text: string, c: RGB,
                  anchor: "start" | "middle" | "end" = "start") {
  const glyphW = 6;
  const width = text.length * glyphW;
  let cx = anchor === "start" ? x : anchor === "middle" ? x - width / 2 : x - width;
  for (const ch of text) {
    const rows = FONT[ch] ?? FONT[ch.toUpperCase()] ?? FONT[" "];
    for (let r = 0; r < 7; r++) {
      for (let b = 0; b < 5; b++) {
        if ((rows[r] >> (4 - b)) & 1) cv.set(cx + b, y - 7 + r, c);
      }
    }
    cx += glyphW;
  }
}

// --- PNG encoding ----------------------------------------------------------

const CRC_TABLE = (() => {
  const t = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    t[n] = c >>> 0;
  }
  return t;
})();

function crc32(buf: Uint8Array): number {
  let c = 0xffffffff;
  for (const byte of buf) c = CRC_TABLE[(c ^ byte) & 0xff] ^ (c >>> 8);
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, payload: Uint8Array): Buffer {
  const head = Buffer.alloc(8);
  head.writeUInt32BE(payload.length, 0);
  head.write(type, 4, "ascii");
  const body = Buffer.concat([Buffer.from(type, "ascii"), Buffer.from(payload)]);
  const tail = Buffer.alloc(4);
  tail.writeUInt32BE(crc32(body), 0);
  return Buffer.concat([head, Buffer.from(payload), tail]);
}

export function encodePng(cv: Canvas): Buffer {
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(cv.w, 0);
  ihdr.writeUInt32BE(cv.h, 4);
  ihdr[8] = 8;      // bit depth
  ihdr[9] = 6;      // RGBA
  const raw = Buffer.alloc(cv.h * (cv.w * 4 + 1));
  for (let y = 0; y < cv.h; y++) {
    raw[y * (cv.w * 4 + 1)] = 0;     // filter: none
    Buffer.from(cv.data.buffer, y * cv.w * 4, cv.w * 4)
      .copy(raw, y * (cv.w * 4 + 1) + 1);
  }
  const idat = zlib.deflateSync(raw, { level: 9 });
  return Buffer.concat([
    Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]),
    chunk("IHDR", ihdr),
    chunk("IDAT", idat),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

// --- chart drawing ---------------------------------------------------------

const BLACK: RGB = [34, 34, 34];
const GRID: RGB = [221, 221, 221];

export function renderPng(model: ChartModel): Buffer {
  const cv = new Canvas(WIDTH, HEIGHT);
  const innerW = WIDTH - MARGIN.left - MARGIN.right;
  const innerH = HEIGHT - MARGIN.top - MARGIN.bottom;
  const xs = model.series.flatMap((s) => s.points.map((p) => p.x));
  const ys = model.series.flatMap((s) =>
    s.points.flatMap((p) => [p.y - p.err, p.y + p.err]));
  const xAxis = niceTicks(Math.min(...xs), Math.max(...xs));
  const yAxis = niceTicks(Math.min(0, ...ys), Math.max(...ys));
  const sx = (v: number) =>
    MARGIN.left + ((v - xAxis.min) / (xAxis.max - xAxis.min)) * innerW;
  const sy = (v: number) =>
    MARGIN.top + innerH - ((v - yAxis.min) / (yAxis.max - yAxis.min)) * innerH;

  drawText(cv, WIDTH / 2, 26, model.title, BLACK, "middle");
  for (const t of yAxis.ticks) {
    cv.line(MARGIN.left, sy(t), WIDTH - MARGIN.right, sy(t), GRID);
    drawText(cv, MARGIN.left - 8, sy(t) + 3, fmtNum(t), BLACK, "end");
  }
  for (const t of xAxis.ticks) {
    cv.line(sx(t), MARGIN.top + innerH, sx(t), MARGIN.top + innerH + 5, BLACK);
    drawText(cv, sx(t), MARGIN.top + innerH + 20, fmtNum(t), BLACK, "middle");
  }
  // plot frame
  cv.line(MARGIN.left, MARGIN.top, WIDTH - MARGIN.right, MARGIN.top, BLACK);
  cv.line(MARGIN.left, MARGIN.top + innerH, WIDTH - MARGIN.right,
          MARGIN.top + innerH, BLACK);
  cv.line(MARGIN.left, MARGIN.top, MARGIN.left, MARGIN.top + innerH, BLACK);
  cv.line(WIDTH - MARGIN.right, MARGIN.top, WIDTH - MARGIN.right,
          MARGIN.top + innerH, BLACK);
  drawText(cv, WIDTH / 2, HEIGHT - 18, model.xLabel, BLACK, "middle");
  drawText(cv, 16, MARGIN.top - 10, model.yLabel, BLACK, "start");

  for (const s of model.series) {
    const c = hex(s.color);
    for (const p of s.points) {
      if (p.err > 0) {
        cv.line(sx(p.x), sy(p.y - p.err), sx(p.x), sy(p.y + p.err), c);
        cv.line(sx(p.x) - 4, sy(p.y - p.err), sx(p.x) + 4, sy(p.y - p.err), c);
        cv.line(sx(p.x) - 4, sy(p.y + p.err), sx(p.x) + 4, sy(p.y + p.err), c);
      }
    }
    for (let i = 1; i < s.points.length; i++) {
      cv.line(sx(s.points[i - 1].x), sy(s.points[i - 1].y),
              sx(s.points[i].x), sy(s.points[i].y), c, 2);
    }
    for (const p of s.points) cv.rect(sx(p.x) - 3, sy(p.y) - 3, 6, 6, c);
  }

  let ly = MARGIN.top + 16;
  for (const s of model.series) {
    const c = hex(s.color);
    cv.line(MARGIN.left + 12, ly - 3, MARGIN.left + 40, ly - 3, c, 2);
    drawText(cv, MARGIN.left + 46, ly, s.label, BLACK, "start");
    ly += 16;
  }
  return encodePng(cv);
}

export { Canvas };
