/**
 * Minimal deterministic SVG builder: linear scales, 1-2-5 ticks, polylines,
 * filled bands, markers, multi-panel layout.  Output depends only on the
 * input numbers (fixed precision, no timestamps), so re-renders are
 * byte-stable.
 */

export const COLORS = {
  process: "#1f77c8", // underlying projected process
  measurement: "#d62728",
  filtered: "#2ca02c",
  band: "#f7c5d8", // 95% band fill
  axis: "#222222",
  grid: "#dddddd",
};

export function fmt(x: number): string {
  if (!Number.isFinite(x)) return "0";
  if (x === 0) return "0";
  const s = x.toPrecision(6);
  return s.includes(".") ? s.replace(/\.?0+($|e)/, "$1") : s;
}

export interface Scale {
  (x: number): number;
  domain: [number, number];
  range: [number, number];
  invert(y: number): number;
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 === 0 ? 1 : d1 - d0;
  const scale = ((x: number) => r0 + ((x - d0) / span) * (r1 - r0)) as Scale;
  scale.domain = domain;
  scale.range = range;
  scale.invert = (y: number) => d0 + ((y - r0) / (r1 - r0 === 0 ? 1 : r1 - r0)) * span;
  return scale;
}

export function ticks(lo: number, hi: number, count = 5): number[] {
  if (!(hi > lo)) return [lo];
  const step0 = (hi - lo) / Math.max(count, 1);
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (m * mag >= step0) {
      step = m * mag;
      break;
    }
  }
  const start = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let t = start; t <= hi + 1e-12 * step; t += step) {
    out.push(Math.abs(t) < 1e-12 * step ? 0 : t);
  }
  return out;
}

export function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (!Number.isFinite(v)) continue;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo > hi) return [0, 1];
  if (lo === hi) return [lo - 1, hi + 1];
  return [lo, hi];
}

export function padded(e: [number, number], frac = 0.06): [number, number] {
  const pad = (e[1] - e[0]) * frac;
  return [e[0] - pad, e[1] + pad];
}

export class SvgDoc {
  private parts: string[] = [];

  constructor(readonly width: number, readonly height: number) {
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
        `height="${height}" viewBox="0 0 ${width} ${height}" ` +
        `font-family="sans-serif">`,
      `<rect width="${width}" height="${height}" fill="white"/>`,
    );
  }

  raw(s: string): void {
    this.parts.push(s);
  }

  polyline(xs: number[], ys: number[], stroke: string, widthPx = 1.2): void {
    const pts = xs.map((x, i) => `${fmt(x)},${fmt(ys[i])}`).join(" ");
    this.parts.push(
      `<polyline points="${pts}" fill="none" stroke="${stroke}" stroke-width="${widthPx}"/>`,
    );
  }

  /** Filled band between (xs, lo) and (xs, hi). */
  band(xs: number[], lo: number[], hi: number[], fill: string, cls = "band"): void {
    const fwd = xs.map((x, i) => `${fmt(x)},${fmt(hi[i])}`);
    const back = xs.map((x, i) => `${fmt(x)},${fmt(lo[i])}`).reverse();
    this.parts.push(
      `<polygon class="${cls}" points="${fwd.concat(back).join(" ")}" ` +
        `fill="${fill}" stroke="none" opacity="0.85"/>`,
    );
  }

  dots(xs: number[], ys: number[], fill: string, r = 2.4): void {
    for (let i = 0; i < xs.length; i++) {
      this.parts.push(
        `<circle cx="${fmt(xs[i])}" cy="${fmt(ys[i])}" r="${r}" fill="${fill}"/>`,
      );
    }
  }

  text(x: number, y: number, s: string, size = 11, anchor = "middle"): void {
    this.parts.push(
      `<text x="${fmt(x)}" y="${fmt(y)}" font-size="${size}" ` +
        `text-anchor="${anchor}" fill="${COLORS.axis}">${s}</text>`,
    );
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, w = 1): void {
    this.parts.push(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" ` +
        `stroke="${stroke}" stroke-width="${w}"/>`,
    );
  }

  toString(): string {
    return this.parts.join("\n") + "\n</svg>\n";
  }
}

export interface Panel {
  x: Scale;
  y: Scale;
}

/** Axes + ticks + frame for one panel; returns the data scales. */
export function drawPanel(
  doc: SvgDoc,
  box: { left: number; top: number; width: number; height: number },
  xDomain: [number, number],
  yDomain: [number, number],
  opts: { title?: string; xLabel?: string; yLabel?: string } = {},
): Panel {
  const x = linearScale(xDomain, [box.left, box.left + box.width]);
  const y = linearScale(yDomain, [box.top + box.height, box.top]);
  for (const t of ticks(xDomain[0], xDomain[1])) {
    const px = x(t);
    doc.line(px, box.top, px, box.top + box.height, COLORS.grid, 0.6);
    doc.text(px, box.top + box.height + 14, trimTick(t));
  }
  for (const t of ticks(yDomain[0], yDomain[1])) {
    const py = y(t);
    doc.line(box.left, py, box.left + box.width, py, COLORS.grid, 0.6);
    doc.text(box.left - 6, py + 3.5, trimTick(t), 10, "end");
  }
  doc.raw(
    `<rect x="${fmt(box.left)}" y="${fmt(box.top)}" width="${fmt(box.width)}" ` +
      `height="${fmt(box.height)}" fill="none" stroke="${COLORS.axis}"/>`,
  );
  if (opts.title) doc.text(box.left + box.width / 2, box.top - 6, opts.title, 12);
  if (opts.xLabel) {
    doc.text(box.left + box.width / 2, box.top + box.height + 30, opts.xLabel);
  }
  if (opts.yLabel) {
    doc.raw(
      `<text x="${fmt(box.left - 34)}" y="${fmt(box.top + box.height / 2)}" ` +
        `font-size="11" text-anchor="middle" fill="${COLORS.axis}" ` +
        `transform="rotate(-90 ${fmt(box.left - 34)} ${fmt(box.top + box.height / 2)})">` +
        `${opts.yLabel}</text>`,
    );
  }
  return { x, y };
}

function trimTick(t: number): string {
  const r = Math.round(t * 1e9) / 1e9;
  return String(r);
}
