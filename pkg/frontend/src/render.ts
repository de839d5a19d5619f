/**
 * Figure renderers.  Each consumes the documented stiefelkf CSV artifacts
 * and returns a deterministic SVG string.
 *
 * Conventions follow the coordinate-figure captions: the underlying
 * projected process in blue, measurements in red, the filtered mean in
 * green with a pink 95% band (mean +- 1.96 sqrt(P)).
 */

import {
  SchemaError,
  Table,
  column,
  coordColumns,
  manifoldSize,
  parseCsv,
  requireProvenance,
} from "./csv.js";
import { COLORS, SvgDoc, drawPanel, extent, padded } from "./svg.js";

export type FigureKind = "coords" | "sphere3d" | "snr" | "eta";

export interface PlotSpec {
  kind: FigureKind;
  inputs: string[]; // CSV file contents, in the documented order
}

export function render(spec: PlotSpec): string {
  switch (spec.kind) {
    case "coords":
      return renderCoords(spec.inputs);
    case "sphere3d":
      return renderSphere3d(spec.inputs);
    case "snr":
      return renderSnr(spec.inputs);
    case "eta":
      return renderEta(spec.inputs);
    default:
      throw new SchemaError(`unknown figure kind "${(spec as PlotSpec).kind}"`);
  }
}

function parseTriple(inputs: string[]): { traj: Table; meas: Table; filt: Table } {
  if (inputs.length !== 3) {
    throw new SchemaError(
      "need three CSVs in order: trajectory, measurements, filtered",
    );
  }
  const [traj, meas, filt] = inputs.map(parseCsv);
  requireProvenance(traj, "trajectory.csv");
  requireProvenance(meas, "measurements.csv");
  requireProvenance(filt, "filtered.csv");
  return { traj, meas, filt };
}

const BAND_FACTOR = 1.96; // 95% interval half-width in units of sqrt(P)

export function renderCoords(inputs: string[]): string {
  const { traj, meas, filt } = parseTriple(inputs);
  const { n, k } = manifoldSize(traj);
  const pCols = coordColumns("p", n, k);
  const zCols = coordColumns("z", n, k);
  const mCols = coordColumns("m", n, k);
  const t = column(traj, "time");
  const tm = column(meas, "time");
  const tf = column(filt, "time");
  const pVar = column(filt, "intrinsic_var");
  const halfWidth = pVar.map((p) => BAND_FACTOR * Math.sqrt(Math.max(p, 0)));

  const perRow = Math.min(n * k, k === 1 ? 3 : 4);
  const nRows = Math.ceil((n * k) / perRow);
  const pw = 240;
  const ph = 170;
  const margin = { left: 56, top: 34, hGap: 34, vGap: 52 };
  const doc = new SvgDoc(
    margin.left + perRow * (pw + margin.hGap),
    margin.top + nRows * (ph + margin.vGap),
  );

  for (let c = 0; c < n * k; c++) {
    const series = column(traj, pCols[c]);
    const zs = meas.rows > 0 ? column(meas, zCols[c]) : [];
    const ms = column(filt, mCols[c]);
    const lo = ms.map((m, i) => m - halfWidth[i]);
    const hi = ms.map((m, i) => m + halfWidth[i]);
    const yDomain = padded(extent([...series, ...zs, ...lo, ...hi]));
    const box = {
      left: margin.left + (c % perRow) * (pw + margin.hGap),
      top: margin.top + Math.floor(c / perRow) * (ph + margin.vGap),
      width: pw,
      height: ph,
    };
    const panel = drawPanel(doc, box, [t[0], t[t.length - 1]], yDomain, {
      title: coordTitle(c, n, k),
      xLabel: "time",
    });
    doc.band(
      tf.map(panel.x),
      lo.map(panel.y),
      hi.map(panel.y),
      COLORS.band,
      `band-${pCols[c].slice(1)}`,
    );
    doc.polyline(t.map(panel.x), series.map(panel.y), COLORS.process);
    if (zs.length > 0) {
      doc.dots(tm.map(panel.x), zs.map(panel.y), COLORS.measurement);
    }
    doc.polyline(tf.map(panel.x), ms.map(panel.y), COLORS.filtered, 1.6);
  }
  return doc.toString();
}

function coordTitle(flat: number, n: number, k: number): string {
  if (k === 1) {
    return ["x", "y", "z"][flat] ?? `x${flat + 1}`;
  }
  const i = Math.floor(flat / k) + 1;
  const j = (flat % k) + 1;
  return `X${i}${j}`;
}

// -- 3-D sphere view ---------------------------------------------------------

const VIEW_AZIMUTH = 0.6;
const VIEW_ELEVATION = 0.35;

function project3d(x: number, y: number, z: number): [number, number] {
  // fixed orthographic camera: rotate about z by the azimuth, then tilt
  const ca = Math.cos(VIEW_AZIMUTH);
  const sa = Math.sin(VIEW_AZIMUTH);
  const ce = Math.cos(VIEW_ELEVATION);
  const se = Math.sin(VIEW_ELEVATION);
  const x1 = ca * x + sa * y;
  const y1 = -sa * x + ca * y;
  return [x1, ce * z - se * y1];
}

export function renderSphere3d(inputs: string[]): string {
  const { traj, meas, filt } = parseTriple(inputs);
  const { n, k } = manifoldSize(traj);
  if (n !== 3 || k !== 1) {
    throw new SchemaError(`sphere3d needs St(3,1) data, got St(${n},${k})`);
  }
  const size = 480;
  const doc = new SvgDoc(size, size);
  const scale = (size / 2) * 0.82;
  const toPx = (p: [number, number]): [number, number] => [
    size / 2 + scale * p[0],
    size / 2 - scale * p[1],
  ];

  doc.raw(
    `<circle cx="${size / 2}" cy="${size / 2}" r="${scale}" fill="none" ` +
      `stroke="${COLORS.grid}" stroke-width="1"/>`,
  );
  // light wireframe: three parallels and six meridians
  for (const lat of [-0.8, 0, 0.8]) {
    const r = Math.cos(Math.asin(lat));
    wirePath(doc, toPx, (s) => [r * Math.cos(s), r * Math.sin(s), lat]);
  }
  for (let m = 0; m < 6; m++) {
    const az = (m * Math.PI) / 6;
    wirePath(doc, toPx, (s) => [
      Math.cos(az) * Math.sin(s),
      Math.sin(az) * Math.sin(s),
      Math.cos(s),
    ]);
  }

  const coords = (table: Table, prefix: string): Array<[number, number]> => {
    const xs = column(table, `${prefix}11`);
    const ys = column(table, `${prefix}21`);
    const zs = column(table, `${prefix}31`);
    return xs.map((x, i) => toPx(project3d(x, ys[i], zs[i])));
  };

  const path = coords(traj, "p");
  doc.polyline(path.map((p) => p[0]), path.map((p) => p[1]), COLORS.process);
  if (meas.rows > 0) {
    const zpts = coords(meas, "z");
    doc.dots(zpts.map((p) => p[0]), zpts.map((p) => p[1]), COLORS.measurement, 3);
  }
  const mpts = coords(filt, "m");
  doc.polyline(mpts.map((p) => p[0]), mpts.map((p) => p[1]), COLORS.filtered, 1.6);
  doc.dots(mpts.map((p) => p[0]), mpts.map((p) => p[1]), COLORS.filtered, 2.4);
  return doc.toString();
}

function wirePath(
  doc: SvgDoc,
  toPx: (p: [number, number]) => [number, number],
  curve: (s: number) => [number, number, number],
): void {
  const xs: number[] = [];
  const ys: number[] = [];
  for (let i = 0; i <= 72; i++) {
    const s = (i / 72) * 2 * Math.PI;
    const [x, y, z] = curve(s);
    const [u, v] = toPx(project3d(x, y, z));
    xs.push(u);
    ys.push(v);
  }
  doc.polyline(xs, ys, COLORS.grid, 0.6);
}

// -- SNR error curves ---------------------------------------------------------

export function renderSnr(inputs: string[]): string {
  if (inputs.length !== 1) {
    throw new SchemaError("snr takes exactly one sweep.csv");
  }
  const sweep = parseCsv(inputs[0]);
  requireProvenance(sweep, "sweep.csv");
  const nu2 = column(sweep, "nu2");
  const snr = column(sweep, "snr_db");
  const measErr = column(sweep, "meas_error");
  const filtErr = column(sweep, "filter_error");

  const groups = [...new Set(nu2)];
  const pw = 300;
  const ph = 190;
  const margin = { left: 58, top: 36, hGap: 40, vGap: 56 };
  const perRow = Math.min(groups.length, 2);
  const nRows = Math.ceil(groups.length / perRow);
  const doc = new SvgDoc(
    margin.left + perRow * (pw + margin.hGap),
    margin.top + nRows * (ph + margin.vGap),
  );

  groups.forEach((g, gi) => {
    const idx = nu2.map((v, i) => [v, i] as const).filter(([v]) => v === g).map(([, i]) => i);
    const xs = idx.map((i) => snr[i]);
    const red = idx.map((i) => measErr[i]);
    const blue = idx.map((i) => filtErr[i]);
    const box = {
      left: margin.left + (gi % perRow) * (pw + margin.hGap),
      top: margin.top + Math.floor(gi / perRow) * (ph + margin.vGap),
      width: pw,
      height: ph,
    };
    const panel = drawPanel(
      doc,
      box,
      padded(extent(xs), 0.04),
      padded([0, Math.max(...red, ...blue)], 0.08),
      { title: `process noise ${g}`, xLabel: "SNR (dB)", yLabel: "mean error" },
    );
    // filtered mean in blue, raw measurements in red
    doc.polyline(xs.map(panel.x), red.map(panel.y), COLORS.measurement, 1.4);
    doc.dots(xs.map(panel.x), red.map(panel.y), COLORS.measurement);
    doc.polyline(xs.map(panel.x), blue.map(panel.y), COLORS.process, 1.4);
    doc.dots(xs.map(panel.x), blue.map(panel.y), COLORS.process);
  });
  return doc.toString();
}

// -- eta curves ----------------------------------------------------------------

const ETA_PALETTE = ["#1f77c8", "#d62728", "#2ca02c", "#9467bd", "#8c564b"];

export function renderEta(inputs: string[]): string {
  if (inputs.length === 0) {
    throw new SchemaError("eta needs at least one eta_curve.csv");
  }
  const tables = inputs.map(parseCsv);
  tables.forEach((t) => requireProvenance(t, "eta_curve.csv"));
  const doc = new SvgDoc(520, 360);
  const allX: number[] = [];
  const allY: number[] = [];
  for (const t of tables) {
    allX.push(...column(t, "sigma2"));
    allY.push(...column(t, "eta"));
  }
  const panel = drawPanel(
    doc,
    { left: 60, top: 30, width: 420, height: 260 },
    padded(extent(allX), 0.03),
    padded([0, extent(allY)[1]], 0.06),
    { xLabel: "ambient variance", yLabel: "intrinsic scalar variance" },
  );
  tables.forEach((t, i) => {
    const xs = column(t, "sigma2").map(panel.x);
    const ys = column(t, "eta").map(panel.y);
    const color = ETA_PALETTE[i % ETA_PALETTE.length];
    doc.polyline(xs, ys, color, 1.6);
    doc.text(xs[xs.length - 1] - 4, ys[ys.length - 1] - 6, etaLabel(t), 10, "end");
  });
  return doc.toString();
}

function etaLabel(t: Table): string {
  for (const c of t.comments) {
    if (c.startsWith("config:")) {
      try {
        const cfg = JSON.parse(c.slice("config:".length));
        const m = cfg.manifold;
        if (m) return m.n === 3 && m.k === 1 ? "sphere" : `St(${m.n},${m.k})`;
      } catch {
        /* unlabeled curve */
      }
    }
  }
  return "curve";
}
