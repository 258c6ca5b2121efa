import { BandPoint } from "./stats";

export interface Curve {
  label: string;
  points: BandPoint[];
}

export interface RenderOptions {
  metric: string;
  logy: boolean;
}

const WIDTH = 640;
const HEIGHT = 400;
const MARGIN = { top: 32, right: 24, bottom: 48, left: 64 };
const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const FONT = "font-family=\"monospace\" font-size=\"12\"";

/** Stable coordinate formatting so identical inputs give identical bytes. */
function px(v: number): string {
  return v.toFixed(2);
}

/** Data attributes keep the full value (JS number-to-string is exact). */
function datum(v: number): string {
  return String(v);
}

function niceTicks(lo: number, hi: number, count: number): number[] {
  if (lo === hi) {
    return [lo];
  }
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const candidates = [step, 2 * step, 5 * step, 10 * step];
  const chosen = candidates.find((s) => span / s <= count) ?? 10 * step;
  const ticks: number[] = [];
  for (let t = Math.ceil(lo / chosen) * chosen; t <= hi + 1e-12 * span; t += chosen) {
    ticks.push(Math.abs(t) < 1e-12 * span ? 0 : t);
  }
  return ticks;
}

/**
 * Render one metric panel: per-curve mean line plus Q1..Q3 band, with the
 * underlying statistics embedded as data attributes on invisible markers.
 * Pure function of its inputs; no timestamps, no randomness.
 */
export function renderPanel(curves: Curve[], opts: RenderOptions): string {
  const all = curves.flatMap((c) => c.points);
  if (all.length === 0) {
    throw new Error(`no data for metric "${opts.metric}"`);
  }
  const yRaw = all.flatMap((p) => [p.mean, p.q1, p.q3]);
  if (opts.logy && yRaw.some((v) => v <= 0)) {
    throw new Error(`--logy requires strictly positive values (metric "${opts.metric}")`);
  }
  const yOf = (v: number) => (opts.logy ? Math.log10(v) : v);
  const xs = all.map((p) => p.round);
  const xLo = Math.min(...xs);
  const xHi = Math.max(...xs);
  let yLo = Math.min(...yRaw.map(yOf));
  let yHi = Math.max(...yRaw.map(yOf));
  if (yLo === yHi) {
    yLo -= 0.5;
    yHi += 0.5;
  }
  const plotW = WIDTH - MARGIN.left - MARGIN.right;
  const plotH = HEIGHT - MARGIN.top - MARGIN.bottom;
  const sx = (r: number) =>
    MARGIN.left + (xHi === xLo ? plotW / 2 : ((r - xLo) / (xHi - xLo)) * plotW);
  const sy = (v: number) => MARGIN.top + plotH - ((yOf(v) - yLo) / (yHi - yLo)) * plotH;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`,
  );
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`);
  parts.push(
    `<text x="${WIDTH / 2}" y="20" text-anchor="middle" ${FONT}>${escapeXml(opts.metric)}${opts.logy ? " (log scale)" : ""}</text>`,
  );

  // axes
  const axisY = MARGIN.top + plotH;
  parts.push(
    `<line x1="${MARGIN.left}" y1="${axisY}" x2="${MARGIN.left + plotW}" y2="${axisY}" stroke="#000000"/>`,
  );
  parts.push(
    `<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" y2="${axisY}" stroke="#000000"/>`,
  );
  for (const t of niceTicks(xLo, xHi, 8)) {
    const x = px(sx(t));
    parts.push(`<line x1="${x}" y1="${axisY}" x2="${x}" y2="${axisY + 4}" stroke="#000000"/>`);
    parts.push(
      `<text x="${x}" y="${axisY + 18}" text-anchor="middle" ${FONT}>${datum(t)}</text>`,
    );
  }
  for (const t of niceTicks(yLo, yHi, 6)) {
    const y = px(MARGIN.top + plotH - ((t - yLo) / (yHi - yLo)) * plotH);
    parts.push(`<line x1="${MARGIN.left - 4}" y1="${y}" x2="${MARGIN.left}" y2="${y}" stroke="#000000"/>`);
    const label = opts.logy ? `1e${datum(t)}` : datum(roundTick(t));
    parts.push(
      `<text x="${MARGIN.left - 8}" y="${y}" dy="4" text-anchor="end" ${FONT}>${label}</text>`,
    );
  }
  parts.push(
    `<text x="${WIDTH / 2}" y="${HEIGHT - 10}" text-anchor="middle" ${FONT}>round</text>`,
  );

  curves.forEach((curve, i) => {
    const color = PALETTE[i % PALETTE.length];
    const pts = [...curve.points].sort((a, b) => a.round - b.round);
    const upper = pts.map((p) => `${px(sx(p.round))},${px(sy(p.q3))}`);
    const lower = [...pts].reverse().map((p) => `${px(sx(p.round))},${px(sy(p.q1))}`);
    parts.push(
      `<polygon points="${[...upper, ...lower].join(" ")}" fill="${color}" fill-opacity="0.2" stroke="none"/>`,
    );
    parts.push(
      `<polyline points="${pts.map((p) => `${px(sx(p.round))},${px(sy(p.mean))}`).join(" ")}" fill="none" stroke="${color}" stroke-width="1.5"/>`,
    );
    for (const p of pts) {
      parts.push(
        `<circle cx="${px(sx(p.round))}" cy="${px(sy(p.mean))}" r="2.5" fill="${color}" ` +
          `data-label="${escapeXml(curve.label)}" data-round="${p.round}" ` +
          `data-mean="${datum(p.mean)}" data-q1="${datum(p.q1)}" data-q3="${datum(p.q3)}"/>`,
      );
    }
    // legend entry
    const ly = MARGIN.top + 14 * i + 6;
    const lx = MARGIN.left + plotW - 150;
    parts.push(`<line x1="${lx}" y1="${ly}" x2="${lx + 20}" y2="${ly}" stroke="${color}" stroke-width="1.5"/>`);
    parts.push(`<text x="${lx + 26}" y="${ly + 4}" ${FONT}>${escapeXml(curve.label)}</text>`);
  });

  parts.push("</svg>");
  return parts.join("\n") + "\n";
}

function roundTick(t: number): number {
  // suppress float-noise tick labels like 0.30000000000000004
  return Number(t.toPrecision(10));
}

function escapeXml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
