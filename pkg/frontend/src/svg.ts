/** Minimal deterministic SVG line/scatter charts, no rendering backend. */

export interface LineSeries {
  xs: number[];
  ys: number[];
  color: string;
  width?: number;
  dash?: string;
  label?: string;
}

export interface ScatterSeries {
  xs: number[];
  ys: number[];
  color: string;
  radius?: number;
  label?: string;
}

export interface ChartSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  lines: LineSeries[];
  scatter?: ScatterSeries[];
  logX?: boolean;
  zeroLine?: boolean;
}

const W = 720;
const H = 400;
const ML = 70;
const MR = 20;
const MT = 40;
const MB = 56;
const PW = W - ML - MR;
const PH = H - MT - MB;

function esc(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

/** Round-numbered tick positions covering [lo, hi]. */
export function niceTicks(lo: number, hi: number, count: number): number[] {
  if (!(hi > lo)) return [lo];
  const rawStep = (hi - lo) / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  const norm = rawStep / mag;
  const step = (norm >= 5 ? 5 : norm >= 2 ? 2 : 1) * mag;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) {
    // snap near-zero accumulation error so labels read "0", not "1.1e-16"
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

function fmt(v: number): string {
  if (v === 0) return "0";
  const abs = Math.abs(v);
  if (abs >= 1e5 || abs < 1e-3) return v.toExponential(0).replace("+", "");
  const s = v.toPrecision(6);
  return s.includes(".") ? s.replace(/\.?0+$/, "") : s;
}

export function buildChart(spec: ChartSpec): string {
  const scatter = spec.scatter ?? [];
  const allX = [...spec.lines, ...scatter].flatMap((s) => s.xs);
  const allY = [...spec.lines, ...scatter].flatMap((s) => s.ys);
  if (allX.length === 0) throw new Error("nothing to plot");

  let xMin = Math.min(...allX);
  let xMax = Math.max(...allX);
  let yMin = Math.min(...allY, spec.zeroLine ? 0 : Infinity);
  let yMax = Math.max(...allY, spec.zeroLine ? 0 : -Infinity);
  if (xMin === xMax) {
    xMin -= 1;
    xMax += 1;
  }
  if (yMin === yMax) {
    yMin -= 1;
    yMax += 1;
  } else {
    const pad = (yMax - yMin) * 0.06;
    yMin -= pad;
    yMax += pad;
  }
  if (spec.logX && xMin <= 0) {
    throw new Error("log-scale x-axis needs strictly positive values");
  }

  const xT = spec.logX ? Math.log10 : (v: number) => v;
  const x0 = xT(xMin);
  const x1 = xT(xMax);
  const xOf = (v: number) => ML + ((xT(v) - x0) / (x1 - x0 || 1)) * PW;
  const yOf = (v: number) => MT + PH - ((v - yMin) / (yMax - yMin)) * PH;

  let s =
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${W} ${H}" ` +
    `font-family="Helvetica, Arial, sans-serif">\n` +
    `<rect width="${W}" height="${H}" fill="#fff"/>\n` +
    `<text x="${ML}" y="${MT - 16}" font-size="14" font-weight="600" ` +
    `fill="#222">${esc(spec.title)}</text>\n`;

  // x ticks: decades when log, nice steps otherwise
  const xTicks = spec.logX
    ? Array.from(
        { length: Math.floor(Math.log10(xMax)) - Math.ceil(Math.log10(xMin)) + 1 },
        (_, i) => Math.pow(10, Math.ceil(Math.log10(xMin)) + i),
      ).filter((v) => v >= xMin && v <= xMax)
    : niceTicks(xMin, xMax, 6);
  if (xTicks.length === 0) xTicks.push(xMin, xMax);
  for (const v of xTicks) {
    const x = xOf(v).toFixed(1);
    s +=
      `<line x1="${x}" y1="${MT}" x2="${x}" y2="${MT + PH}" ` +
      `stroke="#eee" stroke-width="0.6"/>\n` +
      `<text x="${x}" y="${MT + PH + 16}" font-size="10" fill="#555" ` +
      `text-anchor="middle">${fmt(v)}</text>\n`;
  }
  for (const v of niceTicks(yMin, yMax, 6)) {
    const y = yOf(v).toFixed(1);
    s +=
      `<line x1="${ML}" y1="${y}" x2="${ML + PW}" y2="${y}" ` +
      `stroke="#eee" stroke-width="0.6"/>\n` +
      `<text x="${ML - 6}" y="${y}" font-size="10" fill="#555" ` +
      `text-anchor="end" dominant-baseline="middle">${fmt(v)}</text>\n`;
  }

  if (spec.zeroLine && yMin < 0 && yMax > 0) {
    const y = yOf(0).toFixed(1);
    s +=
      `<line x1="${ML}" y1="${y}" x2="${ML + PW}" y2="${y}" ` +
      `stroke="#999" stroke-width="1" stroke-dasharray="5,4"/>\n`;
  }

  // frame + axis labels
  s +=
    `<rect x="${ML}" y="${MT}" width="${PW}" height="${PH}" fill="none" ` +
    `stroke="#333" stroke-width="1"/>\n` +
    `<text x="${ML + PW / 2}" y="${H - 14}" font-size="12" fill="#222" ` +
    `text-anchor="middle">${esc(spec.xLabel)}</text>\n` +
    `<text x="18" y="${MT + PH / 2}" font-size="12" fill="#222" ` +
    `text-anchor="middle" transform="rotate(-90 18 ${MT + PH / 2})">` +
    `${esc(spec.yLabel)}</text>\n`;

  for (const sc of scatter) {
    for (let i = 0; i < sc.xs.length; i++) {
      s +=
        `<circle cx="${xOf(sc.xs[i]!).toFixed(1)}" ` +
        `cy="${yOf(sc.ys[i]!).toFixed(1)}" r="${sc.radius ?? 3}" ` +
        `fill="${sc.color}" fill-opacity="0.55"/>\n`;
    }
  }
  for (const line of spec.lines) {
    const pts = line.xs
      .map((x, i) => `${xOf(x).toFixed(1)},${yOf(line.ys[i]!).toFixed(1)}`)
      .join(" ");
    s +=
      `<polyline fill="none" stroke="${line.color}" ` +
      `stroke-width="${line.width ?? 1.5}"` +
      (line.dash ? ` stroke-dasharray="${line.dash}"` : "") +
      ` points="${pts}"/>\n`;
  }

  // legend, top-right inside the frame
  const labeled = [...spec.lines, ...scatter].filter((x) => x.label);
  labeled.forEach((item, i) => {
    const y = MT + 14 + i * 15;
    s +=
      `<rect x="${ML + PW - 150}" y="${y - 8}" width="10" height="10" ` +
      `fill="${item.color}"/>\n` +
      `<text x="${ML + PW - 136}" y="${y}" font-size="10" ` +
      `fill="#333">${esc(item.label!)}</text>\n`;
  });

  return s + "</svg>\n";
}
