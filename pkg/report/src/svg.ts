/**
 * Hand-rolled SVG output. No plotting library: the point is byte-for-byte
 * deterministic files, so every coordinate goes through one fixed
 * formatter and nothing depends on locale, time, or object ordering.
 */

export const WIDTH = 640;
export const HEIGHT = 400;
export const MARGIN = { left: 56, right: 24, top: 36, bottom: 44 };

export const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
  "#8c564b", "#17becf", "#7f7f7f",
];

export const fmt = (v: number): string => v.toFixed(2);

export interface Scale {
  (v: number): number;
  domain: [number, number];
}

/** Linear map from domain onto [lo, hi]; a degenerate domain centers. */
export function linearScale(d0: number, d1: number, lo: number, hi: number): Scale {
  const span = d1 - d0;
  const f = ((v: number) =>
    span === 0 ? (lo + hi) / 2 : lo + ((v - d0) / span) * (hi - lo)) as Scale;
  f.domain = [d0, d1];
  return f;
}

export function plotArea(): { x0: number; x1: number; y0: number; y1: number } {
  return {
    x0: MARGIN.left,
    x1: WIDTH - MARGIN.right,
    y0: HEIGHT - MARGIN.bottom, // y grows downward in svg
    y1: MARGIN.top,
  };
}

const esc = (s: string): string =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

export class Svg {
  private parts: string[] = [];

  rect(x: number, y: number, w: number, h: number, fill: string, extra = ""): void {
    this.parts.push(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}"${extra}/>`,
    );
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, width = 1): void {
    this.parts.push(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" stroke="${stroke}" stroke-width="${width}"/>`,
    );
  }

  polyline(pts: Array<[number, number]>, stroke: string, width = 2): void {
    const d = pts.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.parts.push(
      `<polyline points="${d}" fill="none" stroke="${stroke}" stroke-width="${width}"/>`,
    );
  }

  polygon(pts: Array<[number, number]>, fill: string, opacity: number): void {
    const d = pts.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.parts.push(`<polygon points="${d}" fill="${fill}" fill-opacity="${opacity}"/>`);
  }

  text(x: number, y: number, s: string, anchor = "start", size = 12, extra = ""): void {
    this.parts.push(
      `<text x="${fmt(x)}" y="${fmt(y)}" text-anchor="${anchor}" font-family="sans-serif" font-size="${size}"${extra}>${esc(s)}</text>`,
    );
  }

  raw(s: string): void {
    this.parts.push(s);
  }

  render(): string {
    return [
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`,
      `<rect x="0" y="0" width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`,
      ...this.parts,
      "</svg>",
      "",
    ].join("\n");
  }
}

/** Frame, title, axis labels, and ticks shared by all three figures. */
export function chartFrame(
  svg: Svg,
  title: string,
  xLabel: string,
  yLabel: string,
  xTicks: Array<{ v: number; label: string }>,
  yTicks: Array<{ v: number; label: string }>,
  xs: Scale,
  ys: Scale,
): void {
  const a = plotArea();
  svg.text(WIDTH / 2, MARGIN.top - 14, title, "middle", 14, ' font-weight="bold"');
  svg.line(a.x0, a.y0, a.x1, a.y0, "#000000");
  svg.line(a.x0, a.y0, a.x0, a.y1, "#000000");
  for (const t of xTicks) {
    const x = xs(t.v);
    svg.line(x, a.y0, x, a.y0 + 4, "#000000");
    svg.text(x, a.y0 + 18, t.label, "middle", 11);
  }
  for (const t of yTicks) {
    const y = ys(t.v);
    svg.line(a.x0 - 4, y, a.x0, y, "#000000");
    svg.text(a.x0 - 8, y + 4, t.label, "end", 11);
  }
  svg.text((a.x0 + a.x1) / 2, HEIGHT - 10, xLabel, "middle", 12);
  svg.raw(
    `<text x="14" y="${fmt((a.y0 + a.y1) / 2)}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 14 ${fmt((a.y0 + a.y1) / 2)})">${yLabel}</text>`,
  );
}

/** Round-count ticks: integer steps, at most ~8 labels. */
export function integerTicks(lo: number, hi: number): Array<{ v: number; label: string }> {
  const span = Math.max(1, hi - lo);
  const step = Math.max(1, Math.ceil(span / 8));
  const out: Array<{ v: number; label: string }> = [];
  for (let v = lo; v <= hi; v += step) {
    out.push({ v, label: String(v) });
  }
  return out;
}
