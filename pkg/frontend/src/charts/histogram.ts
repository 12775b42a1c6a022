import type { QueryResponse } from "../types";

/**
 * One-dimensional bar chart rendered as SVG.
 *
 * Bars sit at their true domain positions (widths come from response edges).
 * With error display on, each nonempty bar grows a whisker from v_min to
 * v_max; empty bars get a hollow marker since relative error is undefined
 * there. Dragging along the x axis reports a domain interval brush.
 */

const SVG = "http://www.w3.org/2000/svg";

export interface BarPaint {
  i: number;
  x0: number; // normalized [0, 1]
  x1: number;
  h: number; // normalized bar height in [0, 1]
  lo: number | null; // normalized whisker ends, null without bounds
  hi: number | null;
  empty: boolean;
}

export function paintBars(resp: QueryResponse, showError: boolean): BarPaint[] {
  const edges = resp.edges[0];
  const n = resp.shape[0];
  const span = edges[n] - edges[0] || 1;
  let top = 0;
  for (let i = 0; i < n; i++) {
    const v = resp.values[i];
    if (v !== null && v > top) top = v;
    const cap = showError ? resp.v_max?.[i] : null;
    if (cap !== undefined && cap !== null && cap > top) top = cap;
  }
  const norm = (v: number) => (top === 0 ? 0 : v / top);
  const bars: BarPaint[] = [];
  for (let i = 0; i < n; i++) {
    const v = resp.values[i];
    const empty = v === null || v === 0;
    let lo: number | null = null;
    let hi: number | null = null;
    if (showError && !empty && resp.v_min && resp.v_max) {
      const a = resp.v_min[i];
      const b = resp.v_max[i];
      if (a !== null && b !== null) {
        lo = norm(a);
        hi = norm(b);
      }
    }
    bars.push({
      i,
      x0: (edges[i] - edges[0]) / span,
      x1: (edges[i + 1] - edges[0]) / span,
      h: empty ? 0 : norm(v as number),
      lo,
      hi,
      empty,
    });
  }
  return bars;
}

interface HistogramOptions {
  width: number;
  height: number;
  onBrush: (interval: [number, number] | null) => void;
}

export class Histogram {
  readonly svg: SVGSVGElement;
  private resp: QueryResponse | null = null;
  private dragX0: number | null = null;
  private rubber: SVGRectElement;

  constructor(
    parent: HTMLElement,
    private opts: HistogramOptions,
  ) {
    this.svg = document.createElementNS(SVG, "svg");
    this.svg.setAttribute("width", String(opts.width));
    this.svg.setAttribute("height", String(opts.height));
    this.svg.setAttribute("class", "histogram");
    this.rubber = document.createElementNS(SVG, "rect");
    this.rubber.setAttribute("class", "rubber");
    this.rubber.setAttribute("fill", "rgba(60, 60, 60, 0.15)");
    this.rubber.setAttribute("display", "none");
    parent.appendChild(this.svg);
    this.svg.addEventListener("pointerdown", this.onDown);
    this.svg.addEventListener("pointermove", this.onMove);
    this.svg.addEventListener("pointerup", this.onUp);
  }

  render(resp: QueryResponse, showError: boolean): void {
    this.resp = resp;
    while (this.svg.firstChild) this.svg.removeChild(this.svg.firstChild);
    const { width: w, height: h } = this.opts;
    const pad = 2;
    for (const bar of paintBars(resp, showError)) {
      const x = bar.x0 * w + 1;
      const bw = Math.max(1, (bar.x1 - bar.x0) * w - 2);
      if (bar.empty) {
        const mark = document.createElementNS(SVG, "rect");
        mark.setAttribute("x", String(x));
        mark.setAttribute("y", String(h - pad - 3));
        mark.setAttribute("width", String(bw));
        mark.setAttribute("height", "3");
        mark.setAttribute("fill", "none");
        mark.setAttribute("stroke", "rgb(190, 190, 190)");
        this.svg.appendChild(mark);
        continue;
      }
      const rect = document.createElementNS(SVG, "rect");
      const bh = bar.h * (h - 2 * pad);
      rect.setAttribute("x", String(x));
      rect.setAttribute("y", String(h - pad - bh));
      rect.setAttribute("width", String(bw));
      rect.setAttribute("height", String(Math.max(0.5, bh)));
      rect.setAttribute("fill", "rgb(90, 130, 200)");
      this.svg.appendChild(rect);
      if (bar.lo !== null && bar.hi !== null) {
        const line = document.createElementNS(SVG, "line");
        const cx = x + bw / 2;
        line.setAttribute("x1", String(cx));
        line.setAttribute("x2", String(cx));
        line.setAttribute("y1", String(h - pad - bar.lo * (h - 2 * pad)));
        line.setAttribute("y2", String(h - pad - bar.hi * (h - 2 * pad)));
        line.setAttribute("stroke", "rgb(200, 90, 60)");
        line.setAttribute("stroke-width", "2");
        this.svg.appendChild(line);
      }
    }
    this.rubber.setAttribute("height", String(h));
    this.rubber.setAttribute("y", "0");
    this.svg.appendChild(this.rubber);
  }

  private toDomain(px: number): number | null {
    const resp = this.resp;
    if (!resp) return null;
    const edges = resp.edges[0];
    const span = edges[edges.length - 1] - edges[0];
    return edges[0] + (px / this.opts.width) * span;
  }

  private localX(ev: PointerEvent): number {
    const r = this.svg.getBoundingClientRect();
    return ev.clientX - r.left;
  }

  private onDown = (ev: PointerEvent): void => {
    this.dragX0 = this.localX(ev);
  };

  private onMove = (ev: PointerEvent): void => {
    if (this.dragX0 === null) return;
    const x = this.localX(ev);
    this.rubber.setAttribute("x", String(Math.min(this.dragX0, x)));
    this.rubber.setAttribute("width", String(Math.abs(x - this.dragX0)));
    this.rubber.removeAttribute("display");
  };

  private onUp = (ev: PointerEvent): void => {
    if (this.dragX0 === null) return;
    const x0 = this.dragX0;
    const x1 = this.localX(ev);
    this.dragX0 = null;
    this.rubber.setAttribute("display", "none");
    if (Math.abs(x1 - x0) < 3) {
      this.opts.onBrush(null);
      return;
    }
    const a = this.toDomain(Math.min(x0, x1));
    const b = this.toDomain(Math.max(x0, x1));
    if (a === null || b === null) return;
    this.opts.onBrush([a, b]);
  };
}
