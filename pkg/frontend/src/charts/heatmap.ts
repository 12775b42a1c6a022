import type { QueryResponse } from "../types";

/**
 * Canvas heatmap over a two-dimensional grid response.
 *
 * Cell geometry comes straight from the response edges, so unequal bin
 * widths (log scales, snapped lattice cuts) render at their true extent.
 * Painting decisions live in `paintGrid`, a pure function over the response,
 * which keeps the raster layer trivial and the logic testable without a
 * canvas; the class only rasterizes and handles pointer input.
 */

export type CellKind = "value" | "error" | "empty" | "empty-error";

export interface CellPaint {
  ix: number;
  iy: number;
  x0: number; // normalized [0, 1] within the plot area
  y0: number;
  x1: number;
  y1: number;
  kind: CellKind;
  t: number; // color intensity in [0, 1]; 0 for empty kinds
}

export interface PaintOptions {
  showError: boolean;
}

function frac(edges: number[], i: number): [number, number] {
  const lo = edges[0];
  const span = edges[edges.length - 1] - lo || 1;
  return [(edges[i] - lo) / span, (edges[i + 1] - lo) / span];
}

export function paintGrid(
  resp: QueryResponse,
  opts: PaintOptions,
): CellPaint[] {
  const [nx, ny] = resp.shape;
  const [ex, ey] = resp.edges;
  const values = resp.values;
  const error = resp.error;
  let vMax = 0;
  let eMax = 0;
  for (let k = 0; k < values.length; k++) {
    const v = values[k];
    if (v !== null && v > vMax) vMax = v;
    const e = error?.[k];
    if (e !== undefined && e !== null && isFinite(e) && e > eMax) eMax = e;
  }
  const cells: CellPaint[] = [];
  for (let ix = 0; ix < nx; ix++) {
    for (let iy = 0; iy < ny; iy++) {
      const k = ix * ny + iy; // row-major over shape
      const v = values[k];
      const [x0, x1] = frac(ex, ix);
      const [y0, y1] = frac(ey, iy);
      let kind: CellKind;
      let t = 0;
      if (v === null || v === 0) {
        kind = opts.showError && resp.error !== null ? "empty-error" : "empty";
      } else if (opts.showError && resp.error !== null) {
        const e = resp.error[k];
        kind = "error";
        t = e === null || !isFinite(e) || eMax === 0 ? 0 : e / eMax;
      } else {
        kind = "value";
        t = vMax === 0 ? 0 : v / vMax;
      }
      cells.push({ ix, iy, x0, y0, x1, y1, kind, t });
    }
  }
  return cells;
}

export function cellColor(kind: CellKind, t: number): string {
  switch (kind) {
    case "value": {
      const g = Math.round(235 - 190 * t);
      return `rgb(${Math.round(245 - 210 * t)}, ${g}, 255)`;
    }
    case "error": {
      const g = Math.round(230 - 195 * t);
      return `rgb(255, ${g}, ${Math.round(225 - 190 * t)})`;
    }
    case "empty":
      return "rgb(250, 250, 250)";
    case "empty-error":
      return "rgb(240, 240, 240)";
  }
}

export interface DomainRect {
  x: [number, number];
  y: [number, number];
}

interface HeatmapOptions {
  width: number;
  height: number;
  onBrush: (rect: DomainRect | null) => void;
}

export class Heatmap {
  readonly canvas: HTMLCanvasElement;
  private ctx: CanvasRenderingContext2D | null;
  private resp: QueryResponse | null = null;
  private showError = false;
  private drag: { x0: number; y0: number; x1: number; y1: number } | null =
    null;

  constructor(
    parent: HTMLElement,
    private opts: HeatmapOptions,
  ) {
    this.canvas = document.createElement("canvas");
    this.canvas.width = opts.width;
    this.canvas.height = opts.height;
    this.canvas.className = "heatmap";
    parent.appendChild(this.canvas);
    // jsdom has no raster backend; every paint is guarded on ctx
    this.ctx = this.canvas.getContext("2d");
    this.canvas.addEventListener("pointerdown", this.onDown);
    this.canvas.addEventListener("pointermove", this.onMove);
    this.canvas.addEventListener("pointerup", this.onUp);
  }

  render(resp: QueryResponse, showError: boolean): void {
    this.resp = resp;
    this.showError = showError;
    this.repaint();
  }

  private repaint(): void {
    const { ctx, resp } = this;
    if (!ctx) return;
    const { width: w, height: h } = this.canvas;
    ctx.clearRect(0, 0, w, h);
    if (!resp) return;
    for (const cell of paintGrid(resp, { showError: this.showError })) {
      const x = cell.x0 * w;
      const y = (1 - cell.y1) * h; // domain y grows upward
      const cw = (cell.x1 - cell.x0) * w;
      const ch = (cell.y1 - cell.y0) * h;
      ctx.fillStyle = cellColor(cell.kind, cell.t);
      ctx.fillRect(x, y, cw, ch);
      if (cell.kind === "empty-error") {
        ctx.strokeStyle = "rgb(200, 200, 200)";
        ctx.beginPath();
        ctx.moveTo(x + 2, y + 2);
        ctx.lineTo(x + cw - 2, y + ch - 2);
        ctx.stroke();
      }
    }
    if (this.drag) {
      const { x0, y0, x1, y1 } = this.drag;
      ctx.strokeStyle = "rgb(40, 40, 40)";
      ctx.strokeRect(
        Math.min(x0, x1),
        Math.min(y0, y1),
        Math.abs(x1 - x0),
        Math.abs(y1 - y0),
      );
    }
  }

  private toDomain(px: number, py: number): [number, number] | null {
    const resp = this.resp;
    if (!resp) return null;
    const [ex, ey] = resp.edges;
    const sx = ex[ex.length - 1] - ex[0];
    const sy = ey[ey.length - 1] - ey[0];
    return [
      ex[0] + (px / this.canvas.width) * sx,
      ey[0] + (1 - py / this.canvas.height) * sy,
    ];
  }

  private onDown = (ev: PointerEvent): void => {
    const [x, y] = this.local(ev);
    this.drag = { x0: x, y0: y, x1: x, y1: y };
    this.canvas.setPointerCapture?.(ev.pointerId);
  };

  private onMove = (ev: PointerEvent): void => {
    if (!this.drag) return;
    const [x, y] = this.local(ev);
    this.drag.x1 = x;
    this.drag.y1 = y;
    this.repaint();
  };

  private onUp = (ev: PointerEvent): void => {
    if (!this.drag) return;
    const { x0, y0 } = this.drag;
    const [x1, y1] = this.local(ev);
    this.drag = null;
    this.repaint();
    const a = this.toDomain(x0, y0);
    const b = this.toDomain(x1, y1);
    if (!a || !b) return;
    if (Math.abs(x1 - x0) < 3 && Math.abs(y1 - y0) < 3) {
      this.opts.onBrush(null); // a click clears the brush
      return;
    }
    this.opts.onBrush({
      x: [Math.min(a[0], b[0]), Math.max(a[0], b[0])],
      y: [Math.min(a[1], b[1]), Math.max(a[1], b[1])],
    });
  };

  private local(ev: PointerEvent): [number, number] {
    const r = this.canvas.getBoundingClientRect();
    return [ev.clientX - r.left, ev.clientY - r.top];
  }
}
