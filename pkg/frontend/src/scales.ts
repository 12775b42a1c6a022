import type { DimensionDoc } from "./types";

/**
 * Client-side mirror of a dimension's binning lattice: `count` equal steps
 * across the domain. Every value the UI puts into a request (brush bounds,
 * slider positions, explicit bin edges) passes through here first, so
 * requests stay alignment-friendly and cells stay exact where possible.
 */
export class ScaleLattice {
  constructor(
    readonly lo: number,
    readonly hi: number,
    readonly count: number,
  ) {
    if (!(hi > lo)) throw new Error("degenerate domain");
    if (!(count >= 1)) throw new Error("lattice needs at least one step");
  }

  /** Domain value of unit position k; endpoints are exact. */
  value(k: number): number {
    if (k <= 0) return this.lo;
    if (k >= this.count) return this.hi;
    return this.lo + ((this.hi - this.lo) * k) / this.count;
  }

  toUnit(v: number): number {
    return ((v - this.lo) / (this.hi - this.lo)) * this.count;
  }

  /** Nearest unit position, clamped into [0, count]. */
  round(v: number): number {
    return Math.min(this.count, Math.max(0, Math.round(this.toUnit(v))));
  }

  snap(v: number): number {
    return this.value(this.round(v));
  }

  /** Snapped interval with at least one unit of width. */
  snapInterval(lo: number, hi: number): [number, number] {
    let u0 = this.round(Math.min(lo, hi));
    let u1 = this.round(Math.max(lo, hi));
    if (u1 <= u0) {
      if (u0 >= this.count) u0 = this.count - 1;
      u1 = u0 + 1;
    }
    return [this.value(u0), this.value(u1)];
  }

  /**
   * Strictly increasing lattice-aligned edges cutting [lo, hi] into at most
   * `bins` near-equal cells. The cut points are unit-rounded, so uneven cell
   * widths (by at most one unit) are the price of exact alignment.
   */
  binEdges(lo: number, hi: number, bins: number): number[] {
    const [slo, shi] = this.snapInterval(lo, hi);
    const u0 = this.round(slo);
    const u1 = this.round(shi);
    const n = Math.max(1, Math.min(Math.floor(bins), u1 - u0));
    const units: number[] = [];
    for (let i = 0; i <= n; i++) {
      const u = Math.round(u0 + ((u1 - u0) * i) / n);
      if (units.length === 0 || u > units[units.length - 1]) units.push(u);
    }
    return units.map((u) => this.value(u));
  }

  onLattice(v: number): boolean {
    const u = this.toUnit(v);
    return Math.abs(u - Math.round(u)) < 1e-6;
  }
}

export function latticeFor(dim: DimensionDoc): ScaleLattice {
  return new ScaleLattice(dim.domain[0], dim.domain[1], dim.scale_count);
}
