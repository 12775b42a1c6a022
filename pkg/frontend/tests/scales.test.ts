import { describe, expect, it } from "vitest";
import { ScaleLattice } from "../src/scales";

describe("ScaleLattice", () => {
  const lat = new ScaleLattice(0, 1, 240);

  it("hits both endpoints exactly", () => {
    expect(lat.value(0)).toBe(0);
    expect(lat.value(240)).toBe(1);
    expect(lat.snap(-5)).toBe(0);
    expect(lat.snap(7)).toBe(1);
  });

  it("snaps to the nearest cut", () => {
    expect(lat.snap(0.5)).toBeCloseTo(0.5, 12);
    expect(lat.onLattice(lat.snap(0.12345))).toBe(true);
    expect(lat.onLattice(0.12345)).toBe(false);
  });

  it("never returns a zero-width interval", () => {
    const [lo, hi] = lat.snapInterval(0.5, 0.5001);
    expect(hi).toBeGreaterThan(lo);
    expect(lat.onLattice(lo)).toBe(true);
    expect(lat.onLattice(hi)).toBe(true);
    const [tlo, thi] = lat.snapInterval(0.9999, 1.0);
    expect(thi).toBe(1);
    expect(tlo).toBeLessThan(1);
  });

  it("orders swapped interval ends", () => {
    const [lo, hi] = lat.snapInterval(0.8, 0.2);
    expect(lo).toBeCloseTo(0.2, 12);
    expect(hi).toBeCloseTo(0.8, 12);
  });

  it("cuts bin edges on the lattice, strictly increasing", () => {
    for (const [lo, hi, bins] of [
      [0, 1, 24],
      [0.1, 0.9, 30],
      [0.123, 0.8765, 7],
      [0.5, 0.51, 50],
    ] as const) {
      const edges = lat.binEdges(lo, hi, bins);
      expect(edges.length).toBeGreaterThanOrEqual(2);
      expect(edges.length).toBeLessThanOrEqual(bins + 1);
      for (const e of edges) expect(lat.onLattice(e)).toBe(true);
      for (let i = 1; i < edges.length; i++) {
        expect(edges[i]).toBeGreaterThan(edges[i - 1]);
      }
    }
  });

  it("caps bins at the available lattice steps", () => {
    const edges = lat.binEdges(0.5, 0.5 + 3 / 240, 10);
    expect(edges.length).toBe(4); // only 3 unit steps available
  });

  it("works over negative domains", () => {
    const t = new ScaleLattice(-40, 10, 25);
    expect(t.snap(-40)).toBe(-40);
    expect(t.snap(10)).toBe(10);
    const edges = t.binEdges(-40, 10, 5);
    expect(edges[0]).toBe(-40);
    expect(edges[edges.length - 1]).toBe(10);
    for (const e of edges) expect(t.onLattice(e)).toBe(true);
  });

  it("rejects degenerate construction", () => {
    expect(() => new ScaleLattice(1, 1, 10)).toThrow();
    expect(() => new ScaleLattice(0, 1, 0)).toThrow();
  });
});
