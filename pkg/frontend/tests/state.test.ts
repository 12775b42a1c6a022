import { describe, expect, it } from "vitest";
import {
  availableMeasures,
  buildRequest,
  composeFilter,
  initialState,
  lattices,
} from "../src/state";
import type { ViewState } from "../src/state";
import type { IntervalFilter, SchemaDoc } from "../src/types";

const schema: SchemaDoc = {
  dimensions: [
    { name: "x", kind: "numeric", domain: [0, 1], scale_count: 240, categories: null },
    { name: "y", kind: "numeric", domain: [0, 1], scale_count: 240, categories: null },
    { name: "z", kind: "numeric", domain: [0, 100], scale_count: 50, categories: null },
  ],
  measures: ["value"],
  descriptor: { kind: "aggregate", bins: 2, measure: "value" },
};

function freshState(): ViewState {
  return initialState(schema);
}

describe("composeFilter", () => {
  const scales = lattices(schema);

  it("excludes the target chart's own brushes", () => {
    const s = freshState();
    s.brushes.set("heat", [{ x: [0.2, 0.4], y: [0.1, 0.3] }]);
    expect(composeFilter(s, scales, "heat")).toEqual({});
    const other = composeFilter(s, scales, "hist-z");
    expect(other.x).toEqual([0.2, 0.4]);
    expect(other.y).toEqual([0.1, 0.3]);
  });

  it("intersects brushes from different charts per dimension", () => {
    const s = freshState();
    s.brushes.set("heat", [{ x: [0.2, 0.6] }]);
    s.brushes.set("hist-x", [{ x: [0.4, 0.9] }]);
    const f = composeFilter(s, scales, "hist-z");
    expect(f.x).toEqual([0.4, 0.6]);
  });

  it("collapses disjoint brushes to a zero-width interval", () => {
    const s = freshState();
    s.brushes.set("a", [{ x: [0.1, 0.2] }]);
    s.brushes.set("b", [{ x: [0.7, 0.9] }]);
    const f = composeFilter(s, scales, "c");
    expect(f.x[0]).toBe(f.x[1]);
  });

  it("drops full-domain intervals", () => {
    const s = freshState();
    s.brushes.set("hist-x", [{ x: [0, 1] }]);
    expect(composeFilter(s, scales, "heat")).toEqual({});
  });
});

describe("buildRequest", () => {
  const scales = lattices(schema);

  it("emits explicit lattice edges for aligned charts", () => {
    const s = freshState();
    const heat = s.charts.find((c) => c.id === "heat")!;
    const body = buildRequest(s, scales, heat);
    expect(body.group_by).toHaveLength(2);
    for (const g of body.group_by!) {
      expect(g.edges).toBeDefined();
      expect(g.strategy).toBeUndefined();
      const lat = scales.get(g.dim)!;
      for (const e of g.edges!) expect(lat.onLattice(e)).toBe(true);
    }
    expect(body.align_scales).toBe(true);
    expect(body.filter).toBeUndefined();
  });

  it("restricts group edges to a brush on the grouped dim", () => {
    const s = freshState();
    s.brushes.set("hist-x", [{ x: [0.25, 0.75] }]);
    const heat = s.charts.find((c) => c.id === "heat")!;
    const body = buildRequest(s, scales, heat);
    const gx = body.group_by!.find((g) => g.dim === "x")!;
    expect(gx.edges![0]).toBeCloseTo(0.25, 12);
    expect(gx.edges![gx.edges!.length - 1]).toBeCloseTo(0.75, 12);
    // grouped dims carry their constraint in the edges, not the filter
    expect(body.filter).toBeUndefined();
  });

  it("keeps brushes on ungrouped dims in the filter", () => {
    const s = freshState();
    s.brushes.set("heat", [{ x: [0.2, 0.4], y: [0.1, 0.3] }]);
    const hist = s.charts.find((c) => c.id === "hist-z")!;
    const body = buildRequest(s, scales, hist);
    expect(body.filter).toEqual({ x: [0.2, 0.4], y: [0.1, 0.3] });
    expect(body.group_by![0].dim).toBe("z");
  });

  it("sends strategy and bins for non-aligned charts", () => {
    const s = freshState();
    const hist = s.charts.find((c) => c.id === "hist-x")!;
    hist.strategy = "equi_data";
    hist.bins = 17;
    const body = buildRequest(s, scales, hist);
    expect(body.group_by![0]).toEqual({
      dim: "x",
      strategy: "equi_data",
      bins: 17,
    });
    expect(body.align_scales).toBe(true);
  });

  it("asks for bounds only when the measure supports them", () => {
    const s = freshState();
    s.showError = true;
    const heat = s.charts.find((c) => c.id === "heat")!;
    for (const kind of ["count", "sum", "mean"] as const) {
      s.measure = kind === "count" ? { kind } : { kind, dim: "value" };
      expect(buildRequest(s, scales, heat).want_error_bounds).toBe(true);
    }
    s.measure = { kind: "median", dim: "value" };
    expect(buildRequest(s, scales, heat).want_error_bounds).toBe(false);
  });
});

describe("availableMeasures", () => {
  it("gates sum and mean on a paired-bin aggregate descriptor", () => {
    const kinds = availableMeasures(schema).map((m) => m.kind);
    expect(kinds).toEqual(["count", "sum", "mean"]);
  });

  it("offers median only for histogram descriptors", () => {
    const hist: SchemaDoc = {
      ...schema,
      descriptor: { kind: "histogram", bins: 64, measure: "value" },
    };
    const kinds = availableMeasures(hist).map((m) => m.kind);
    expect(kinds).toEqual(["count", "median"]);
  });
});

describe("interval edge cases", () => {
  it("zero-width filters stay inside the domain", () => {
    const s = freshState();
    s.brushes.set("a", [{ z: [0, 10] as IntervalFilter }]);
    s.brushes.set("b", [{ z: [90, 100] as IntervalFilter }]);
    const f = composeFilter(s, lattices(schema), "c");
    expect(f.z[0]).toBeGreaterThanOrEqual(0);
    expect(f.z[1]).toBeLessThanOrEqual(100);
  });
});
