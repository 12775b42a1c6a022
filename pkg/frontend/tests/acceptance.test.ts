import { beforeAll, describe, expect, it } from "vitest";
import { ApiClient } from "../src/api";
import { App } from "../src/app";
import { paintGrid } from "../src/charts/heatmap";
import { paintBars } from "../src/charts/histogram";
import type { Defer } from "../src/requests";
import { latticeFor } from "../src/scales";
import type { MeasureReq, QueryResponse, SchemaDoc } from "../src/types";
import { FakeServer } from "./fake_server";
import type { LoggedCall } from "./fake_server";

/**
 * End-to-end checks against a recorded request/response log.
 *
 * The fake server answers every /query deterministically but saltily, so a
 * stale response is always distinguishable from the latest one; in manual
 * mode it also ignores aborts and delivers whatever order the script asks
 * for. What lands in `app.rendered` is exactly what a real screen would
 * paint.
 */

const aggSchema: SchemaDoc = {
  dimensions: [
    { name: "x", kind: "numeric", domain: [0, 1], scale_count: 240, categories: null },
    { name: "y", kind: "numeric", domain: [0, 1], scale_count: 240, categories: null },
    { name: "z", kind: "numeric", domain: [0, 100], scale_count: 50, categories: null },
  ],
  measures: ["value"],
  descriptor: { kind: "aggregate", bins: 2, measure: "value" },
};

const histSchema: SchemaDoc = {
  ...aggSchema,
  descriptor: { kind: "histogram", bins: 64, measure: "value" },
};

function manualFrame(): { defer: Defer; flush: () => void } {
  let queue: (() => void)[] = [];
  return {
    defer: (run) => queue.push(run),
    flush: () => {
      const batch = queue;
      queue = [];
      for (const run of batch) run();
    },
  };
}

function mountPoint(): HTMLElement {
  const node = document.createElement("div");
  document.body.appendChild(node);
  return node;
}

function dimsOf(call: LoggedCall): string {
  return (call.body.group_by ?? []).map((g) => g.dim).join("|");
}

beforeAll(() => {
  // jsdom has no raster backend; a null context keeps the heatmap quiet
  HTMLCanvasElement.prototype.getContext = (() => null) as never;
});

describe("scripted brush drag", () => {
  it("emits only lattice-aligned requests and renders the final response", async () => {
    const server = new FakeServer(aggSchema, true);
    const client = new ApiClient("", server.transport);
    const frame = manualFrame();
    const app = await App.boot(mountPoint(), client, frame.defer);
    expect(app.state.charts.map((c) => c.id)).toEqual([
      "heat",
      "hist-x",
      "hist-y",
      "hist-z",
    ]);

    frame.flush();
    expect(server.pendingCount()).toBe(4); // one per linked chart
    server.releaseAll();
    await app.whenIdle();
    expect(server.queries()).toHaveLength(4);

    // three drag steps; the first two land inside one animation frame and
    // none of the raw rectangles sits on the 1/240 lattice
    app.brush("heat", { x: [0.2137, 0.5511], y: [0.333, 0.7177] });
    app.brush("heat", { x: [0.2201, 0.5602], y: [0.3391, 0.7301] });
    frame.flush();
    app.brush("heat", { x: [0.2483, 0.6049], y: [0.3468, 0.8022] });
    frame.flush();
    // deliver the final batch first, then the superseded one, out of order
    server.releaseAll("lifo");
    await app.whenIdle();

    const log = server.queries();
    // coalescing: boot plus two flushed frames, one request per chart each
    expect(log).toHaveLength(12);

    const lats = new Map(aggSchema.dimensions.map((d) => [d.name, latticeFor(d)]));
    for (const call of log) {
      expect(call.status).toBe(200);
      expect(call.body.align_scales).toBe(true);
      for (const g of call.body.group_by ?? []) {
        expect(g.edges, `explicit edges for ${g.dim}`).toBeDefined();
        for (const e of g.edges!) {
          expect(lats.get(g.dim)!.onLattice(e), `${g.dim} edge ${e}`).toBe(true);
        }
      }
      for (const [dim, iv] of Object.entries(call.body.filter ?? {})) {
        const [lo, hi] = iv as [number, number];
        expect(lats.get(dim)!.onLattice(lo), `${dim} filter lo ${lo}`).toBe(true);
        expect(lats.get(dim)!.onLattice(hi), `${dim} filter hi ${hi}`).toBe(true);
      }
    }

    // latest wins: each chart shows the response to its last logged request,
    // even though older responses arrived after newer ones
    for (const spec of app.state.charts) {
      const mine = log.filter((c) => dimsOf(c) === spec.dims.join("|"));
      expect(mine).toHaveLength(3);
      const final = mine[mine.length - 1].response as QueryResponse;
      expect(app.rendered.get(spec.id)).toEqual(final);
      expect(app.rendered.get(spec.id)!.meta.candidates).toBe(
        mine[mine.length - 1].seq,
      );
    }
    expect(app.state.pending.size).toBe(0);

    // replay determinism: a fresh session that jumps straight to the final
    // rectangle asks the server exactly the questions the drag ended on
    const replayServer = new FakeServer(aggSchema, true);
    const replay = await App.boot(
      mountPoint(),
      new ApiClient("", replayServer.transport),
      frame.defer,
    );
    frame.flush();
    replayServer.releaseAll();
    await replay.whenIdle();
    replay.brush("heat", { x: [0.2483, 0.6049], y: [0.3468, 0.8022] });
    frame.flush();
    replayServer.releaseAll();
    await replay.whenIdle();
    for (const spec of app.state.charts) {
      const dragged = log.filter((c) => dimsOf(c) === spec.dims.join("|"));
      const played = replayServer
        .queries()
        .filter((c) => dimsOf(c) === spec.dims.join("|"));
      expect(played[played.length - 1].body).toEqual(
        dragged[dragged.length - 1].body,
      );
    }
  });
});

describe("error toggle", () => {
  it("renders bounds for count, sum and mean", async () => {
    const server = new FakeServer(aggSchema);
    const client = new ApiClient("", server.transport);
    const frame = manualFrame();
    const root = mountPoint();
    const app = await App.boot(root, client, frame.defer);
    frame.flush();
    await app.whenIdle();

    const toggle = root.querySelector("input.error-toggle") as HTMLInputElement;
    expect(toggle.disabled).toBe(false);

    app.setShowError(true);
    frame.flush();
    await app.whenIdle();

    const measures: MeasureReq[] = [
      { kind: "sum", dim: "value" },
      { kind: "mean", dim: "value" },
    ];
    for (const m of measures) {
      app.setMeasure(m);
      frame.flush();
      await app.whenIdle();
    }

    const withBounds = server
      .queries()
      .filter((c) => c.body.want_error_bounds === true);
    const kinds = new Set(withBounds.map((c) => c.body.measure?.kind ?? "count"));
    expect(kinds).toEqual(new Set(["count", "sum", "mean"]));

    // the /query contract: bounds arrays present, error = spread / value
    for (const call of withBounds) {
      const resp = call.response as QueryResponse;
      expect(resp.v_min).not.toBeNull();
      expect(resp.v_max).not.toBeNull();
      expect(resp.error).not.toBeNull();
      resp.values.forEach((v, k) => {
        if (v !== null && v > 0) {
          const spread = (resp.v_max![k] as number) - (resp.v_min![k] as number);
          expect(resp.error![k]).toBeCloseTo(spread / v, 12);
        } else {
          expect(resp.error![k]).toBeNull();
        }
      });
    }

    // heatmap paints error intensity, with a distinct glyph on empty cells
    const heat = app.rendered.get("heat")!;
    const cells = paintGrid(heat, { showError: true });
    expect(cells.some((c) => c.kind === "error")).toBe(true);
    expect(cells[0].kind).toBe("empty-error"); // cell 0 has value 0
    expect(cells.every((c) => c.kind !== "value")).toBe(true);

    // histograms grow whiskers from v_min to v_max on nonempty bars
    const hist = app.rendered.get("hist-x")!;
    const bars = paintBars(hist, true);
    expect(bars[0].empty).toBe(true);
    const whiskered = bars.filter((b) => b.lo !== null && b.hi !== null);
    expect(whiskered.length).toBeGreaterThan(0);
    expect(whiskered.some((b) => b.hi! > b.lo!)).toBe(true);
    expect(root.querySelectorAll("svg.histogram line").length).toBeGreaterThan(0);
  });

  it("disables the toggle for median and never requests bounds for it", async () => {
    const server = new FakeServer(histSchema);
    const client = new ApiClient("", server.transport);
    const frame = manualFrame();
    const root = mountPoint();
    const app = await App.boot(root, client, frame.defer);
    frame.flush();
    await app.whenIdle();

    app.setShowError(true);
    frame.flush();
    await app.whenIdle();

    app.setMeasure({ kind: "median", dim: "value" });
    frame.flush();
    await app.whenIdle();

    const toggle = root.querySelector("input.error-toggle") as HTMLInputElement;
    expect(toggle.disabled).toBe(true);
    expect(toggle.checked).toBe(false);
    expect(app.state.showError).toBe(false);

    // flipping it back on while median is active must stay a no-op
    app.setShowError(true);
    frame.flush();
    await app.whenIdle();
    expect(app.state.showError).toBe(false);

    const medianCalls = server
      .queries()
      .filter((c) => c.body.measure?.kind === "median");
    expect(medianCalls.length).toBeGreaterThan(0);
    for (const call of medianCalls) {
      expect(call.body.want_error_bounds).toBe(false);
      expect(call.status).toBe(200); // bounds-for-median would 422
    }
    expect(server.queries().every((c) => c.status === 200)).toBe(true);

    // rendered state carries no bounds, and the charts fall back to values
    const heat = app.rendered.get("heat")!;
    expect(heat.error).toBeNull();
    const cells = paintGrid(heat, {
      showError: app.state.showError && heat.error !== null,
    });
    expect(cells.every((c) => c.kind === "value" || c.kind === "empty")).toBe(true);

    // the disabled state is not an error: the banner stays hidden
    const banner = root.querySelector(".banner") as HTMLElement;
    expect(banner.style.display).toBe("none");
  });
});
