import { ApiClient, ApiError } from "./api";
import type { QueryOutcome } from "./api";
import { Heatmap } from "./charts/heatmap";
import type { DomainRect } from "./charts/heatmap";
import { Histogram } from "./charts/histogram";
import { chartControls, Controls, measureLabel } from "./controls";
import { LatestWins } from "./requests";
import type { Defer } from "./requests";
import type { ScaleLattice } from "./scales";
import {
  buildRequest,
  initialState,
  lattices,
  boundsSupported,
} from "./state";
import type { BrushRect, ChartSpec, ViewState } from "./state";
import type { MeasureReq, QueryRequest, QueryResponse } from "./types";

/**
 * Wires state, scheduling, and charts together.
 *
 * Every view change funnels through `refreshAll`: it rebuilds one request per
 * chart from the current state and hands them to the latest-wins scheduler.
 * Whatever response survives the race becomes that chart's rendered state;
 * nothing is recomputed or merged on the client, so the screen always shows
 * the server's answer to the newest question.
 */

interface Mounted {
  spec: ChartSpec;
  node: HTMLDivElement;
  caption: HTMLDivElement;
  heatmap?: Heatmap;
  histogram?: Histogram;
}

export class App {
  readonly state: ViewState;
  /** chart id to the response currently on screen */
  readonly rendered = new Map<string, QueryResponse>();
  readonly scales: Map<string, ScaleLattice>;
  private controls!: Controls;
  private mounts = new Map<string, Mounted>();
  private scheduler: LatestWins<QueryOutcome>;
  private tasks = new Set<Promise<void>>();

  private constructor(
    private container: HTMLElement,
    private client: ApiClient,
    state: ViewState,
    defer?: Defer,
  ) {
    this.state = state;
    this.scales = lattices(state.schema);
    this.scheduler = new LatestWins(
      (body, signal) => this.client.query(body as QueryRequest, signal),
      defer,
    );
  }

  static async boot(
    container: HTMLElement,
    client: ApiClient,
    defer?: Defer,
  ): Promise<App> {
    const schema = await client.schema();
    const app = new App(container, client, initialState(schema), defer);
    app.mount();
    app.refreshAll();
    return app;
  }

  private mount(): void {
    this.controls = new Controls(this.container, this.state.schema, {
      onMeasure: (m) => this.setMeasure(m),
      onAccuracy: (mode) => {
        this.state.accuracyMode = mode;
        this.refreshAll();
      },
      onShowError: (on) => this.setShowError(on),
    });
    const grid = document.createElement("div");
    grid.className = "charts";
    this.container.appendChild(grid);
    for (const spec of this.state.charts) {
      const node = document.createElement("div");
      node.className = "chart";
      node.dataset.chart = spec.id;
      const title = document.createElement("div");
      title.className = "title";
      title.textContent = `${spec.dims.join(" x ")}`;
      node.appendChild(title);
      grid.appendChild(node);
      const mounted: Mounted = {
        spec,
        node,
        caption: document.createElement("div"),
      };
      if (spec.kind === "heatmap") {
        mounted.heatmap = new Heatmap(node, {
          width: 420,
          height: 420,
          onBrush: (rect) => this.brushRect(spec, rect),
        });
      } else {
        mounted.histogram = new Histogram(node, {
          width: 420,
          height: 140,
          onBrush: (iv) => this.brushInterval(spec, iv),
        });
      }
      chartControls(node, spec, this.scales.get(spec.dims[0]), {
        onBins: (chartId, bins) => this.setBins(chartId, bins),
        onStrategy: (chartId, strategy) => {
          this.spec(chartId).strategy = strategy;
          this.refresh(this.spec(chartId));
        },
      });
      mounted.caption.className = "caption";
      node.appendChild(mounted.caption);
      this.mounts.set(spec.id, mounted);
    }
    this.controls.sync(this.state);
  }

  private spec(chartId: string): ChartSpec {
    const spec = this.state.charts.find((c) => c.id === chartId);
    if (!spec) throw new Error(`no chart ${chartId}`);
    return spec;
  }

  private brushRect(spec: ChartSpec, rect: DomainRect | null): void {
    if (rect === null) {
      this.clearBrush(spec.id);
      return;
    }
    const [dx, dy] = spec.dims;
    this.brush(spec.id, {
      [dx]: rect.x,
      [dy]: rect.y,
    });
  }

  private brushInterval(
    spec: ChartSpec,
    interval: [number, number] | null,
  ): void {
    if (interval === null) {
      this.clearBrush(spec.id);
      return;
    }
    this.brush(spec.id, { [spec.dims[0]]: interval });
  }

  /**
   * Replace `chartId`'s brush with `rect`, snapping every edge to its
   * dimension's cut lattice before it can reach a request, then requery all
   * charts the brush links to.
   */
  brush(chartId: string, rect: BrushRect, add = false): void {
    const snapped: BrushRect = {};
    for (const [dim, interval] of Object.entries(rect)) {
      const lat = this.scales.get(dim);
      snapped[dim] = lat ? lat.snapInterval(interval[0], interval[1]) : interval;
    }
    const prior = add ? (this.state.brushes.get(chartId) ?? []) : [];
    this.state.brushes.set(chartId, [...prior, snapped]);
    this.refreshAll();
  }

  clearBrush(chartId: string): void {
    this.state.brushes.delete(chartId);
    this.refreshAll();
  }

  setMeasure(m: MeasureReq): void {
    this.state.measure = m;
    if (!boundsSupported(this.state)) this.state.showError = false;
    this.controls.sync(this.state);
    this.refreshAll();
  }

  setBins(chartId: string, bins: number): void {
    this.spec(chartId).bins = bins;
    this.refresh(this.spec(chartId));
  }

  setShowError(on: boolean): void {
    this.state.showError = on && boundsSupported(this.state);
    this.controls.sync(this.state);
    this.refreshAll();
  }

  refreshAll(): void {
    for (const spec of this.state.charts) this.refresh(spec);
  }

  private refresh(spec: ChartSpec): void {
    const body = buildRequest(this.state, this.scales, spec);
    this.state.pending.add(spec.id);
    this.markPending(spec.id, true);
    const task = this.scheduler
      .request(spec.id, body)
      .then((settled) => {
        if (settled.kind === "stale") return; // a newer request owns the slot
        this.state.pending.delete(spec.id);
        this.markPending(spec.id, false);
        if (settled.kind === "error") {
          this.controls.showBanner(describe(settled.error));
          return; // keep the last good view on screen
        }
        this.controls.clearBanner();
        this.apply(spec.id, settled.value);
      })
      .finally(() => this.tasks.delete(task));
    this.tasks.add(task);
  }

  private apply(chartId: string, outcome: QueryOutcome): void {
    const resp = outcome.body;
    this.rendered.set(chartId, resp);
    const mounted = this.mounts.get(chartId);
    if (!mounted) return;
    const showError = this.state.showError && resp.error !== null;
    mounted.heatmap?.render(resp, showError);
    mounted.histogram?.render(resp, showError);
    const meta = resp.meta;
    const us = outcome.elapsedUs === null ? "" : ` ${outcome.elapsedUs}us`;
    mounted.caption.textContent =
      `${measureLabel(this.state.measure)} via ${meta.mode}, ` +
      `${meta.candidates} slabs${us}`;
  }

  private markPending(chartId: string, on: boolean): void {
    const mounted = this.mounts.get(chartId);
    if (mounted) mounted.node.classList.toggle("pending", on);
  }

  /** Resolves once every issued request has settled. */
  async whenIdle(): Promise<void> {
    while (this.tasks.size > 0) {
      await Promise.all([...this.tasks]);
    }
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) {
    return `server rejected the query (${error.status}): ${error.detail}`;
  }
  if (error instanceof Error) return `request failed: ${error.message}`;
  return "request failed";
}
