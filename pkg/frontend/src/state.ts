import { ScaleLattice, latticeFor } from "./scales";
import type {
  GroupByReq,
  IntervalFilter,
  MeasureReq,
  QueryRequest,
  SchemaDoc,
} from "./types";

/** One brush: dim name to snapped interval. Heatmap brushes carry two dims. */
export type BrushRect = Record<string, IntervalFilter>;

export type BinStrategy = "aligned" | "equi_width" | "equi_data" | "log";

export interface ChartSpec {
  id: string;
  kind: "heatmap" | "histogram";
  dims: string[]; // two for heatmaps, one for histograms
  strategy: BinStrategy; // "aligned" sends explicit lattice edges
  bins: number; // per axis
}

export interface ViewState {
  schema: SchemaDoc;
  charts: ChartSpec[];
  brushes: Map<string, BrushRect[]>; // chart id -> active brushes
  accuracyMode: string;
  measure: MeasureReq;
  showError: boolean;
  pending: Set<string>; // chart ids with an in-flight request
}

export function initialState(schema: SchemaDoc): ViewState {
  const numeric = schema.dimensions.filter((d) => d.kind === "numeric");
  const charts: ChartSpec[] = [];
  if (numeric.length >= 2) {
    charts.push({
      id: "heat",
      kind: "heatmap",
      dims: [numeric[0].name, numeric[1].name],
      strategy: "aligned",
      bins: 30,
    });
  }
  for (const dim of numeric.slice(0, 4)) {
    charts.push({
      id: `hist-${dim.name}`,
      kind: "histogram",
      dims: [dim.name],
      strategy: "aligned",
      bins: 24,
    });
  }
  return {
    schema,
    charts,
    brushes: new Map(),
    accuracyMode: "tree",
    measure: { kind: "count" },
    showError: false,
    pending: new Set(),
  };
}

export function lattices(schema: SchemaDoc): Map<string, ScaleLattice> {
  const out = new Map<string, ScaleLattice>();
  for (const dim of schema.dimensions) {
    if (dim.kind === "numeric") out.set(dim.name, latticeFor(dim));
  }
  return out;
}

export function boundsSupported(state: ViewState): boolean {
  return state.measure.kind !== "median";
}

/** Measure kinds the loaded index can actually answer. */
export function availableMeasures(schema: SchemaDoc): MeasureReq[] {
  const out: MeasureReq[] = [{ kind: "count" }];
  const d = schema.descriptor;
  if (d.kind === "aggregate" && d.bins === 2 && d.measure) {
    out.push({ kind: "sum", dim: d.measure }, { kind: "mean", dim: d.measure });
  }
  if (d.kind === "histogram" && d.measure) {
    out.push({ kind: "median", dim: d.measure });
  }
  return out;
}

function intersect(a: IntervalFilter, b: IntervalFilter): IntervalFilter {
  // empty intersections collapse to a zero-width interval, which the
  // half-open cell rule resolves to "no rows" rather than a 400
  const lo = Math.max(a[0], b[0]);
  const hi = Math.min(a[1], b[1]);
  return [lo, Math.max(lo, hi)];
}

/**
 * Conjunction of every brush on every other chart: one interval per brushed
 * dimension. Brushes on the target chart are excluded so its own selection
 * stays visible in context; intervals spanning the whole domain are dropped,
 * making a full-domain brush identical to no brush at all.
 */
export function composeFilter(
  state: ViewState,
  scales: Map<string, ScaleLattice>,
  targetChartId: string,
): Record<string, IntervalFilter> {
  const filter: Record<string, IntervalFilter> = {};
  for (const [chartId, rects] of state.brushes) {
    if (chartId === targetChartId) continue;
    for (const rect of rects) {
      for (const [dim, interval] of Object.entries(rect)) {
        filter[dim] = filter[dim] ? intersect(filter[dim], interval) : interval;
      }
    }
  }
  for (const [dim, [lo, hi]] of Object.entries(filter)) {
    const lat = scales.get(dim);
    if (lat && lo <= lat.lo && hi >= lat.hi) delete filter[dim];
  }
  return filter;
}

function groupFor(
  chart: ChartSpec,
  dim: string,
  scales: Map<string, ScaleLattice>,
  filter: Record<string, IntervalFilter>,
): GroupByReq {
  if (chart.strategy !== "aligned") {
    return { dim, strategy: chart.strategy, bins: chart.bins };
  }
  const lat = scales.get(dim);
  if (!lat) return { dim }; // categorical: server defaults to one bin per label
  const extent = filter[dim] ?? [lat.lo, lat.hi];
  return { dim, edges: lat.binEdges(extent[0], extent[1], chart.bins) };
}

/** The /query body for one chart under the current view state. */
export function buildRequest(
  state: ViewState,
  scales: Map<string, ScaleLattice>,
  chart: ChartSpec,
): QueryRequest {
  const filter = composeFilter(state, scales, chart.id);
  const body: QueryRequest = {
    group_by: chart.dims.map((dim) => groupFor(chart, dim, scales, filter)),
    measure: state.measure,
    accuracy_mode: state.accuracyMode,
    want_error_bounds: state.showError && boundsSupported(state),
    align_scales: true,
  };
  // grouped dims keep their brush interval via explicit edges instead
  const rest: Record<string, IntervalFilter> = {};
  for (const [dim, interval] of Object.entries(filter)) {
    if (!chart.dims.includes(dim)) rest[dim] = interval;
  }
  if (Object.keys(rest).length > 0) body.filter = rest;
  return body;
}
