// Wire types for the three server endpoints. Field names mirror the JSON
// contract exactly; nothing here is computed client-side.

export interface DimensionDoc {
  name: string;
  kind: "numeric" | "categorical";
  domain: [number, number];
  scale_count: number;
  categories: string[] | null;
}

export interface DescriptorDoc {
  kind: "aggregate" | "histogram";
  bins: number;
  measure: string | null;
}

export interface SchemaDoc {
  dimensions: DimensionDoc[];
  measures: string[];
  descriptor: DescriptorDoc;
}

export interface StatsDoc {
  records: number;
  skeleton_points: number;
  malformed_rows: number;
  build_seconds: number;
  tree_height: number;
  subspace_count: number;
  descriptor_bins: number;
  storage_bytes: number;
}

export type IntervalFilter = [number, number];

export interface CategoryFilter {
  categories: string[];
}

export interface GroupByReq {
  dim: string;
  strategy?: "equi_width" | "equi_data" | "log";
  bins?: number;
  edges?: number[];
}

export type MeasureKind = "count" | "sum" | "mean" | "median";

export interface MeasureReq {
  kind: MeasureKind;
  dim?: string | null;
}

export interface QueryRequest {
  filter?: Record<string, IntervalFilter | CategoryFilter>;
  group_by?: GroupByReq[];
  measure?: MeasureReq;
  accuracy_mode?: string;
  want_error_bounds?: boolean;
  align_scales?: boolean;
}

export interface QueryMetaDoc {
  mode: string;
  candidates: number;
  coincident_fraction: number;
  aligned: boolean;
}

export interface QueryResponse {
  shape: number[];
  values: (number | null)[];
  group_dims: string[];
  edges: number[][];
  v_min: (number | null)[] | null;
  v_max: (number | null)[] | null;
  error: (number | null)[] | null;
  meta: QueryMetaDoc;
}
