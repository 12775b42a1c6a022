import type { QueryRequest, QueryResponse, SchemaDoc, StatsDoc } from "./types";

/** Minimal fetch shape so tests can substitute a recording transport. */
export type Transport = (path: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, readonly detail: unknown) {
    super(typeof detail === "string" ? detail : `request failed (${status})`);
  }
}

export interface QueryOutcome {
  body: QueryResponse;
  elapsedUs: number | null;
}

export class ApiClient {
  private readonly transport: Transport;

  constructor(baseUrl: string, transport?: Transport) {
    const base = baseUrl.replace(/\/$/, "");
    this.transport = transport ?? ((path, init) => fetch(base + path, init));
  }

  async schema(): Promise<SchemaDoc> {
    return this.getJson<SchemaDoc>("/schema");
  }

  async stats(): Promise<StatsDoc> {
    return this.getJson<StatsDoc>("/stats");
  }

  async query(body: QueryRequest, signal?: AbortSignal): Promise<QueryOutcome> {
    const resp = await this.transport("/query", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    if (!resp.ok) throw new ApiError(resp.status, await detailOf(resp));
    const elapsed = resp.headers.get("X-Elapsed-Us");
    return {
      body: (await resp.json()) as QueryResponse,
      elapsedUs: elapsed === null ? null : Number(elapsed),
    };
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.transport(path);
    if (!resp.ok) throw new ApiError(resp.status, await detailOf(resp));
    return (await resp.json()) as T;
  }
}

async function detailOf(resp: Response): Promise<unknown> {
  try {
    const doc = (await resp.json()) as { detail?: unknown };
    return doc.detail ?? doc;
  } catch {
    return resp.statusText;
  }
}
