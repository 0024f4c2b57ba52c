/**
 * Debounced live retrieval client with stale-response rejection.
 *
 * Every issued request carries a monotonically increasing sequence
 * number; a response is applied only while its request is still the
 * newest one issued, so out-of-order network completions never
 * overwrite results for newer input. Errors surface through a callback
 * (non-modal) and the last good results are retained.
 */

import { SketchJson } from "./strokes.js";

export interface ResultItem {
  id: string;
  score: number;
  image_url: string;
}

export interface QueryResponse {
  results: ResultItem[];
  timing_ms: number;
}

export interface QueryPayload {
  sketch: SketchJson | null;
  text: string | null;
  k: number;
  mode: string;
}

export type Fetcher = (payload: QueryPayload) => Promise<QueryResponse>;

export interface LiveQueryOptions {
  fetcher: Fetcher;
  onResults: (results: ResultItem[]) => void;
  onError?: (error: unknown) => void;
  debounceMs?: number;
  k?: number;
  mode?: string;
  setTimeoutFn?: (fn: () => void, ms: number) => unknown;
  clearTimeoutFn?: (handle: unknown) => void;
}

export function defaultFetcher(endpoint: string): Fetcher {
  return async (payload) => {
    const resp = await fetch(endpoint, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!resp.ok) throw new Error(`query failed: ${resp.status}`);
    return (await resp.json()) as QueryResponse;
  };
}

export class LiveQueryClient {
  private latestSeq = 0;
  private pendingTimer: unknown = null;
  private readonly debounceMs: number;
  private readonly setTimeoutFn: (fn: () => void, ms: number) => unknown;
  private readonly clearTimeoutFn: (handle: unknown) => void;

  constructor(private readonly opts: LiveQueryOptions) {
    this.debounceMs = opts.debounceMs ?? 300;
    this.setTimeoutFn = opts.setTimeoutFn ?? ((fn, ms) => setTimeout(fn, ms));
    this.clearTimeoutFn = opts.clearTimeoutFn ?? ((h) => clearTimeout(h as number));
  }

  /** Called after stroke-end or a text edit; re-issues after the debounce. */
  notifyInput(sketch: SketchJson | null, text: string | null): void {
    if (this.pendingTimer !== null) this.clearTimeoutFn(this.pendingTimer);
    if (sketch === null && (text === null || text.trim() === "")) {
      return; // nothing to query
    }
    this.pendingTimer = this.setTimeoutFn(() => {
      this.pendingTimer = null;
      void this.issue(sketch, text);
    }, this.debounceMs);
  }

  private async issue(sketch: SketchJson | null, text: string | null):
      Promise<void> {
    const seq = ++this.latestSeq;
    const payload: QueryPayload = {
      sketch,
      text: text !== null && text.trim() === "" ? null : text,
      k: this.opts.k ?? 10,
      mode: this.opts.mode ?? "sum",
    };
    try {
      const response = await this.opts.fetcher(payload);
      if (seq !== this.latestSeq) return; // superseded by newer input
      this.opts.onResults(response.results);
    } catch (error) {
      if (seq !== this.latestSeq) return;
      this.opts.onError?.(error); // last good results stay on screen
    }
  }
}
