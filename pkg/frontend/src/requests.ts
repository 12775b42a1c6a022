/**
 * Latest-wins request scheduling.
 *
 * Interactions can outrun the network: a brush drag produces a stream of view
 * changes, each wanting a fresh /query per linked chart. The scheduler
 * coalesces bursts to one request per animation frame per chart, aborts the
 * in-flight request when a newer one supersedes it, and drops any response
 * that is no longer the latest issued. Charts therefore never paint stale
 * data and never aggregate anything client-side; the last response is the
 * rendered state.
 */

export type Defer = (run: () => void) => void;

const frameDefer: Defer =
  typeof requestAnimationFrame === "function"
    ? (run) => requestAnimationFrame(() => run())
    : (run) => setTimeout(run, 16);

export type Settled<T> =
  | { kind: "ok"; value: T }
  | { kind: "error"; error: unknown }
  | { kind: "stale" };

type Send<T> = (body: unknown, signal: AbortSignal) => Promise<T>;

interface Slot {
  seq: number;
  inFlight: number; // seq of the request on the wire, 0 when idle
  controller: AbortController | null;
  queued: unknown | undefined;
}

export class LatestWins<T> {
  private slots = new Map<string, Slot>();

  constructor(
    private send: Send<T>,
    private defer: Defer = frameDefer,
  ) {}

  /**
   * Queue `body` for `key`. Bodies queued within the same frame overwrite
   * each other; only the newest goes on the wire, and issuing it aborts any
   * request for `key` still in flight. The promise settles "stale" when a
   * newer body supersedes this one at any point before its response lands.
   */
  request(key: string, body: unknown): Promise<Settled<T>> {
    let found = this.slots.get(key);
    if (!found) {
      found = { seq: 0, inFlight: 0, controller: null, queued: undefined };
      this.slots.set(key, found);
    }
    const slot = found;
    slot.queued = body;
    const seq = ++slot.seq;
    return new Promise((resolve) => {
      this.defer(() => {
        if (slot.seq !== seq || slot.queued === undefined) {
          resolve({ kind: "stale" });
          return;
        }
        const payload = slot.queued;
        slot.queued = undefined;
        slot.controller?.abort();
        const controller = new AbortController();
        slot.controller = controller;
        slot.inFlight = seq;
        const finish = (outcome: Settled<T>) => {
          if (slot.inFlight === seq) {
            slot.inFlight = 0;
            slot.controller = null;
          }
          resolve(slot.seq === seq ? outcome : { kind: "stale" });
        };
        this.send(payload, controller.signal).then(
          (value) => finish({ kind: "ok", value }),
          (error) =>
            finish(
              controller.signal.aborted
                ? { kind: "stale" }
                : { kind: "error", error },
            ),
        );
      });
    });
  }

  /** True while `key` has a queued body or a request on the wire. */
  busy(key: string): boolean {
    const slot = this.slots.get(key);
    return !!slot && (slot.queued !== undefined || slot.inFlight !== 0);
  }
}
