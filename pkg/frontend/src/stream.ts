import type { ConnectionStatus } from "./session.js";
import type { TwinState } from "./types.js";

/** What the client needs from an event source; tests inject fakes. */
export interface StreamEventSource {
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: (() => void) | null;
  close(): void;
}

export type EventSourceFactory = (url: string) => StreamEventSource;

export interface StreamOptions {
  factory?: EventSourceFactory;
  /** No event for this long flips the status to "stale". */
  staleAfterMs?: number;
  retryDelayMs?: number;
}

function browserEventSource(url: string): StreamEventSource {
  return new EventSource(url) as unknown as StreamEventSource;
}

/**
 * Subscription to the twin's /stream endpoint. Reconnects after errors and
 * watches for silence: with no state inside `staleAfterMs` the status flips
 * to "stale" while the last state stays available for greyed rendering.
 */
export class StreamClient {
  private readonly factory: EventSourceFactory;
  private readonly staleAfterMs: number;
  private readonly retryDelayMs: number;
  private source: StreamEventSource | null = null;
  private staleTimer: ReturnType<typeof setTimeout> | null = null;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private status: ConnectionStatus | null = null;
  private closed = false;

  constructor(
    private readonly url: string,
    private readonly onState: (state: TwinState) => void,
    private readonly onStatus: (status: ConnectionStatus) => void,
    opts: StreamOptions = {},
  ) {
    this.factory = opts.factory ?? browserEventSource;
    this.staleAfterMs = opts.staleAfterMs ?? 2000;
    this.retryDelayMs = opts.retryDelayMs ?? 1000;
  }

  connect(): void {
    if (this.closed) {
      return;
    }
    this.setStatus("connecting");
    const source = this.factory(this.url);
    this.source = source;
    source.onmessage = (ev) => {
      let state: TwinState;
      try {
        state = JSON.parse(ev.data) as TwinState;
      } catch {
        return;
      }
      this.setStatus("live");
      this.armStaleTimer();
      this.onState(state);
    };
    source.onerror = () => {
      if (this.closed || this.source !== source) {
        return;
      }
      source.close();
      this.source = null;
      this.clearTimer("stale");
      this.setStatus("stale");
      this.retryTimer = setTimeout(() => {
        this.retryTimer = null;
        this.connect();
      }, this.retryDelayMs);
    };
    this.armStaleTimer();
  }

  close(): void {
    this.closed = true;
    this.clearTimer("stale");
    this.clearTimer("retry");
    this.source?.close();
    this.source = null;
    this.setStatus("closed");
  }

  private armStaleTimer(): void {
    this.clearTimer("stale");
    this.staleTimer = setTimeout(() => {
      this.staleTimer = null;
      this.setStatus("stale");
    }, this.staleAfterMs);
  }

  private clearTimer(which: "stale" | "retry"): void {
    const timer = which === "stale" ? this.staleTimer : this.retryTimer;
    if (timer !== null) {
      clearTimeout(timer);
    }
    if (which === "stale") {
      this.staleTimer = null;
    } else {
      this.retryTimer = null;
    }
  }

  private setStatus(status: ConnectionStatus): void {
    if (status !== this.status) {
      this.status = status;
      this.onStatus(status);
    }
  }
}
