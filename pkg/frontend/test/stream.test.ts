import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import type { ConnectionStatus } from "../src/session.js";
import { StreamClient } from "../src/stream.js";
import type { StreamEventSource } from "../src/stream.js";
import type { TwinState } from "../src/types.js";
import { loadFixture } from "./support.js";

const state = loadFixture("straight").state;

class FakeSource implements StreamEventSource {
  onopen: (() => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;
  onerror: (() => void) | null = null;
  closed = false;

  close(): void {
    this.closed = true;
  }

  emit(payload: unknown): void {
    this.onmessage?.({ data: JSON.stringify(payload) });
  }
}

describe("StreamClient", () => {
  let sources: FakeSource[];
  let states: TwinState[];
  let statuses: ConnectionStatus[];
  let client: StreamClient;

  beforeEach(() => {
    vi.useFakeTimers();
    sources = [];
    states = [];
    statuses = [];
    client = new StreamClient(
      "/stream",
      (s) => states.push(s),
      (st) => statuses.push(st),
      {
        factory: () => {
          const source = new FakeSource();
          sources.push(source);
          return source;
        },
      },
    );
  });

  afterEach(() => {
    client.close();
    vi.useRealTimers();
  });

  it("goes live on the first event and delivers the state", () => {
    client.connect();
    sources[0]?.emit(state);
    expect(statuses).toEqual(["connecting", "live"]);
    expect(states).toHaveLength(1);
    expect(states[0]?.pressure_kpa).toBe(state.pressure_kpa);
  });

  it("flips to stale within 2 s of silence, keeping the last state", () => {
    client.connect();
    sources[0]?.emit(state);
    vi.advanceTimersByTime(1999);
    expect(statuses.at(-1)).toBe("live");
    vi.advanceTimersByTime(1);
    expect(statuses.at(-1)).toBe("stale");
    expect(states).toHaveLength(1);
  });

  it("returns to live when events resume after a stall", () => {
    client.connect();
    sources[0]?.emit(state);
    vi.advanceTimersByTime(2000);
    sources[0]?.emit(state);
    expect(statuses).toEqual(["connecting", "live", "stale", "live"]);
  });

  it("closes the source on error and reconnects after the delay", () => {
    client.connect();
    sources[0]?.emit(state);
    sources[0]?.onerror?.();
    expect(sources[0]?.closed).toBe(true);
    expect(statuses.at(-1)).toBe("stale");
    vi.advanceTimersByTime(1000);
    expect(sources).toHaveLength(2);
    sources[1]?.emit(state);
    expect(statuses.at(-1)).toBe("live");
    expect(states).toHaveLength(2);
  });

  it("ignores malformed event payloads", () => {
    client.connect();
    sources[0]?.onmessage?.({ data: "{not json" });
    expect(states).toHaveLength(0);
    expect(statuses).toEqual(["connecting"]);
  });

  it("close() is terminal: no reconnects, no further statuses", () => {
    client.connect();
    sources[0]?.emit(state);
    client.close();
    expect(statuses.at(-1)).toBe("closed");
    vi.advanceTimersByTime(10_000);
    expect(sources).toHaveLength(1);
    expect(statuses.at(-1)).toBe("closed");
  });
});
