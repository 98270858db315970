import { COMMAND_SPECS } from "./commands.js";
import type { SendResult } from "./commands.js";
import type { CommandAck, CommandType, TwinState } from "./types.js";

export type ConnectionStatus = "connecting" | "live" | "stale" | "closed";

export interface PendingCommand {
  type: CommandType;
  value: number;
}

/**
 * Everything the panels render from. Invariant: `latest` changes only when
 * a stream or /state snapshot arrives; sending a command never touches it,
 * and the trigger toggles flip only on a confirmed ack echo.
 */
export interface UiSession {
  latest: TwinState | null;
  status: ConnectionStatus;
  pending: PendingCommand | null;
  failed: PendingCommand | null;
  lastAck: CommandAck | null;
  lastMessage: string | null;
  triggers: { pos: boolean; neg: boolean };
}

export const initialSession: UiSession = {
  latest: null,
  status: "connecting",
  pending: null,
  failed: null,
  lastAck: null,
  lastMessage: null,
  triggers: { pos: false, neg: false },
};

export type SessionEvent =
  | { kind: "state"; state: TwinState }
  | { kind: "status"; status: ConnectionStatus }
  | { kind: "send"; command: PendingCommand }
  | { kind: "result"; command: PendingCommand; result: SendResult; message: string }
  | { kind: "blocked"; message: string };

export function reduceSession(session: UiSession, ev: SessionEvent): UiSession {
  switch (ev.kind) {
    case "state":
      return { ...session, latest: ev.state };
    case "status":
      return { ...session, status: ev.status };
    case "send":
      return { ...session, pending: ev.command, failed: null, lastMessage: null };
    case "blocked":
      return { ...session, lastMessage: ev.message };
    case "result":
      return applyResult(session, ev);
  }
}

function applyResult(
  session: UiSession,
  ev: { command: PendingCommand; result: SendResult; message: string },
): UiSession {
  const next: UiSession = {
    ...session,
    pending: null,
    lastMessage: ev.message,
  };
  if (ev.result.kind === "network") {
    // Keep the command around so the UI can offer a retry.
    next.failed = ev.command;
    return next;
  }
  if (ev.result.kind === "rejected") {
    return next;
  }
  const ack = ev.result.ack;
  next.lastAck = ack;
  if (ack.ok) {
    if (ack.register === COMMAND_SPECS.set_pos_trigger.register) {
      next.triggers = { ...session.triggers, pos: ack.raw_value !== 0 };
    } else if (ack.register === COMMAND_SPECS.set_neg_trigger.register) {
      next.triggers = { ...session.triggers, neg: ack.raw_value !== 0 };
    }
  }
  return next;
}
