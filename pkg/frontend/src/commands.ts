import type { CommandAck, CommandType } from "./types.js";

/** Client-side mirror of the controller's writable registers. */
export const COMMAND_SPECS: Record<
  CommandType,
  { register: number; registerName: string; min: number; max: number; unit: string }
> = {
  set_pos_trigger: { register: 0x0000, registerName: "pos_trigger", min: 0, max: 1, unit: "" },
  set_neg_trigger: { register: 0x0001, registerName: "neg_trigger", min: 0, max: 1, unit: "" },
  set_pos_target: { register: 0x0002, registerName: "pos_target", min: 0, max: 200, unit: "kPa" },
  set_neg_target: { register: 0x0003, registerName: "neg_target", min: -100, max: 0, unit: "kPa" },
};

export function registerName(register: number): string {
  for (const spec of Object.values(COMMAND_SPECS)) {
    if (spec.register === register) {
      return spec.registerName;
    }
  }
  return `register ${register}`;
}

/** Range message when the value must not be sent, null when it may. */
export function validateCommand(type: CommandType, value: number): string | null {
  const spec = COMMAND_SPECS[type];
  if (!Number.isFinite(value)) {
    return `${type} needs a finite number`;
  }
  if (type === "set_pos_trigger" || type === "set_neg_trigger") {
    if (value !== 0 && value !== 1) {
      return `${type} takes 0 or 1`;
    }
    return null;
  }
  if (value < spec.min || value > spec.max) {
    return `${type} ${value} outside ${spec.min}..${spec.max} ${spec.unit}`;
  }
  return null;
}

export type SendResult =
  | { kind: "ack"; ack: CommandAck }
  | { kind: "rejected"; status: number; message: string }
  | { kind: "network"; message: string };

/**
 * POST the command to the twin. Controller rejections come back as an ack
 * with the exception passed through; transport failures surface as a
 * "network" result for the retry affordance, never silently.
 */
export async function sendCommand(
  baseUrl: string,
  type: CommandType,
  value: number,
  fetchImpl: typeof fetch = globalThis.fetch,
): Promise<SendResult> {
  let response: Response;
  try {
    response = await fetchImpl(`${baseUrl}/command`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ type, value }),
    });
  } catch (err) {
    return { kind: "network", message: err instanceof Error ? err.message : String(err) };
  }
  let body: unknown;
  try {
    body = await response.json();
  } catch {
    return { kind: "network", message: `bad response (${response.status})` };
  }
  if (!response.ok) {
    const message =
      typeof body === "object" && body !== null && "error" in body
        ? String((body as { error: unknown }).error)
        : `HTTP ${response.status}`;
    return { kind: "rejected", status: response.status, message };
  }
  return { kind: "ack", ack: body as CommandAck };
}

function hex(value: number, width: number): string {
  return `0x${value.toString(16).padStart(width, "0")}`;
}

/** Ack line for the log; controller exceptions render verbatim. */
export function formatAck(ack: CommandAck): string {
  const reg = `${registerName(ack.register)} ${hex(ack.register, 4)}`;
  if (ack.ok) {
    return `${ack.command} ok (${reg} <- ${ack.raw_value})`;
  }
  return (
    `${ack.command} rejected: exception ${hex(ack.exception_code ?? 0, 2)}` +
    ` ${ack.exception_name ?? "unknown"} (${reg})`
  );
}

export function formatSendResult(result: SendResult): string {
  switch (result.kind) {
    case "ack":
      return formatAck(result.ack);
    case "rejected":
      return `rejected (HTTP ${result.status}): ${result.message}`;
    case "network":
      return `send failed: ${result.message}`;
  }
}
