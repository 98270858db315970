import { readFileSync } from "node:fs";

import type { DrawSurface } from "../src/render.js";
import type { TwinState, Vec4 } from "../src/types.js";

/** Pinned engine output: a TwinState plus the geometry that produced it. */
export interface Fixture {
  label: string;
  pressure_kpa: number;
  config: { lengths_mm: Vec4; phis_deg: Vec4; angles: string };
  state: TwinState;
}

export function loadFixture(name: string): Fixture {
  const url = new URL(`./fixtures/${name}.json`, import.meta.url);
  return JSON.parse(readFileSync(url, "utf-8")) as Fixture;
}

export interface DrawOp {
  op: string;
  args: unknown[];
}

/** Records every draw call so tests can inspect exactly what was rendered. */
export class RecordingSurface implements DrawSurface {
  lineWidth = 1;
  strokeStyle: string | CanvasGradient | CanvasPattern = "";
  fillStyle: string | CanvasGradient | CanvasPattern = "";
  font = "";
  globalAlpha = 1;
  ops: DrawOp[] = [];

  private record(op: string, ...args: unknown[]): void {
    this.ops.push({ op, args });
  }

  beginPath(): void {
    this.record("beginPath");
  }
  moveTo(x: number, y: number): void {
    this.record("moveTo", x, y);
  }
  lineTo(x: number, y: number): void {
    this.record("lineTo", x, y);
  }
  stroke(): void {
    this.record("stroke");
  }
  fillRect(x: number, y: number, w: number, h: number): void {
    this.record("fillRect", x, y, w, h);
  }
  strokeRect(x: number, y: number, w: number, h: number): void {
    this.record("strokeRect", x, y, w, h);
  }
  clearRect(x: number, y: number, w: number, h: number): void {
    this.record("clearRect", x, y, w, h);
  }
  fillText(text: string, x: number, y: number): void {
    this.record("fillText", text, x, y);
  }

  texts(): string[] {
    return this.ops.filter((o) => o.op === "fillText").map((o) => String(o.args[0]));
  }

  /** Path ops grouped by the beginPath that started them. */
  pathGroups(): DrawOp[][] {
    const groups: DrawOp[][] = [];
    let current: DrawOp[] | null = null;
    for (const op of this.ops) {
      if (op.op === "beginPath") {
        current = [];
        groups.push(current);
      } else if (current !== null && (op.op === "moveTo" || op.op === "lineTo")) {
        current.push(op);
      }
    }
    return groups;
  }
}

interface Pt {
  x: number;
  y: number;
}

function pt(op: DrawOp): Pt {
  return { x: Number(op.args[0]), y: Number(op.args[1]) };
}

/**
 * The tip marker: the last path group of exactly one horizontal and one
 * vertical segment crossing at a common midpoint.
 */
export function crosshairCenter(surface: RecordingSurface): Pt {
  const groups = surface.pathGroups();
  for (let g = groups.length - 1; g >= 0; g--) {
    const ops = groups[g];
    if (ops === undefined || ops.length !== 4) {
      continue;
    }
    const [m1, l1, m2, l2] = ops;
    if (
      m1?.op !== "moveTo" || l1?.op !== "lineTo" ||
      m2?.op !== "moveTo" || l2?.op !== "lineTo"
    ) {
      continue;
    }
    const a = pt(m1);
    const b = pt(l1);
    const c = pt(m2);
    const d = pt(l2);
    const horizontal = a.y === b.y;
    const vertical = c.x === d.x;
    const mid1 = { x: (a.x + b.x) / 2, y: (a.y + b.y) / 2 };
    const mid2 = { x: (c.x + d.x) / 2, y: (c.y + d.y) / 2 };
    if (horizontal && vertical && mid1.x === mid2.x && mid1.y === mid2.y) {
      return mid1;
    }
  }
  throw new Error("no crosshair was drawn");
}

/** The arc-chain silhouette: the path group with the most segments. */
export function longestPolyline(surface: RecordingSurface): Pt[] {
  let best: DrawOp[] | null = null;
  for (const group of surface.pathGroups()) {
    if (best === null || group.length > best.length) {
      best = group;
    }
  }
  if (best === null || best.length < 2) {
    throw new Error("no polyline was drawn");
  }
  return best.map(pt);
}
