import { arcChainPoints, planeToPixel, tipPixel } from "./geometry.js";
import type { Viewport } from "./geometry.js";
import type { TwinState, Vec4 } from "./types.js";

/**
 * Structural subset of CanvasRenderingContext2D the panels draw with; tests
 * substitute a recording stub.
 */
export interface DrawSurface {
  lineWidth: number;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  font: string;
  globalAlpha: number;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
}

export interface GripperView {
  lengthsMm: Vec4;
  viewport: Viewport;
  widthPx: number;
  heightPx: number;
}

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}

const TIP_CROSS_PX = 6;

const COLORS = {
  chain: "#3d9bd6",
  tip: "#e8573f",
  mount: "#7a7a7a",
  text: "#c8c8c8",
  fault: "#b03030",
  gaugeFill: "#3d9bd6",
  gaugeNeg: "#d6a23d",
  spark: "#6cc070",
};

/**
 * Side view of the gripper: four chained arcs from the state's curvatures
 * at the viewport's declared scale, tip crosshair at the engine-reported
 * pose projection. With no state yet, a placeholder line.
 */
export function renderGripper(
  ctx: DrawSurface,
  state: TwinState | null,
  view: GripperView,
  opts: { greyed?: boolean } = {},
): void {
  ctx.clearRect(0, 0, view.widthPx, view.heightPx);
  if (state === null) {
    ctx.font = "14px sans-serif";
    ctx.fillStyle = COLORS.text;
    ctx.fillText("waiting for twin stream", 16, view.heightPx / 2);
    return;
  }
  ctx.globalAlpha = opts.greyed ? 0.4 : 1;
  const vp = view.viewport;

  ctx.fillStyle = COLORS.mount;
  ctx.fillRect(vp.originPx.x - 12, vp.originPx.y, 24, 3);

  ctx.strokeStyle = COLORS.chain;
  ctx.lineWidth = 3;
  ctx.beginPath();
  const chain = arcChainPoints(state.kappas, view.lengthsMm);
  chain.forEach((p, i) => {
    const px = planeToPixel(p, vp);
    if (i === 0) {
      ctx.moveTo(px.x, px.y);
    } else {
      ctx.lineTo(px.x, px.y);
    }
  });
  ctx.stroke();

  const tip = tipPixel(state, vp);
  ctx.strokeStyle = COLORS.tip;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(tip.x - TIP_CROSS_PX, tip.y);
  ctx.lineTo(tip.x + TIP_CROSS_PX, tip.y);
  ctx.moveTo(tip.x, tip.y - TIP_CROSS_PX);
  ctx.lineTo(tip.x, tip.y + TIP_CROSS_PX);
  ctx.stroke();

  ctx.font = "12px sans-serif";
  if (state.controller_faults !== 0) {
    ctx.fillStyle = COLORS.fault;
    ctx.fillRect(0, 0, view.widthPx, 22);
    ctx.fillStyle = "#ffffff";
    ctx.fillText(
      `controller fault 0x${state.controller_faults.toString(16).padStart(4, "0")}`,
      8,
      15,
    );
  }
  if (state.pipeline_fault !== null) {
    ctx.fillStyle = COLORS.fault;
    ctx.fillText(`pipeline fault: ${state.pipeline_fault}`, 8, view.heightPx - 10);
  }
  if (state.extrapolated) {
    ctx.fillStyle = COLORS.gaugeNeg;
    ctx.fillText("extrapolated", 8, view.heightPx - 26);
  }
  ctx.globalAlpha = 1;
}

/** Horizontal pressure bar over the hardware envelope with a zero tick. */
export function renderGauge(
  ctx: DrawSurface,
  rect: Rect,
  pressureKpa: number,
  range: { min: number; max: number } = { min: -100, max: 200 },
): void {
  const span = range.max - range.min;
  const toX = (kpa: number) => rect.x + ((kpa - range.min) / span) * rect.w;
  ctx.clearRect(rect.x, rect.y, rect.w, rect.h + 18);
  ctx.strokeStyle = COLORS.mount;
  ctx.lineWidth = 1;
  ctx.strokeRect(rect.x, rect.y, rect.w, rect.h);
  const clamped = Math.min(range.max, Math.max(range.min, pressureKpa));
  const zeroX = toX(0);
  const valueX = toX(clamped);
  ctx.fillStyle = clamped >= 0 ? COLORS.gaugeFill : COLORS.gaugeNeg;
  ctx.fillRect(
    Math.min(zeroX, valueX),
    rect.y + 1,
    Math.abs(valueX - zeroX),
    rect.h - 2,
  );
  ctx.beginPath();
  ctx.moveTo(zeroX, rect.y);
  ctx.lineTo(zeroX, rect.y + rect.h);
  ctx.stroke();
  ctx.font = "12px sans-serif";
  ctx.fillStyle = COLORS.text;
  ctx.fillText(`${pressureKpa.toFixed(1)} kPa`, rect.x + rect.w + 8, rect.y + rect.h - 2);
}

/** Recent-history polyline scaled into the rect; newest sample at the right. */
export function renderSparkline(
  ctx: DrawSurface,
  rect: Rect,
  values: readonly number[],
  range: { min: number; max: number },
  label: string,
): void {
  ctx.clearRect(rect.x, rect.y, rect.w, rect.h);
  ctx.strokeStyle = COLORS.mount;
  ctx.lineWidth = 1;
  ctx.strokeRect(rect.x, rect.y, rect.w, rect.h);
  const span = range.max - range.min || 1;
  if (values.length >= 2) {
    ctx.strokeStyle = COLORS.spark;
    ctx.beginPath();
    values.forEach((v, i) => {
      const x = rect.x + (i / (values.length - 1)) * rect.w;
      const norm = (Math.min(range.max, Math.max(range.min, v)) - range.min) / span;
      const y = rect.y + rect.h - norm * rect.h;
      if (i === 0) {
        ctx.moveTo(x, y);
      } else {
        ctx.lineTo(x, y);
      }
    });
    ctx.stroke();
  }
  ctx.font = "11px sans-serif";
  ctx.fillStyle = COLORS.text;
  const last = values.length > 0 ? (values[values.length - 1] ?? 0).toFixed(1) : "-";
  ctx.fillText(`${label} ${last}`, rect.x + 4, rect.y + 12);
}
