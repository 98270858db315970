import type { TwinState, Vec4 } from "./types.js";

/** Declared mm-to-pixel mapping for the side view (world x right, z up). */
export interface Viewport {
  originPx: { x: number; y: number };
  pxPerMm: number;
}

export interface Pt {
  x: number;
  y: number;
}

/** Point in the view plane, millimetres: x along world x, z along world z. */
export interface PlanePointMm {
  x: number;
  z: number;
}

export function projectToView(position: readonly number[], vp: Viewport): Pt {
  return {
    x: vp.originPx.x + (position[0] ?? 0) * vp.pxPerMm,
    y: vp.originPx.y - (position[2] ?? 0) * vp.pxPerMm,
  };
}

/** Tip marker location: the engine-reported pose projected, never re-derived. */
export function tipPixel(state: TwinState, vp: Viewport): Pt {
  return projectToView(state.tip_position, vp);
}

const STRAIGHT_EPS = 1e-12;

/**
 * Silhouette polyline of the four sections in the view plane, millimetres
 * from the mount. Each section is a circular arc of the state's curvature
 * and the configured length, bending in-plane; out-of-plane phi shows up
 * in the numeric readout, not this outline.
 */
export function arcChainPoints(
  kappas: Vec4,
  lengthsMm: Vec4,
  samplesPerSection = 24,
): PlanePointMm[] {
  const points: PlanePointMm[] = [{ x: 0, z: 0 }];
  let baseX = 0;
  let baseZ = 0;
  let heading = 0; // radians from +z toward +x
  for (let i = 0; i < 4; i++) {
    const kappa = kappas[i] ?? 0;
    const length = lengthsMm[i] ?? 0;
    const sinH = Math.sin(heading);
    const cosH = Math.cos(heading);
    for (let s = 1; s <= samplesPerSection; s++) {
      const arc = (length * s) / samplesPerSection;
      let localX: number;
      let localZ: number;
      if (Math.abs(kappa) < STRAIGHT_EPS) {
        localX = 0;
        localZ = arc;
      } else {
        localX = (1 - Math.cos(kappa * arc)) / kappa;
        localZ = Math.sin(kappa * arc) / kappa;
      }
      points.push({
        x: baseX + localZ * sinH + localX * cosH,
        z: baseZ + localZ * cosH - localX * sinH,
      });
    }
    const end = points[points.length - 1];
    if (end !== undefined) {
      baseX = end.x;
      baseZ = end.z;
    }
    heading += kappa * length;
  }
  return points;
}

export function planeToPixel(p: PlanePointMm, vp: Viewport): Pt {
  return { x: vp.originPx.x + p.x * vp.pxPerMm, y: vp.originPx.y - p.z * vp.pxPerMm };
}
