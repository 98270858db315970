/** JSON mirrors of the twin engine's HTTP API payloads. */

export type Vec3 = [number, number, number];

/** Scalar-first quaternion (w, x, y, z). */
export type Quat = [number, number, number, number];

export type Vec4 = [number, number, number, number];

export interface FlangePoseJson {
  translation: Vec3;
  quaternion: Quat;
}

/** One published snapshot, as served by GET /state and the /stream events. */
export interface TwinState {
  timestamp_ms: number;
  pressure_kpa: number;
  thetas_deg: Vec4;
  kappas: Vec4;
  end_pose: number[][];
  tip_position: Vec3;
  tip_quaternion: Quat;
  flange: FlangePoseJson;
  extrapolated: boolean;
  controller_faults: number;
  link_ok: boolean;
  pipeline_fault: string | null;
}

/** GET /config payload; the fields the console actually uses. */
export interface TwinConfig {
  controller: { host: string; port: number };
  poll_hz: number;
  lengths_mm: Vec4;
  phis_deg: Vec4;
  angles: "cumulative" | "incremental";
}

export type CommandType =
  | "set_pos_trigger"
  | "set_neg_trigger"
  | "set_pos_target"
  | "set_neg_target";

/** POST /command response body. Exception fields appear only when not ok. */
export interface CommandAck {
  ok: boolean;
  command: string;
  register: number;
  raw_value: number;
  exception_code?: number;
  exception_name?: string;
}
