// Message types for the teleop service's JSON-over-WebSocket protocol
// (see PROTOCOL.md in the repository root). One JSON object per frame,
// schema version `v: 1` on every message.

export const PROTOCOL_VERSION = 1;

export type Mode = "idle" | "joint_jog" | "ee_target" | "insertion" | "estopped";

export const MODES: Mode[] = ["idle", "joint_jog", "ee_target", "insertion", "estopped"];

export interface PoseView {
  position: [number, number, number];
  z_axis: [number, number, number];
}

export interface ClutchView {
  temperature_c: number;
  engaged: boolean;
}

export interface Snapshot {
  v: number;
  type: "snapshot";
  sim_time: number;
  mode: Mode;
  joints_est: number[];
  q_set: number[];
  motors: number[];
  tip_true: PoseView;
  tip_measured: PoseView;
  target: PoseView | null;
  e_pos_mm: number | null;
  e_ori_deg: number | null;
  clutch_a: ClutchView;
  clutch_b: ClutchView;
  needle_depth_m: number;
  inserting: boolean;
  watchdog: "ok" | "tripped";
  hold: boolean;
}

export interface Welcome {
  v: number;
  type: "welcome";
  role: "operator" | "observer";
  snapshot_rate_hz: number;
  time_scale: number;
}

export interface Ack {
  v: number;
  type: "ack" | "reject";
  seq: number;
  accepted: boolean;
  reason?: string;
}

export type ServerMessage = Snapshot | Welcome | Ack |
  { v: number; type: "error"; reason: string } |
  { v: number; type: "pong" };

export type CommandAction =
  | { kind: "set_mode"; mode: Mode }
  | { kind: "jog_joint"; joint: number; delta: number }
  | { kind: "set_ee_target"; position: number[]; z_axis: number[] }
  | { kind: "clutch"; which: "a" | "b"; engage: boolean }
  | { kind: "insert"; depth: number; resistance?: number }
  | { kind: "abort" }
  | { kind: "estop" }
  | { kind: "reset" };

export function helloFrame(token: string, clientId: string): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, type: "hello", token, client_id: clientId });
}

export function commandFrame(seq: number, action: CommandAction): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, type: "command", seq, action });
}

export function pingFrame(): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, type: "ping" });
}

export function parseServerMessage(raw: string): ServerMessage | null {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const m = msg as Record<string, unknown>;
  if (m["v"] !== PROTOCOL_VERSION || typeof m["type"] !== "string") return null;
  switch (m["type"]) {
    case "snapshot":
      if (!Array.isArray(m["joints_est"]) || typeof m["sim_time"] !== "number"
          || !MODES.includes(m["mode"] as Mode)) return null;
      return m as unknown as Snapshot;
    case "welcome":
      return m as unknown as Welcome;
    case "ack":
    case "reject":
      if (typeof m["seq"] !== "number") return null;
      return m as unknown as Ack;
    case "error":
    case "pong":
      return m as unknown as ServerMessage;
    default:
      return null;
  }
}
