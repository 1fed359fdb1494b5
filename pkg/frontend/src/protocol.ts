/**
 * Wire protocol for the bridge WebSocket: versioned JSON text frames.
 *
 * Every frame is `{v: 1, kind, tick, payload}`. The server streams `state`
 * and `cue` once per 50 Hz engine tick, answers every `command` with an
 * `ack`, rejects bad frames with `error`, and announces episode lifecycle
 * through `control` events. The console only ever sends `command` and
 * `control`.
 */

export const PROTOCOL_VERSION = 1;

/** Engine tick interval in milliseconds (50 Hz loop). */
export const TICK_MS = 20;

export type FrameKind =
  | "state"
  | "cue"
  | "command"
  | "control"
  | "ack"
  | "error";

/** One 100 Hz arm integrator sub-sample; state frames carry them in pairs. */
export interface ArmSample {
  time: number;
  q_left: number[];
  qd_left: number[];
  q_right: number[];
  qd_right: number[];
}

export interface StatePayload {
  time: number;
  base_pose: [number, number, number];
  arms: ArmSample[];
  tau_left: number[];
  tau_right: number[];
  commanded_twist: [number, number, number];
  applied_twist: [number, number, number];
  /** Full lidar sweep in meters; beam 0 along the heading, counterclockwise. */
  scan: number[];
  /** 8 sector minima of the same sweep, sector 0 starting at the heading. */
  scan_sectors: number[];
  manip: number[];
  events: number;
}

export interface CueChannel {
  force_xy: [number, number];
  yaw_torque: number;
  source: string;
  active: boolean;
  degenerate: boolean;
}

export interface CuePayload {
  pedal: CueChannel;
  guidance: CueChannel;
  mixed: CueChannel;
}

export interface AckPayload {
  command_tick: number;
  applied_tick: number;
}

export interface ErrorPayload {
  error: string;
}

export interface CommandPayload {
  twist: [number, number, number];
  q_left?: number[];
  q_right?: number[];
}

/** Client requests carry `op`; server lifecycle notices carry `event`. */
export interface ControlPayload {
  op?: string;
  event?: string;
  [key: string]: unknown;
}

export type Frame =
  | { kind: "state"; tick: number; payload: StatePayload }
  | { kind: "cue"; tick: number; payload: CuePayload }
  | { kind: "command"; tick: number; payload: CommandPayload }
  | { kind: "control"; tick: number; payload: ControlPayload }
  | { kind: "ack"; tick: number; payload: AckPayload }
  | { kind: "error"; tick: number; payload: ErrorPayload };

const KINDS: ReadonlySet<string> = new Set([
  "state",
  "cue",
  "command",
  "control",
  "ack",
  "error",
]);

function isRecord(x: unknown): x is Record<string, unknown> {
  return typeof x === "object" && x !== null && !Array.isArray(x);
}

function finiteNumber(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

function numberArray(x: unknown, length?: number): x is number[] {
  if (!Array.isArray(x) || !x.every(finiteNumber)) return false;
  return length === undefined || x.length === length;
}

function fail(message: string): never {
  throw new Error(message);
}

function checkState(p: Record<string, unknown>): void {
  if (!finiteNumber(p.time)) fail("state frame missing time");
  if (!numberArray(p.base_pose, 3)) fail("state frame needs base_pose [x, y, theta]");
  if (!Array.isArray(p.arms) || p.arms.length === 0) fail("state frame needs arm samples");
  for (const arm of p.arms) {
    if (
      !isRecord(arm) ||
      !finiteNumber(arm.time) ||
      !numberArray(arm.q_left) ||
      !numberArray(arm.qd_left) ||
      !numberArray(arm.q_right) ||
      !numberArray(arm.qd_right)
    ) {
      fail("malformed arm sample in state frame");
    }
  }
  if (!numberArray(p.commanded_twist, 3)) fail("state frame needs commanded_twist");
  if (!numberArray(p.applied_twist, 3)) fail("state frame needs applied_twist");
  if (!numberArray(p.scan)) fail("state frame needs a scan array");
  if (!numberArray(p.scan_sectors, 8)) fail("state frame needs 8 scan_sectors");
  if (!numberArray(p.manip)) fail("state frame needs manip");
  if (!finiteNumber(p.events)) fail("state frame needs events count");
}

function checkCueChannel(x: unknown, name: string): void {
  if (
    !isRecord(x) ||
    !numberArray(x.force_xy, 2) ||
    !finiteNumber(x.yaw_torque) ||
    typeof x.source !== "string" ||
    typeof x.active !== "boolean" ||
    typeof x.degenerate !== "boolean"
  ) {
    fail(`malformed cue channel: ${name}`);
  }
}

function checkCue(p: Record<string, unknown>): void {
  for (const name of ["pedal", "guidance", "mixed"]) {
    checkCueChannel(p[name], name);
  }
}

function checkCommand(p: Record<string, unknown>): void {
  if (!("twist" in p)) fail("missing twist");
  if (!numberArray(p.twist, 3)) fail("twist must be three finite numbers");
  if (p.q_left !== undefined && !numberArray(p.q_left)) fail("bad q_left");
  if (p.q_right !== undefined && !numberArray(p.q_right)) fail("bad q_right");
}

function checkControl(p: Record<string, unknown>): void {
  const hasOp = typeof p.op === "string";
  const hasEvent = typeof p.event === "string";
  if (!hasOp && !hasEvent) fail("control frame needs op or event");
}

function checkAck(p: Record<string, unknown>): void {
  if (!finiteNumber(p.command_tick) || !finiteNumber(p.applied_tick)) {
    fail("ack frame needs command_tick and applied_tick");
  }
}

function checkError(p: Record<string, unknown>): void {
  if (typeof p.error !== "string") fail("error frame needs an error string");
}

/**
 * Parse and validate one wire frame. Throws `Error` with a message naming
 * the problem on anything malformed; the caller keeps its last good frame.
 */
export function decodeFrame(text: string): Frame {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    fail("frame is not valid JSON");
  }
  if (!isRecord(raw)) fail("frame must be a JSON object");
  if (raw.v !== PROTOCOL_VERSION) fail(`unsupported protocol version: ${String(raw.v)}`);
  const kind = raw.kind;
  if (typeof kind !== "string" || !KINDS.has(kind)) {
    fail(`unknown frame kind: ${String(kind)}`);
  }
  const tick = raw.tick;
  if (!finiteNumber(tick) || !Number.isInteger(tick) || tick < 0) {
    fail("tick must be a non-negative integer");
  }
  const payload = raw.payload;
  if (!isRecord(payload)) fail("payload must be a JSON object");

  switch (kind) {
    case "state":
      checkState(payload);
      break;
    case "cue":
      checkCue(payload);
      break;
    case "command":
      checkCommand(payload);
      break;
    case "control":
      checkControl(payload);
      break;
    case "ack":
      checkAck(payload);
      break;
    case "error":
      checkError(payload);
      break;
  }
  return { kind, tick, payload } as Frame;
}

function assertSendable(values: number[], what: string): void {
  for (const v of values) {
    if (!Number.isFinite(v)) throw new Error(`${what} must be finite`);
  }
}

/** Serialize an operator twist command. */
export function encodeCommand(
  tick: number,
  twist: [number, number, number],
): string {
  assertSendable(twist, "twist");
  return JSON.stringify({
    v: PROTOCOL_VERSION,
    kind: "command",
    tick,
    payload: { twist },
  });
}

/** Serialize a client control request (start / stop / reset). */
export function encodeControl(
  tick: number,
  op: string,
  extra: Record<string, unknown> = {},
): string {
  return JSON.stringify({
    v: PROTOCOL_VERSION,
    kind: "control",
    tick,
    payload: { op, ...extra },
  });
}
