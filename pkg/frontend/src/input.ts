/**
 * Keyboard-as-pedal input: held keys map onto the three base twist axes,
 * each axis clamped independently to the engine's velocity limits. A
 * released axis does not cut to zero instantly; it ramps down and reaches
 * zero within {@link DECAY_SECONDS}, which is what a foot easing off a
 * pedal does and what keeps the base from jerking on key release.
 */

import { TICK_MS, encodeCommand } from "./protocol.js";

export const LINEAR_LIMIT = 0.3; // m/s, per axis
export const YAW_LIMIT = 0.5; // rad/s
export const DECAY_SECONDS = 0.2;

/** Buffered offline inputs older than this are stale and dropped. */
export const OFFLINE_TTL_MS = 1000;

export type Twist = [number, number, number];

/** KeyboardEvent.code -> unit contribution on (vx, vy, omega). */
const BINDINGS: Record<string, Twist> = {
  KeyW: [1, 0, 0],
  ArrowUp: [1, 0, 0],
  KeyS: [-1, 0, 0],
  ArrowDown: [-1, 0, 0],
  KeyA: [0, 1, 0],
  KeyD: [0, -1, 0],
  KeyQ: [0, 0, 1],
  ArrowLeft: [0, 0, 1],
  KeyE: [0, 0, -1],
  ArrowRight: [0, 0, -1],
};

export function isBound(code: string): boolean {
  return code in BINDINGS;
}

const LIMITS: Twist = [LINEAR_LIMIT, LINEAR_LIMIT, YAW_LIMIT];

function clamp(x: number, limit: number): number {
  return Math.max(-limit, Math.min(limit, x));
}

export class PedalInput {
  private held = new Set<string>();
  private twist: Twist = [0, 0, 0];

  /** Returns true when the key is one of ours (callers preventDefault). */
  keyDown(code: string): boolean {
    if (!isBound(code)) return false;
    this.held.add(code);
    return true;
  }

  keyUp(code: string): void {
    this.held.delete(code);
  }

  /** Drop all held keys, e.g. when the window loses focus. */
  releaseAll(): void {
    this.held.clear();
  }

  /** The twist the currently held keys ask for, per-axis clamped. */
  targetTwist(): Twist {
    const sum: Twist = [0, 0, 0];
    for (const code of this.held) {
      const unit = BINDINGS[code];
      for (let i = 0; i < 3; i++) sum[i] += unit[i] * LIMITS[i];
    }
    return [
      clamp(sum[0], LIMITS[0]),
      clamp(sum[1], LIMITS[1]),
      clamp(sum[2], LIMITS[2]),
    ];
  }

  /**
   * Advance by `dt` seconds and return the twist to command. Held axes
   * take their target immediately; released axes ramp linearly to zero
   * fast enough that any in-limit speed dies inside DECAY_SECONDS.
   */
  sample(dt: number): Twist {
    const target = this.targetTwist();
    for (let i = 0; i < 3; i++) {
      if (target[i] !== 0) {
        this.twist[i] = target[i];
      } else {
        const step = (LIMITS[i] / DECAY_SECONDS) * dt;
        if (Math.abs(this.twist[i]) <= step) this.twist[i] = 0;
        else this.twist[i] -= Math.sign(this.twist[i]) * step;
      }
    }
    return [this.twist[0], this.twist[1], this.twist[2]];
  }

  current(): Twist {
    return [this.twist[0], this.twist[1], this.twist[2]];
  }
}

/**
 * Optional analog control: map the standard gamepad left stick and
 * right-stick x onto the twist axes with a small deadzone. Returns null
 * when the pad is absent or centered, so the keyboard keeps authority.
 */
export function gamepadTwist(
  pad: Pick<Gamepad, "axes"> | null,
  deadzone = 0.15,
): Twist | null {
  if (!pad || pad.axes.length < 2) return null;
  const shape = (raw: number | undefined): number => {
    const v = raw ?? 0;
    return Math.abs(v) < deadzone ? 0 : v;
  };
  // browser sticks are +down/+right; the base is +forward/+left
  const vx = -shape(pad.axes[1]) * LINEAR_LIMIT;
  const vy = -shape(pad.axes[0]) * LINEAR_LIMIT;
  const omega = -shape(pad.axes[2]) * YAW_LIMIT;
  if (vx === 0 && vy === 0 && omega === 0) return null;
  return [clamp(vx, LINEAR_LIMIT), clamp(vy, LINEAR_LIMIT), clamp(omega, YAW_LIMIT)];
}

/**
 * Cadence gate: the display loop samples input at 60+ Hz but the engine
 * applies one command per 20 ms tick, so sending faster only fills queues.
 */
export class CommandGate {
  private last = -Infinity;

  constructor(private intervalMs: number = TICK_MS) {}

  ready(nowMs: number): boolean {
    if (nowMs - this.last < this.intervalMs) return false;
    this.last = nowMs;
    return true;
  }
}

interface BufferedCommand {
  at: number;
  text: string;
}

/**
 * Holds commands produced while the socket is down. Stale intent is worse
 * than no intent, so entries are discarded once they are a second old.
 */
export class OfflineBuffer {
  private entries: BufferedCommand[] = [];

  constructor(private ttlMs: number = OFFLINE_TTL_MS) {}

  push(twist: Twist, tick: number, nowMs: number): void {
    this.entries.push({ at: nowMs, text: encodeCommand(tick, twist) });
    this.prune(nowMs);
  }

  prune(nowMs: number): void {
    this.entries = this.entries.filter((e) => nowMs - e.at <= this.ttlMs);
  }

  /** Frames still fresh enough to send, oldest first; buffer is cleared. */
  drain(nowMs: number): string[] {
    this.prune(nowMs);
    const out = this.entries.map((e) => e.text);
    this.entries = [];
    return out;
  }

  get size(): number {
    return this.entries.length;
  }
}
