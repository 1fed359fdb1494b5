import { describe, expect, it } from "vitest";

import {
  CommandGate,
  DECAY_SECONDS,
  LINEAR_LIMIT,
  OfflineBuffer,
  PedalInput,
  YAW_LIMIT,
  gamepadTwist,
} from "../src/input.js";

describe("PedalInput", () => {
  it("commands zero twist with no keys held", () => {
    const pedal = new PedalInput();
    expect(pedal.sample(0.016)).toEqual([0, 0, 0]);
  });

  it("maps the forward key straight to +0.3 m/s", () => {
    const pedal = new PedalInput();
    pedal.keyDown("KeyW");
    expect(pedal.sample(0.016)).toEqual([LINEAR_LIMIT, 0, 0]);
  });

  it("clamps each axis independently on diagonals", () => {
    const pedal = new PedalInput();
    pedal.keyDown("KeyW");
    pedal.keyDown("KeyA");
    pedal.keyDown("KeyQ");
    expect(pedal.sample(0.016)).toEqual([LINEAR_LIMIT, LINEAR_LIMIT, YAW_LIMIT]);
  });

  it("does not exceed the limit when two keys push the same axis", () => {
    const pedal = new PedalInput();
    pedal.keyDown("KeyW");
    pedal.keyDown("ArrowUp");
    expect(pedal.sample(0.016)[0]).toBe(LINEAR_LIMIT);
  });

  it("ignores unbound keys", () => {
    const pedal = new PedalInput();
    expect(pedal.keyDown("KeyZ")).toBe(false);
    expect(pedal.sample(0.016)).toEqual([0, 0, 0]);
  });

  it("decays a released axis to zero within 0.2 s", () => {
    const pedal = new PedalInput();
    pedal.keyDown("KeyW");
    pedal.sample(0.016);
    pedal.keyUp("KeyW");
    const dt = 1 / 60;
    let t = 0;
    let vx = LINEAR_LIMIT;
    const trace: number[] = [];
    while (t < DECAY_SECONDS + 1e-9) {
      vx = pedal.sample(dt)[0];
      trace.push(vx);
      t += dt;
    }
    expect(vx).toBe(0);
    // monotone ramp, not a cliff: some intermediate sample is partial
    expect(trace.some((v) => v > 0 && v < LINEAR_LIMIT)).toBe(true);
    for (let i = 1; i < trace.length; i++) {
      expect(trace[i]).toBeLessThanOrEqual(trace[i - 1] + 1e-12);
    }
  });

  it("re-pressing during decay snaps back to full speed", () => {
    const pedal = new PedalInput();
    pedal.keyDown("KeyW");
    pedal.sample(0.016);
    pedal.keyUp("KeyW");
    pedal.sample(0.05);
    pedal.keyDown("KeyW");
    expect(pedal.sample(0.016)[0]).toBe(LINEAR_LIMIT);
  });

  it("releaseAll drops every held key", () => {
    const pedal = new PedalInput();
    pedal.keyDown("KeyW");
    pedal.keyDown("KeyA");
    pedal.releaseAll();
    expect(pedal.targetTwist()).toEqual([0, 0, 0]);
  });
});

describe("gamepadTwist", () => {
  it("returns null for an absent or centered pad", () => {
    expect(gamepadTwist(null)).toBeNull();
    expect(gamepadTwist({ axes: [0.05, -0.08, 0.0, 0.0] })).toBeNull();
  });

  it("maps stick deflection onto clamped twist axes", () => {
    const twist = gamepadTwist({ axes: [-1, -1, 1, 0] });
    expect(twist).not.toBeNull();
    expect(twist![0]).toBeCloseTo(LINEAR_LIMIT, 12);
    expect(twist![1]).toBeCloseTo(LINEAR_LIMIT, 12);
    expect(twist![2]).toBeCloseTo(-YAW_LIMIT, 12);
  });
});

describe("CommandGate", () => {
  it("lets through at most one command per tick interval", () => {
    const gate = new CommandGate(20);
    let sent = 0;
    // a 240 Hz display loop over one second
    for (let i = 0; i < 240; i++) {
      if (gate.ready(i * (1000 / 240))) sent++;
    }
    // quantized to the 240 Hz sampling: every 5th loop pass at most
    expect(sent).toBeLessThanOrEqual(50);
    expect(sent).toBeGreaterThanOrEqual(45);
  });

  it("opens again once the interval has passed", () => {
    const gate = new CommandGate(20);
    expect(gate.ready(0)).toBe(true);
    expect(gate.ready(10)).toBe(false);
    expect(gate.ready(19.9)).toBe(false);
    expect(gate.ready(20)).toBe(true);
  });
});

describe("OfflineBuffer", () => {
  it("keeps fresh commands and drains them oldest first", () => {
    const buf = new OfflineBuffer();
    buf.push([0.3, 0, 0], 1, 1000);
    buf.push([0, 0.3, 0], 2, 1200);
    const out = buf.drain(1400);
    expect(out).toHaveLength(2);
    expect(out[0]).toContain('"tick":1');
    expect(buf.size).toBe(0);
  });

  it("discards anything older than one second", () => {
    const buf = new OfflineBuffer();
    buf.push([0.3, 0, 0], 1, 1000);
    buf.push([0, 0.3, 0], 2, 1600);
    expect(buf.drain(2100)).toHaveLength(1);
  });

  it("prunes on push as well", () => {
    const buf = new OfflineBuffer();
    buf.push([0.3, 0, 0], 1, 0);
    buf.push([0, 0, 0.5], 2, 1500);
    expect(buf.size).toBe(1);
  });
});
