import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { CuePayload, StatePayload, decodeFrame } from "../src/protocol.js";
import { ConsoleStore } from "../src/state.js";
import {
  LIDAR_DRAW_CUTOFF,
  cueArrowAngle,
  renderFrame,
  scanToPoints,
} from "../src/render.js";

const GOLDEN = join(__dirname, "..", "..", "tests", "golden");

function golden(name: string): string {
  return readFileSync(join(GOLDEN, `${name}.json`), "utf8");
}

/** Counting stand-in for a 2D context; records text so tests can see it. */
class StubCtx {
  fillStyle = "";
  strokeStyle = "";
  lineWidth = 0;
  font = "";
  globalAlpha = 1;
  calls = new Map<string, number>();
  texts: string[] = [];

  private bump(name: string): void {
    this.calls.set(name, (this.calls.get(name) ?? 0) + 1);
  }

  count(name: string): number {
    return this.calls.get(name) ?? 0;
  }

  beginPath(): void {
    this.bump("beginPath");
  }
  moveTo(): void {
    this.bump("moveTo");
  }
  lineTo(): void {
    this.bump("lineTo");
  }
  arc(): void {
    this.bump("arc");
  }
  fill(): void {
    this.bump("fill");
  }
  stroke(): void {
    this.bump("stroke");
  }
  fillRect(): void {
    this.bump("fillRect");
  }
  strokeRect(): void {
    this.bump("strokeRect");
  }
  fillText(text: string): void {
    this.bump("fillText");
    this.texts.push(text);
  }
}

function ctx(): [StubCtx, CanvasRenderingContext2D] {
  const stub = new StubCtx();
  return [stub, stub as unknown as CanvasRenderingContext2D];
}

function liveStore(): ConsoleStore {
  const store = new ConsoleStore();
  store.connection = "open";
  store.ingest(golden("state"), 1000);
  store.ingest(golden("cue"), 1000);
  return store;
}

describe("scanToPoints", () => {
  it("places all 360 beams, beam 0 along the heading", () => {
    const state = decodeFrame(golden("state")).payload as StatePayload;
    const pts = scanToPoints(state.base_pose, state.scan);
    expect(pts).toHaveLength(360);
    const [bx, by, th] = state.base_pose;
    const [dx, dy] = [pts[0][0] - bx, pts[0][1] - by];
    expect(Math.atan2(dy, dx)).toBeCloseTo(th, 9);
    expect(Math.hypot(dx, dy)).toBeCloseTo(state.scan[0], 9);
    // quarter of the way around the counterclockwise sweep
    const [qx, qy] = [pts[90][0] - bx, pts[90][1] - by];
    expect(Math.atan2(qy, qx)).toBeCloseTo(th + Math.PI / 2, 9);
  });

  it("drops no-return beams past the cutoff", () => {
    const pts = scanToPoints([0, 0, 0], [1.0, 9.5, 2.0], LIDAR_DRAW_CUTOFF);
    expect(pts).toHaveLength(2);
  });
});

describe("cueArrowAngle", () => {
  it("matches the logged pedal cue direction within a degree", () => {
    const cue = decodeFrame(golden("cue")).payload as CuePayload;
    const state = decodeFrame(golden("state")).payload as StatePayload;
    const arrowAngle = cueArrowAngle(cue.pedal);
    const logged = Math.atan2(cue.pedal.force_xy[1], cue.pedal.force_xy[0]);
    const deg = (Math.abs(arrowAngle - logged) * 180) / Math.PI;
    expect(deg).toBeLessThan(1);

    // the pedal law opposes the command: arrow anti-parallel to the twist
    const cmd = Math.atan2(state.commanded_twist[1], state.commanded_twist[0]);
    let diff = Math.abs(arrowAngle - cmd);
    diff = Math.min(diff, 2 * Math.PI - diff);
    expect((Math.abs(diff - Math.PI) * 180) / Math.PI).toBeLessThan(1);
  });

  it("is plain planar atan2", () => {
    expect(
      cueArrowAngle({
        force_xy: [-3, 4],
        yaw_torque: 0,
        source: "pedal",
        active: true,
        degenerate: false,
      }),
    ).toBeCloseTo(Math.atan2(4, -3), 12);
  });
});

describe("renderFrame", () => {
  it("draws every in-range lidar return as a point", () => {
    const store = liveStore();
    const inRange = store.state!.scan.filter((r) => r > 0 && r < LIDAR_DRAW_CUTOFF);
    const [stub, c] = ctx();
    renderFrame(c, 960, 640, store, [0.25, 0, 0], 60, 1000);
    expect(stub.count("fillRect")).toBeGreaterThanOrEqual(inRange.length);
    expect(stub.count("arc")).toBeGreaterThan(0);
    expect(stub.count("fillText")).toBeGreaterThan(0);
  });

  it("renders a waiting splash before any telemetry", () => {
    const store = new ConsoleStore();
    const [stub, c] = ctx();
    renderFrame(c, 960, 640, store, [0, 0, 0], 0, 0);
    expect(stub.texts.join(" ")).toContain("waiting");
  });

  it("shows the stale badge when frames stop", () => {
    const store = liveStore();
    const [fresh, cFresh] = ctx();
    renderFrame(cFresh, 960, 640, store, [0, 0, 0], 60, 1400);
    expect(fresh.texts).not.toContain("STALE");
    const [stale, cStale] = ctx();
    renderFrame(cStale, 960, 640, store, [0, 0, 0], 60, 1600);
    expect(stale.texts).toContain("STALE");
  });

  it("draws strictly more when the cue is active than when it is not", () => {
    const store = liveStore();
    const [active, cActive] = ctx();
    renderFrame(cActive, 960, 640, store, [0.25, 0, 0], 60, 1000);

    const muted = liveStore();
    for (const ch of Object.values(muted.cue!)) {
      ch.active = false;
      ch.force_xy = [0, 0];
    }
    const [inactive, cInactive] = ctx();
    renderFrame(cInactive, 960, 640, muted, [0.25, 0, 0], 60, 1000);

    // edge glow bands and the widget cue arrow both disappear
    expect(active.count("fillRect")).toBeGreaterThan(inactive.count("fillRect"));
    expect(active.count("stroke")).toBeGreaterThan(inactive.count("stroke"));
  });

  it("highlights the reachable disc when the overlay is on at threshold 0", () => {
    const store = liveStore();
    const [off, cOff] = ctx();
    renderFrame(cOff, 960, 640, store, [0, 0, 0], 60, 1000);

    store.overlay = true;
    store.overlayThreshold = 0;
    const [on, cOn] = ctx();
    renderFrame(cOn, 960, 640, store, [0, 0, 0], 60, 1000);
    expect(on.count("arc")).toBe(off.count("arc") + 1);

    // a threshold above the live manip hides it again
    store.overlayThreshold = Math.max(...store.state!.manip) + 0.1;
    const [hidden, cHidden] = ctx();
    renderFrame(cHidden, 960, 640, store, [0, 0, 0], 60, 1000);
    expect(hidden.count("arc")).toBe(off.count("arc"));
  });

  it("surfaces toasts from rejected frames", () => {
    const store = liveStore();
    store.ingest("garbage", 1000);
    const [stub, c] = ctx();
    renderFrame(c, 960, 640, store, [0, 0, 0], 60, 1001);
    expect(stub.count("strokeRect")).toBe(1);
    expect(stub.texts.join(" ")).toContain("JSON");
  });

  it("keeps a full 360-beam redraw well under the 20 FPS budget", () => {
    const store = liveStore();
    const [, c] = ctx();
    const n = 100;
    const t0 = performance.now();
    for (let i = 0; i < n; i++) {
      renderFrame(c, 960, 640, store, [0.25, 0, 0], 60, 1000);
    }
    const perFrame = (performance.now() - t0) / n;
    expect(perFrame).toBeLessThan(10);
  });
});
