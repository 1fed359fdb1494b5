/**
 * Canvas renderer: top-down world on the left (lidar, base, overlay,
 * pedal widget, edge glow), arm posture and metrics panel on the right.
 * Pure view: reads the store, draws, mutates nothing.
 */

import { CueChannel, StatePayload } from "./protocol.js";
import { Twist } from "./input.js";
import { ConsoleStore } from "./state.js";

/** Beams at or beyond this range are treated as no-return and not drawn. */
export const LIDAR_DRAW_CUTOFF = 9.4;

/** World meters shown across the map view. */
const MAP_SPAN = 8.0;

const PANEL_W = 320;

export interface Camera {
  cx: number;
  cy: number;
  scale: number; // px per meter
  width: number;
  height: number;
}

export function worldToScreen(cam: Camera, x: number, y: number): [number, number] {
  return [
    cam.width / 2 + (x - cam.cx) * cam.scale,
    cam.height / 2 - (y - cam.cy) * cam.scale,
  ];
}

/**
 * World-frame hit points of a lidar sweep. Beam 0 leaves along the base
 * heading and the sweep is counterclockwise.
 */
export function scanToPoints(
  base: [number, number, number],
  scan: number[],
  maxRange = Infinity,
): [number, number][] {
  const [bx, by, th] = base;
  const n = scan.length;
  const pts: [number, number][] = [];
  for (let i = 0; i < n; i++) {
    const r = scan[i];
    if (!(r > 0) || r >= maxRange) continue;
    const a = th + (2 * Math.PI * i) / n;
    pts.push([bx + r * Math.cos(a), by + r * Math.sin(a)]);
  }
  return pts;
}

/** Direction of a cue channel's planar force, radians in its own frame. */
export function cueArrowAngle(cue: CueChannel): number {
  return Math.atan2(cue.force_xy[1], cue.force_xy[0]);
}

function arrow(
  ctx: CanvasRenderingContext2D,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
): void {
  const dx = x1 - x0;
  const dy = y1 - y0;
  const len = Math.hypot(dx, dy);
  if (len < 1e-6) return;
  const hx = dx / len;
  const hy = dy / len;
  const head = Math.min(10, len * 0.4);
  ctx.beginPath();
  ctx.moveTo(x0, y0);
  ctx.lineTo(x1, y1);
  ctx.lineTo(x1 - head * (hx + 0.5 * hy), y1 - head * (hy - 0.5 * hx));
  ctx.moveTo(x1, y1);
  ctx.lineTo(x1 - head * (hx - 0.5 * hy), y1 - head * (hy + 0.5 * hx));
  ctx.stroke();
}

function drawGrid(ctx: CanvasRenderingContext2D, cam: Camera): void {
  ctx.strokeStyle = "#233041";
  ctx.lineWidth = 1;
  const x0 = cam.cx - cam.width / 2 / cam.scale;
  const x1 = cam.cx + cam.width / 2 / cam.scale;
  const y0 = cam.cy - cam.height / 2 / cam.scale;
  const y1 = cam.cy + cam.height / 2 / cam.scale;
  for (let gx = Math.ceil(x0); gx <= Math.floor(x1); gx++) {
    const [sx] = worldToScreen(cam, gx, 0);
    ctx.beginPath();
    ctx.moveTo(sx, 0);
    ctx.lineTo(sx, cam.height);
    ctx.stroke();
  }
  for (let gy = Math.ceil(y0); gy <= Math.floor(y1); gy++) {
    const [, sy] = worldToScreen(cam, 0, gy);
    ctx.beginPath();
    ctx.moveTo(0, sy);
    ctx.lineTo(cam.width, sy);
    ctx.stroke();
  }
}

/**
 * Manipulability heat overlay: the disc the arms can reach, shown when
 * the live reading clears the threshold. Threshold 0 always shows it.
 */
function drawOverlay(
  ctx: CanvasRenderingContext2D,
  cam: Camera,
  state: StatePayload,
  threshold: number,
): void {
  const manip = state.manip.length ? Math.max(...state.manip) : 0;
  if (manip < threshold) return;
  const [sx, sy] = worldToScreen(cam, state.base_pose[0], state.base_pose[1]);
  const reach = 0.85 * cam.scale;
  ctx.globalAlpha = 0.12 + 0.25 * Math.min(1, manip);
  ctx.fillStyle = "#35d07f";
  ctx.beginPath();
  ctx.arc(sx, sy, reach, 0, 2 * Math.PI);
  ctx.fill();
  ctx.globalAlpha = 1;
}

function drawRobot(
  ctx: CanvasRenderingContext2D,
  cam: Camera,
  state: StatePayload,
): void {
  const [bx, by, th] = state.base_pose;
  const [sx, sy] = worldToScreen(cam, bx, by);
  const r = 0.25 * cam.scale;
  ctx.fillStyle = "#4f8cc9";
  ctx.beginPath();
  ctx.arc(sx, sy, r, 0, 2 * Math.PI);
  ctx.fill();
  // heading tick
  const [hx, hy] = worldToScreen(cam, bx + 0.4 * Math.cos(th), by + 0.4 * Math.sin(th));
  ctx.strokeStyle = "#dbe7f3";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(sx, sy);
  ctx.lineTo(hx, hy);
  ctx.stroke();
  // applied twist arrow, world frame
  const [vx, vy] = state.applied_twist;
  if (Math.hypot(vx, vy) > 1e-3) {
    const wx = vx * Math.cos(th) - vy * Math.sin(th);
    const wy = vx * Math.sin(th) + vy * Math.cos(th);
    const [ax, ay] = worldToScreen(cam, bx + wx * 2.5, by + wy * 2.5);
    ctx.strokeStyle = "#f0c36d";
    arrow(ctx, sx, sy, ax, ay);
  }
}

function drawScan(
  ctx: CanvasRenderingContext2D,
  cam: Camera,
  state: StatePayload,
): void {
  ctx.fillStyle = "#e06c5b";
  for (const [px, py] of scanToPoints(state.base_pose, state.scan, LIDAR_DRAW_CUTOFF)) {
    const [sx, sy] = worldToScreen(cam, px, py);
    ctx.fillRect(sx - 1.5, sy - 1.5, 3, 3);
  }
}

/**
 * Screen-edge glow: the haptic cue a pedal would push back with, rendered
 * as a red wash on the edge the force points away from.
 */
function drawEdgeGlow(
  ctx: CanvasRenderingContext2D,
  w: number,
  h: number,
  cue: CueChannel,
): void {
  if (!cue.active) return;
  const mag = Math.hypot(cue.force_xy[0], cue.force_xy[1]);
  if (mag < 1e-9) return;
  const alpha = 0.45 * Math.tanh(mag / 1000);
  const band = 26;
  ctx.globalAlpha = alpha;
  ctx.fillStyle = "#e0433a";
  // force in robot frame: +x forward (screen top), +y left (screen left)
  const [fx, fy] = cue.force_xy;
  if (fx > 0) ctx.fillRect(0, 0, w, band);
  if (fx < 0) ctx.fillRect(0, h - band, w, band);
  if (fy > 0) ctx.fillRect(0, 0, band, h);
  if (fy < 0) ctx.fillRect(w - band, 0, band, h);
  ctx.globalAlpha = 1;
}

/**
 * Pedal widget: commanded direction plus the opposing cue vector, drawn
 * in the robot frame (up = forward, left = +y).
 */
function drawPedalWidget(
  ctx: CanvasRenderingContext2D,
  cx: number,
  cy: number,
  radius: number,
  commanded: Twist,
  cue: CueChannel | null,
): void {
  ctx.strokeStyle = "#58708c";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(cx, cy, radius, 0, 2 * Math.PI);
  ctx.stroke();
  ctx.beginPath();
  ctx.moveTo(cx - radius, cy);
  ctx.lineTo(cx + radius, cy);
  ctx.moveTo(cx, cy - radius);
  ctx.lineTo(cx, cy + radius);
  ctx.stroke();

  const toWidget = (x: number, y: number, scale: number): [number, number] => [
    cx - y * scale,
    cy - x * scale,
  ];

  const [vx, vy, omega] = commanded;
  if (Math.hypot(vx, vy) > 1e-3) {
    const k = radius / 0.3;
    const [ax, ay] = toWidget(vx, vy, k * 0.9);
    ctx.strokeStyle = "#f0c36d";
    ctx.lineWidth = 3;
    arrow(ctx, cx, cy, ax, ay);
  }
  if (Math.abs(omega) > 1e-3) {
    // rim arc for the yaw axis, counterclockwise positive
    ctx.strokeStyle = "#f0c36d";
    ctx.lineWidth = 3;
    ctx.beginPath();
    ctx.arc(cx, cy, radius + 6, -Math.PI / 2, -Math.PI / 2 - omega * 1.6, omega > 0);
    ctx.stroke();
  }
  if (cue && cue.active) {
    const mag = Math.hypot(cue.force_xy[0], cue.force_xy[1]);
    if (mag > 1e-9) {
      const len = radius * 0.9 * Math.tanh(mag / 1000);
      const [fxu, fyu] = [cue.force_xy[0] / mag, cue.force_xy[1] / mag];
      const [ax, ay] = toWidget(fxu * len, fyu * len, 1);
      ctx.strokeStyle = "#e0433a";
      ctx.lineWidth = 3;
      arrow(ctx, cx, cy, ax, ay);
    }
  }
}

/** Side-view stick figure of one arm: pitch joints drawn, yaw flattened. */
function drawArmFigure(
  ctx: CanvasRenderingContext2D,
  ox: number,
  oy: number,
  q: number[],
  color: string,
): void {
  const segs = [0.28, 0.22, 0.15];
  const pitches = [q[1] ?? 0, q[2] ?? 0, q[4] ?? 0];
  const k = 150;
  let x = ox;
  let y = oy;
  let phi = 0;
  ctx.strokeStyle = color;
  ctx.lineWidth = 3;
  ctx.beginPath();
  ctx.moveTo(x, y - 0.1 * k);
  y -= 0.1 * k; // shoulder riser
  for (let i = 0; i < segs.length; i++) {
    phi += pitches[i];
    x += segs[i] * k * Math.cos(phi);
    y += segs[i] * k * Math.sin(phi);
    ctx.lineTo(x, y);
  }
  ctx.stroke();
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.arc(ox, oy - 0.1 * k, 4, 0, 2 * Math.PI);
  ctx.fill();
}

function drawPanel(
  ctx: CanvasRenderingContext2D,
  x0: number,
  width: number,
  height: number,
  store: ConsoleStore,
  fps: number,
): void {
  ctx.fillStyle = "#16202c";
  ctx.fillRect(x0, 0, width, height);

  ctx.fillStyle = "#dbe7f3";
  ctx.font = "14px system-ui, sans-serif";
  ctx.fillText("arm posture", x0 + 16, 28);

  const st = store.state;
  if (st && st.arms.length) {
    const latest = st.arms[st.arms.length - 1];
    drawArmFigure(ctx, x0 + 40, 140, latest.q_left, "#6fb1e8");
    drawArmFigure(ctx, x0 + 40, 260, latest.q_right, "#e8a46f");
    ctx.fillStyle = "#8aa0b8";
    ctx.font = "12px system-ui, sans-serif";
    ctx.fillText("left", x0 + 16, 120);
    ctx.fillText("right", x0 + 16, 240);
    if (st.manip.length >= 2) {
      ctx.fillText(`w_left  ${st.manip[0].toFixed(3)}`, x0 + 160, 120);
      ctx.fillText(`w_right ${st.manip[1].toFixed(3)}`, x0 + 160, 240);
    }
  }

  // metric strip
  ctx.fillStyle = "#dbe7f3";
  ctx.font = "14px system-ui, sans-serif";
  const lines = [
    `N_coll  ${store.tally.nColl}`,
    `T       ${store.tally.elapsed.toFixed(2)} s`,
    `tick    ${store.stateTick >= 0 ? store.stateTick : "-"}`,
    `fps     ${fps.toFixed(0)}`,
    `link    ${store.connection}`,
  ];
  if (store.episodeStatus) lines.push(`status  ${store.episodeStatus}`);
  lines.forEach((line, i) => ctx.fillText(line, x0 + 16, 330 + 22 * i));

  if (store.recording) {
    ctx.fillStyle = "#e0433a";
    ctx.beginPath();
    ctx.arc(x0 + width - 28, 24, 7, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillStyle = "#dbe7f3";
    ctx.font = "12px system-ui, sans-serif";
    ctx.fillText("REC", x0 + width - 62, 28);
  }
}

/** One full display pass. */
export function renderFrame(
  ctx: CanvasRenderingContext2D,
  width: number,
  height: number,
  store: ConsoleStore,
  commanded: Twist,
  fps: number,
  nowMs: number,
): void {
  const mapW = width - PANEL_W;
  ctx.fillStyle = "#0e1620";
  ctx.fillRect(0, 0, width, height);

  const st = store.state;
  if (st) {
    const cam: Camera = {
      cx: st.base_pose[0],
      cy: st.base_pose[1],
      scale: Math.min(mapW, height) / MAP_SPAN,
      width: mapW,
      height,
    };
    drawGrid(ctx, cam);
    if (store.overlay) drawOverlay(ctx, cam, st, store.overlayThreshold);
    drawScan(ctx, cam, st);
    drawRobot(ctx, cam, st);
    if (store.cue) drawEdgeGlow(ctx, mapW, height, store.cue.mixed);
  } else {
    ctx.fillStyle = "#8aa0b8";
    ctx.font = "16px system-ui, sans-serif";
    ctx.fillText(`waiting for telemetry (${store.connection})`, 40, height / 2);
  }

  drawPedalWidget(ctx, 110, height - 110, 70, commanded, store.cue ? store.cue.mixed : null);
  drawPanel(ctx, mapW, PANEL_W, height, store, fps);

  if (store.stale(nowMs)) {
    ctx.fillStyle = "#f0c36d";
    ctx.font = "bold 18px system-ui, sans-serif";
    ctx.fillText("STALE", mapW / 2 - 30, 34);
  }

  const toast = store.activeToast(nowMs);
  if (toast) {
    ctx.fillStyle = "#2a1b1b";
    ctx.fillRect(mapW / 2 - 220, height - 56, 440, 36);
    ctx.strokeStyle = "#e0433a";
    ctx.lineWidth = 1;
    ctx.strokeRect(mapW / 2 - 220, height - 56, 440, 36);
    ctx.fillStyle = "#f3c9c4";
    ctx.font = "13px system-ui, sans-serif";
    ctx.fillText(toast.message.slice(0, 60), mapW / 2 - 206, height - 33);
  }
}
