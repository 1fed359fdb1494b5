/**
 * Console entry point: one WebSocket to the bridge, one rAF render loop.
 * Network events only ever mutate the store; all drawing happens in the
 * loop, so the screen stays coherent no matter how frames arrive.
 */

import { encodeCommand, encodeControl } from "./protocol.js";
import {
  CommandGate,
  OfflineBuffer,
  PedalInput,
  Twist,
  gamepadTwist,
  isBound,
} from "./input.js";
import { ConsoleStore } from "./state.js";
import { renderFrame } from "./render.js";

const SCENARIOS = ["wall_approach", "reach_limited", "corridor", "doorway"];
const RECONNECT_MS = 2000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("view");
const ctx = canvas.getContext("2d");
if (!ctx) throw new Error("2d canvas unavailable");

const scenarioSel = el<HTMLSelectElement>("scenario");
for (const name of SCENARIOS) {
  const opt = document.createElement("option");
  opt.value = name;
  opt.textContent = name;
  scenarioSel.appendChild(opt);
}
const seedBox = el<HTMLInputElement>("seed");
const overlayBox = el<HTMLInputElement>("overlay");
const thresholdBox = el<HTMLInputElement>("threshold");

const store = new ConsoleStore();
const pedal = new PedalInput();
const gate = new CommandGate();
const offline = new OfflineBuffer();

let ws: WebSocket | null = null;
let lastLoopMs = performance.now();
let fps = 0;
let lastSentMoving = false;

function wsUrl(): string {
  const host = location.hostname || "localhost";
  return `ws://${host}:8765`;
}

function connect(): void {
  store.connection = "connecting";
  const sock = new WebSocket(wsUrl());
  ws = sock;
  sock.onopen = () => {
    store.connection = "open";
    for (const text of offline.drain(performance.now())) sock.send(text);
  };
  sock.onmessage = (ev) => {
    if (typeof ev.data === "string") store.ingest(ev.data, performance.now());
  };
  sock.onclose = () => {
    if (ws !== sock) return;
    ws = null;
    store.connection = "closed";
    store.resetEpisode();
    setTimeout(connect, RECONNECT_MS);
  };
  sock.onerror = () => sock.close();
}

function sendControl(op: string, extra: Record<string, unknown> = {}): void {
  if (ws && ws.readyState === WebSocket.OPEN) {
    ws.send(encodeControl(Math.max(store.stateTick, 0), op, extra));
  }
}

el<HTMLButtonElement>("start").onclick = () => {
  const seed = Number.parseInt(seedBox.value, 10) || 0;
  sendControl("start", { scenario: scenarioSel.value, seed });
};
el<HTMLButtonElement>("stop").onclick = () => sendControl("stop");
el<HTMLButtonElement>("reset").onclick = () => sendControl("reset");

overlayBox.onchange = () => {
  store.overlay = overlayBox.checked;
};
thresholdBox.oninput = () => {
  store.overlayThreshold = Number.parseFloat(thresholdBox.value) || 0;
};

window.addEventListener("keydown", (ev) => {
  if (ev.repeat) {
    if (isBound(ev.code)) ev.preventDefault();
    return;
  }
  if (pedal.keyDown(ev.code)) ev.preventDefault();
});
window.addEventListener("keyup", (ev) => pedal.keyUp(ev.code));
window.addEventListener("blur", () => pedal.releaseAll());

function pollGamepad(): Twist | null {
  if (!navigator.getGamepads) return null;
  for (const pad of navigator.getGamepads()) {
    const twist = gamepadTwist(pad);
    if (twist) return twist;
  }
  return null;
}

function loop(nowMs: number): void {
  const dt = Math.min(0.1, (nowMs - lastLoopMs) / 1000);
  lastLoopMs = nowMs;
  if (dt > 0) fps = 0.9 * fps + 0.1 / dt;

  const commanded = pollGamepad() ?? pedal.sample(dt);

  // one command per engine tick at most; idle hands stay quiet, but the
  // engine holds the last command, so a final zero must go out on stop
  const moving = commanded.some((v) => v !== 0);
  const mustFlushZero = !moving && lastSentMoving;
  if (store.recording && (moving || mustFlushZero) && gate.ready(nowMs)) {
    lastSentMoving = moving;
    if (ws && ws.readyState === WebSocket.OPEN) {
      ws.send(encodeCommand(Math.max(store.stateTick, 0), commanded));
    } else {
      offline.push(commanded, Math.max(store.stateTick, 0), nowMs);
    }
  }

  renderFrame(ctx!, canvas.width, canvas.height, store, commanded, fps, nowMs);
  requestAnimationFrame(loop);
}

connect();
requestAnimationFrame(loop);
