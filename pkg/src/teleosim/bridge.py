"""Wire protocol and WebSocket endpoint between the loop and a console.

Frames are UTF-8 JSON text, schema version 1, kinds state / cue / command /
control / ack plus server-emitted error frames. Floats go out with 17
significant digits so any frame re-encodes byte-exactly. One operator
client at a time; telemetry rides a bounded drop-oldest queue so a slow
consumer can never stall the 50 Hz loop, and commands ride the session's
latest-wins queue, acked with the tick they were applied at.
"""

from __future__ import annotations

import asyncio
import json
import threading
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .manipfield import default_surrogate
from .scenarios import WholeBodyAction, make_scenario
from .session import (DT, FeedbackFlags, QueueOperator, SessionConfig,
                      compute_metrics, run_episode)

PROTOCOL_VERSION = 1
DEFAULT_PORT = 8765
TELEMETRY_DEPTH = 64
KINDS = ("state", "cue", "command", "control", "ack", "error")
_CONTROL_OPS = ("start", "stop", "reset")


@dataclass
class WireMessage:
    kind: str
    tick: int
    payload: dict = field(default_factory=dict)


def _fmt(value):
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not np.isfinite(value):
            raise ValueError("non-finite number on the wire")
        return format(value, ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    if isinstance(value, dict):
        items = []
        for k, v in value.items():
            if not isinstance(k, str):
                raise ValueError("payload keys must be strings")
            items.append(json.dumps(k) + ":" + _fmt(v))
        return "{" + ",".join(items) + "}"
    raise ValueError(f"cannot serialize {type(value).__name__}")


def encode(msg: WireMessage) -> str:
    """WireMessage -> one-line JSON text frame (17-digit floats, fixed key
    order), so decode(encode(m)) == m and re-encoding is byte-stable."""
    if msg.kind not in KINDS:
        raise ValueError(f"unknown kind {msg.kind!r}")
    tick = int(msg.tick)
    if tick < 0:
        raise ValueError("tick must be nonnegative")
    return ('{"v":' + str(PROTOCOL_VERSION)
            + ',"kind":' + json.dumps(msg.kind)
            + ',"tick":' + str(tick)
            + ',"payload":' + _fmt(msg.payload) + "}")


def decode(text) -> WireMessage:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ValueError(f"invalid JSON: {err.msg}") from err
    if not isinstance(raw, dict):
        raise ValueError("frame must be a JSON object")
    if raw.get("v") != PROTOCOL_VERSION:
        raise ValueError("unsupported protocol version")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    tick = raw.get("tick")
    if isinstance(tick, bool) or not isinstance(tick, int) or tick < 0:
        raise ValueError("tick must be a nonnegative integer")
    payload = raw.get("payload")
    if not isinstance(payload, dict):
        raise ValueError("payload must be a JSON object")
    if kind == "command":
        _check_command(payload)
    elif kind == "control":
        # client->server requests carry an op; server->client notices an event
        if "op" in payload:
            if payload["op"] not in _CONTROL_OPS:
                raise ValueError("missing or unknown control op")
        elif not isinstance(payload.get("event"), str):
            raise ValueError("missing or unknown control op")
    return WireMessage(kind=kind, tick=tick, payload=payload)


def _check_command(payload):
    if "twist" not in payload:
        raise ValueError("missing twist")
    twist = payload["twist"]
    ok = (isinstance(twist, list) and len(twist) == 3
          and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                  and np.isfinite(v) for v in twist))
    if not ok:
        raise ValueError("twist must be three finite numbers")
    for key in ("q_left", "q_right"):
        if key in payload:
            arm = payload[key]
            ok = (isinstance(arm, list)
                  and all(isinstance(v, (int, float))
                          and not isinstance(v, bool) and np.isfinite(v)
                          for v in arm))
            if not ok:
                raise ValueError(f"{key} must be finite numbers")


def _cue_payload(cue):
    return {"force_xy": list(cue.force_xy), "yaw_torque": cue.yaw_torque,
            "source": cue.source, "active": cue.active,
            "degenerate": cue.degenerate}


def state_frame(record, scan_ranges=None) -> WireMessage:
    """50 Hz state frame carrying the tick's pair of 100 Hz arm samples.

    `scan_ranges` is the full lidar sweep (beam 0 along the base heading,
    counterclockwise); the log keeps only the 8-sector digest, so the live
    endpoint passes the ranges through before they are discarded.
    """
    payload = {
        "time": record.time,
        "base_pose": list(record.base_pose),
        "arms": [
            {"time": t, "q_left": list(ql), "qd_left": list(dl),
             "q_right": list(qr), "qd_right": list(dr)}
            for (t, ql, dl, qr, dr) in record.substates
        ],
        "tau_left": list(record.left.tau),
        "tau_right": list(record.right.tau),
        "commanded_twist": list(record.commanded_twist),
        "applied_twist": list(record.action.base_twist),
        "scan": [] if scan_ranges is None else list(scan_ranges),
        "scan_sectors": list(record.scan_sectors),
        "manip": list(record.manip),
        "events": record.events,
    }
    return WireMessage("state", record.tick, payload)


def cue_frame(record) -> WireMessage:
    return WireMessage("cue", record.tick,
                       {name: _cue_payload(c)
                        for name, c in record.cues.items()})


class _AckingOperator(QueueOperator):
    """QueueOperator that remembers which client ticks each drain consumed."""

    def __init__(self, initial):
        super().__init__(initial)
        self._tags = deque()
        self.drained = []

    def push_tagged(self, action, client_tick):
        self._tags.append(client_tick)
        self.push(action)

    def next_command(self, tick, world, arm_states):
        self.drained = list(self._tags)
        self._tags.clear()
        return super().next_command(tick, world, arm_states)


class BridgeServer:
    """One-client WebSocket endpoint around the session loop.

    Episodes start on client `control` frames; the engine runs on its own
    thread, paced to wall clock when `pace` is set, publishing through
    bounded deques the async side drains. Nothing the client does (or fails
    to read) can block an engine tick.
    """

    def __init__(self, port=DEFAULT_PORT, pace=True,
                 telemetry_depth=TELEMETRY_DEPTH):
        self.port = port
        self.pace = pace
        self.telemetry = deque(maxlen=telemetry_depth)
        self.acks = deque()
        self.events = deque()
        self.dropped = 0
        self.tick_walltimes = []
        self._loop = None
        self._wake = None
        self._client = None
        self._thread = None
        self._finished = True
        self._operator = None
        self._config = None
        self._flags = None
        self._last_targets = None
        self._surrogates = {}
        self.bound_port = None
        self.last_log = None

    # --- engine side (worker thread) -----------------------------------

    def _notify(self):
        if self._loop is not None and not self._loop.is_closed():
            self._loop.call_soon_threadsafe(self._wake.set)

    def _on_tick(self, record, scan):
        if self.pace:
            target = self._t0 + (record.tick + 1) * DT
            delay = target - time.monotonic()
            if delay > 0:
                time.sleep(delay)
        self.tick_walltimes.append(time.monotonic())
        if len(self.telemetry) == self.telemetry.maxlen:
            self.dropped += 1
        self.telemetry.append(encode(state_frame(record, scan.ranges)))
        if len(self.telemetry) == self.telemetry.maxlen:
            self.dropped += 1
        self.telemetry.append(encode(cue_frame(record)))
        for client_tick in self._operator.drained:
            self.acks.append(encode(WireMessage(
                "ack", record.tick, {"command_tick": client_tick,
                                     "applied_tick": record.tick})))
        self._operator.drained = []
        self._notify()

    def _engine_worker(self, cfg, flags, seed):
        self._t0 = time.monotonic()
        log = run_episode(cfg, operator=self._operator, flags=flags,
                          seed=seed, on_tick=self._on_tick)
        self.last_log = log
        metrics = (compute_metrics(log).to_dict() if log.ticks else None)
        last = log.ticks[-1].tick if log.ticks else 0
        # mark done before publishing: a client reacting to the finished
        # event may request a new start before this thread fully exits
        self._finished = True
        self.events.append(encode(WireMessage(
            "control", last, {"event": "finished",
                              "status": log.metadata["status"],
                              "metrics": metrics})))
        self._notify()

    def engine_running(self):
        return (self._thread is not None and self._thread.is_alive()
                and not self._finished)

    def start_episode(self, scenario_name, flags=None, seed=0, overrides=None):
        if self.engine_running():
            raise ValueError("episode already running")
        if self._thread is not None and self._thread.is_alive():
            self._thread.join(timeout=5.0)
        flags = flags if flags is not None else FeedbackFlags()
        scenario = make_scenario(scenario_name, **(overrides or {}))
        surrogate = None
        if flags.guidance:
            if scenario_name not in self._surrogates:
                self._surrogates[scenario_name] = default_surrogate(
                    scenario.chain)
            surrogate = self._surrogates[scenario_name]
        cfg = SessionConfig(scenario=scenario, surrogate=surrogate)
        self._config = cfg
        self._flags = flags
        self._last_targets = (scenario.q0[0].copy(), scenario.q0[1].copy())
        self._operator = _AckingOperator(
            WholeBodyAction.hold(scenario.q0[0], scenario.q0[1]))
        self._finished = False
        self._thread = threading.Thread(
            target=self._engine_worker, args=(cfg, flags, seed), daemon=True)
        self._thread.start()

    def stop_episode(self):
        if self._operator is not None:
            self._operator.close()

    # --- client side (event loop) --------------------------------------

    def _apply_command(self, msg):
        if not self.engine_running():
            raise ValueError("no active episode")
        p = msg.payload
        ql, qr = self._last_targets
        if "q_left" in p:
            ql = np.asarray(p["q_left"], dtype=float)
        if "q_right" in p:
            qr = np.asarray(p["q_right"], dtype=float)
        n = self._config.scenario.chain.n
        if ql.shape != (n,) or qr.shape != (n,):
            raise ValueError(f"arm targets must have {n} joints")
        action = WholeBodyAction(np.asarray(p["twist"], dtype=float), ql, qr)
        self._last_targets = (ql, qr)
        self._operator.push_tagged(action, msg.tick)

    def _handle(self, msg: WireMessage):
        """Returns an immediate reply frame or None."""
        if msg.kind == "command":
            self._apply_command(msg)
            return None
        if msg.kind == "control":
            op = msg.payload["op"]
            if op == "start":
                flags = (FeedbackFlags.from_dict(msg.payload["flags"])
                         if "flags" in msg.payload else None)
                self.start_episode(
                    msg.payload.get("scenario", "wall_approach"),
                    flags=flags, seed=int(msg.payload.get("seed", 0)),
                    overrides=msg.payload.get("overrides"))
                return WireMessage("control", msg.tick, {"event": "started"})
            if op == "stop":
                self.stop_episode()
                return WireMessage("control", msg.tick, {"event": "stopping"})
            self.stop_episode()
            self.telemetry.clear()
            return WireMessage("control", msg.tick, {"event": "reset"})
        raise ValueError(f"unexpected kind {msg.kind!r} from client")

    async def _sender(self, ws):
        while True:
            await self._wake.wait()
            self._wake.clear()
            for queue in (self.telemetry, self.acks, self.events):
                while queue:
                    await ws.send(queue.popleft())

    async def _handler(self, ws):
        if self._client is not None:
            await ws.send(encode(WireMessage("error", 0, {"error": "busy"})))
            await ws.close()
            return
        self._client = ws
        sender = asyncio.ensure_future(self._sender(ws))
        try:
            async for text in ws:
                try:
                    reply = self._handle(decode(text))
                except ValueError as err:
                    reply = WireMessage("error", 0, {"error": str(err)})
                if reply is not None:
                    await ws.send(encode(reply))
        finally:
            sender.cancel()
            self._client = None

    async def run(self, ready=None):
        """Serve until cancelled; `ready` (asyncio.Event) is set once the
        socket is bound and `bound_port` is known."""
        from websockets.asyncio.server import serve as ws_serve
        self._loop = asyncio.get_running_loop()
        self._wake = asyncio.Event()
        async with ws_serve(self._handler, "127.0.0.1", self.port) as server:
            self.bound_port = server.sockets[0].getsockname()[1]
            if ready is not None:
                ready.set()
            await asyncio.Future()


def serve(port=DEFAULT_PORT, pace=True):
    """Blocking convenience wrapper: run the bridge until interrupted."""
    server = BridgeServer(port=port, pace=pace)

    async def main():
        await server.run()

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
    return server
