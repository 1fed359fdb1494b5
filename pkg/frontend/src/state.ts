/**
 * Console-side view state: the latest frames plus the little bit of
 * bookkeeping the display needs (staleness, connection, running metrics,
 * error toasts). Strictly a view — nothing here simulates, predicts, or
 * writes back into the engine, so a client that reconnects mid-episode is
 * fully repopulated by the next state frame.
 */

import {
  AckPayload,
  CuePayload,
  Frame,
  StatePayload,
  decodeFrame,
} from "./protocol.js";

export type Connection = "connecting" | "open" | "closed";

/** Frames older than this are flagged as stale on screen. */
export const STALE_MS = 500;

const TOAST_MS = 3000;

export interface Toast {
  message: string;
  until: number;
}

/** Running tallies for the metric strip; reset when an episode starts. */
export interface EpisodeTally {
  nColl: number;
  elapsed: number;
}

export class ConsoleStore {
  connection: Connection = "connecting";

  state: StatePayload | null = null;
  stateTick = -1;
  stateAt = -Infinity;

  cue: CuePayload | null = null;
  cueTick = -1;

  lastAck: AckPayload | null = null;

  /** True between the server's started and finished events. */
  recording = false;
  episodeStatus: string | null = null;
  tally: EpisodeTally = { nColl: 0, elapsed: 0 };

  overlay = false;
  overlayThreshold = 0.0;

  toast: Toast | null = null;

  /**
   * Feed one raw socket message. Malformed frames never disturb the
   * last good display: they surface as a toast and nothing else.
   * Returns the decoded frame, or null when it was rejected.
   */
  ingest(text: string, nowMs: number): Frame | null {
    let frame: Frame;
    try {
      frame = decodeFrame(text);
    } catch (err) {
      this.showToast(err instanceof Error ? err.message : String(err), nowMs);
      return null;
    }
    this.apply(frame, nowMs);
    return frame;
  }

  apply(frame: Frame, nowMs: number): void {
    switch (frame.kind) {
      case "state":
        this.state = frame.payload;
        this.stateTick = frame.tick;
        this.stateAt = nowMs;
        this.tally.nColl += frame.payload.events;
        this.tally.elapsed = frame.payload.time;
        break;
      case "cue":
        this.cue = frame.payload;
        this.cueTick = frame.tick;
        break;
      case "ack":
        this.lastAck = frame.payload;
        break;
      case "error":
        this.showToast(frame.payload.error, nowMs);
        break;
      case "control":
        this.applyControlEvent(frame.payload.event, frame.payload, nowMs);
        break;
      case "command":
        // server never sends commands; tolerate and ignore
        break;
    }
  }

  private applyControlEvent(
    event: string | undefined,
    payload: Record<string, unknown>,
    nowMs: number,
  ): void {
    if (event === "started") {
      this.recording = true;
      this.episodeStatus = null;
      this.tally = { nColl: 0, elapsed: 0 };
    } else if (event === "finished") {
      this.recording = false;
      this.episodeStatus =
        typeof payload.status === "string" ? payload.status : "done";
      const metrics = payload.metrics;
      if (metrics && typeof metrics === "object") {
        const m = metrics as Record<string, unknown>;
        if (typeof m.n_coll === "number") this.tally.nColl = m.n_coll;
        if (typeof m.duration === "number") this.tally.elapsed = m.duration;
      }
      this.showToast(`episode ${this.episodeStatus}`, nowMs);
    }
  }

  showToast(message: string, nowMs: number): void {
    this.toast = { message, until: nowMs + TOAST_MS };
  }

  activeToast(nowMs: number): Toast | null {
    return this.toast && nowMs < this.toast.until ? this.toast : null;
  }

  /** True once frames have arrived but stopped arriving recently. */
  stale(nowMs: number): boolean {
    return this.state !== null && nowMs - this.stateAt > STALE_MS;
  }

  /** Forget the episode bookkeeping but keep display preferences. */
  resetEpisode(): void {
    this.recording = false;
    this.episodeStatus = null;
    this.tally = { nColl: 0, elapsed: 0 };
    this.lastAck = null;
  }
}
