/** Side-effect shell around the pure session reducer.
 *
 * Owns the event log and performs the I/O the reducer must not: uploading,
 * polling at a fixed interval until the job settles, and firing debounced
 * redecodes. At most one redecode request is in flight per job; knob moves
 * that land while one is out are coalesced into a single follow-up request,
 * so the request rate stays bounded by the debounce interval.
 */

import { ApiError, type LyricApi } from "./api.js";
import { debounce, type Debounced } from "./debounce.js";
import {
  draftText,
  initialState,
  reduce,
  replay,
  type SessionState,
  type UiEvent,
} from "./state.js";
import type { JobSnapshot, Knobs } from "./types.js";

export interface ControllerOptions {
  pollIntervalMs?: number;
  pollTimeoutMs?: number;
  debounceMs?: number;
}

export type StateListener = (state: SessionState) => void;

const sleep = (ms: number): Promise<void> =>
  new Promise((resolve) => setTimeout(resolve, ms));

export class SessionController {
  private state: SessionState = initialState();
  private readonly log: UiEvent[] = [];
  private readonly listeners = new Set<StateListener>();
  private readonly pollIntervalMs: number;
  private readonly pollTimeoutMs: number;
  private readonly redecodeSoon: Debounced<[]>;
  private redecodeInFlight = false;
  private redecodeQueued = false;

  constructor(
    private readonly api: LyricApi,
    options: ControllerOptions = {},
  ) {
    this.pollIntervalMs = options.pollIntervalMs ?? 500;
    this.pollTimeoutMs = options.pollTimeoutMs ?? 120_000;
    this.redecodeSoon = debounce(() => {
      void this.fireRedecode();
    }, options.debounceMs ?? 500);
  }

  getState(): SessionState {
    return this.state;
  }

  /** The full event log; replaying it reproduces getState() exactly. */
  getLog(): readonly UiEvent[] {
    return this.log;
  }

  subscribe(listener: StateListener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  exportDraft(): string {
    return draftText(this.state);
  }

  /** Sanity hook: the state must always equal the replayed log. */
  replayLog(): SessionState {
    return replay(this.log);
  }

  private dispatch(event: UiEvent): void {
    this.log.push(event);
    this.state = reduce(this.state, event);
    for (const listener of this.listeners) listener(this.state);
  }

  /** Upload a clip and poll its job until it settles or times out. */
  async submitAudio(
    fileName: string,
    data: Blob | Uint8Array<ArrayBuffer> | ArrayBuffer,
    config?: Record<string, unknown>,
  ): Promise<void> {
    this.redecodeSoon.cancel();
    this.dispatch({ type: "upload_started", fileName });
    let jobId: string;
    try {
      ({ id: jobId } = await this.api.submitJob({ name: fileName, data }, config));
    } catch (err) {
      this.dispatch({ type: "upload_rejected", message: messageOf(err) });
      return;
    }
    this.dispatch({ type: "job_created", jobId });
    await this.poll(jobId);
  }

  private async poll(jobId: string): Promise<void> {
    const deadline = Date.now() + this.pollTimeoutMs;
    while (this.state.jobId === jobId) {
      if (Date.now() > deadline) {
        this.dispatch({
          type: "poll_failed",
          message: `timed out after ${this.pollTimeoutMs / 1000} s waiting for the job`,
        });
        return;
      }
      let snapshot: JobSnapshot;
      try {
        snapshot = await this.api.getJob(jobId);
      } catch (err) {
        this.dispatch({ type: "poll_failed", message: messageOf(err) });
        return;
      }
      if (this.state.jobId !== jobId) return; // superseded while awaiting
      this.dispatch({ type: "snapshot_received", snapshot });
      if (snapshot.state === "done" || snapshot.state === "failed") return;
      await sleep(this.pollIntervalMs);
    }
  }

  /** Move one knob; schedules a coalesced redecode once the job is done. */
  setKnob(name: keyof Knobs, value: number): void {
    this.dispatch({ type: "knob_changed", name, value });
    if (this.state.snapshot?.state === "done") this.redecodeSoon();
  }

  private async fireRedecode(): Promise<void> {
    if (this.redecodeInFlight) {
      this.redecodeQueued = true;
      return;
    }
    const jobId = this.state.jobId;
    if (jobId === null || this.state.snapshot?.state !== "done") return;
    const seq = this.state.requestSeq + 1;
    const overrides = overridesPayload(this.state.knobs);
    this.dispatch({ type: "redecode_requested", seq, overrides: { ...this.state.knobs } });
    this.redecodeInFlight = true;
    try {
      const snapshot = await this.api.redecode(jobId, overrides);
      this.dispatch({ type: "redecode_succeeded", seq, snapshot });
    } catch (err) {
      const message =
        err instanceof ApiError && err.status === 409
          ? `job busy (${err.message})`
          : messageOf(err);
      this.dispatch({ type: "redecode_failed", seq, message });
    } finally {
      this.redecodeInFlight = false;
      if (this.redecodeQueued) {
        this.redecodeQueued = false;
        void this.fireRedecode();
      }
    }
  }

  selectCandidate(segmentIndex: number, candidateIndex: number): void {
    this.dispatch({ type: "candidate_selected", segmentIndex, candidateIndex });
  }

  acceptLine(segmentIndex: number, candidateIndex: number): void {
    this.dispatch({ type: "line_accepted", segmentIndex, candidateIndex });
  }

  removeDraftLine(segmentIndex: number): void {
    this.dispatch({ type: "draft_line_removed", segmentIndex });
  }
}

/** Knob values as the wire payload; beam width must arrive as an integer. */
function overridesPayload(knobs: Knobs): Record<string, number> {
  return {
    lm_weight: knobs.lm_weight,
    beam_width: Math.round(knobs.beam_width),
    word_penalty: knobs.word_penalty,
    p_sub: knobs.p_sub,
    p_del: knobs.p_del,
    p_ins: knobs.p_ins,
  };
}

function messageOf(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}
