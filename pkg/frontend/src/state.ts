/** Event-sourced session state for the lyric steering surface.
 *
 * Every input, user gestures and server responses alike, enters the session
 * as an event, and `reduce` is a pure function, so replaying a recorded log
 * reproduces the session exactly. Redecode responses carry the sequence
 * number of the request that produced them; the reducer applies a response
 * only when it answers the newest request, which is what makes stale
 * responses harmless no matter how the network reorders them.
 */

import type { JobSnapshot, Knobs, LyricResult, Segment } from "./types.js";

export interface DraftLine {
  segmentIndex: number;
  text: string;
}

export interface HistoryEntry {
  knobs: Knobs;
  topLines: (string | null)[];
}

export interface ArchivedSession {
  jobId: string;
  fileName: string;
  draftText: string;
  topLines: (string | null)[];
}

export type Phase =
  | "idle"
  | "uploading"
  | "polling"
  | "ready"
  | "redecoding"
  | "failed";

export interface SessionState {
  jobId: string | null;
  fileName: string | null;
  /** Name of a file whose upload is in flight, promoted on job_created. */
  pendingFileName: string | null;
  snapshot: JobSnapshot | null;
  phase: Phase;
  /** Current slider values; may be ahead of what the server last decoded. */
  knobs: Knobs;
  /** Knobs that produced the candidates currently on screen. */
  appliedKnobs: Knobs;
  /** segment index -> selected candidate index, always within n-best bounds. */
  selected: Record<number, number>;
  /** Accepted lines, kept in segment-time order. */
  draft: DraftLine[];
  /** (knobs, top-1 per segment) for every superseded decode of this job. */
  history: HistoryEntry[];
  /** Prior sessions, archived when a new upload starts a job. */
  archive: ArchivedSession[];
  error: string | null;
  /** Transient prompt, e.g. a refresh request after a stale accept. */
  notice: string | null;
  /** Sequence number of the newest redecode request issued. */
  requestSeq: number;
  /** Sequence number of the newest redecode response applied. */
  appliedSeq: number;
}

export type UiEvent =
  | { type: "upload_started"; fileName: string }
  | { type: "upload_rejected"; message: string }
  | { type: "job_created"; jobId: string }
  | { type: "snapshot_received"; snapshot: JobSnapshot }
  | { type: "poll_failed"; message: string }
  | { type: "knob_changed"; name: keyof Knobs; value: number }
  | { type: "redecode_requested"; seq: number; overrides: Knobs }
  | { type: "redecode_succeeded"; seq: number; snapshot: JobSnapshot }
  | { type: "redecode_failed"; seq: number; message: string }
  | { type: "candidate_selected"; segmentIndex: number; candidateIndex: number }
  | { type: "line_accepted"; segmentIndex: number; candidateIndex: number }
  | { type: "draft_line_removed"; segmentIndex: number };

/** Matches the server's decoder defaults; replaced by the result echo on done. */
export const DEFAULT_KNOBS: Knobs = {
  lm_weight: 1.0,
  beam_width: 64,
  word_penalty: 0.0,
  p_sub: 0.15,
  p_del: 0.05,
  p_ins: 0.05,
};

export function initialState(): SessionState {
  return {
    jobId: null,
    fileName: null,
    pendingFileName: null,
    snapshot: null,
    phase: "idle",
    knobs: { ...DEFAULT_KNOBS },
    appliedKnobs: { ...DEFAULT_KNOBS },
    selected: {},
    draft: [],
    history: [],
    archive: [],
    error: null,
    notice: null,
    requestSeq: 0,
    appliedSeq: 0,
  };
}

/** Top-ranked line per segment, null where a segment decoded to nothing. */
export function topLines(snapshot: JobSnapshot | null): (string | null)[] {
  const segments = snapshot?.result?.segments ?? [];
  return segments.map((s) => s.candidates[0]?.text ?? null);
}

/** Accepted lines joined by newlines; the export format. */
export function draftText(state: SessionState): string {
  return state.draft.map((line) => line.text).join("\n");
}

/** Knob values a finished decode actually used, read back from its echo. */
export function knobsFromResult(result: LyricResult): Knobs {
  return {
    lm_weight: result.config.decoder.lm_weight,
    beam_width: result.config.decoder.beam_width,
    word_penalty: result.config.decoder.word_insertion_penalty,
    p_sub: result.config.channel.p_sub,
    p_del: result.config.channel.p_del,
    p_ins: result.config.channel.p_ins,
  };
}

function candidateAt(
  snapshot: JobSnapshot | null,
  segmentIndex: number,
  candidateIndex: number,
): { segment: Segment; text: string } | null {
  const segment = snapshot?.result?.segments[segmentIndex];
  const candidate = segment?.candidates[candidateIndex];
  if (!segment || !candidate) return null;
  return { segment, text: candidate.text };
}

/** Carry selections across a redecode by text identity, clearing the rest. */
function reconcileSelections(
  selected: Record<number, number>,
  before: JobSnapshot | null,
  after: JobSnapshot,
): Record<number, number> {
  const next: Record<number, number> = {};
  const afterSegments = after.result?.segments ?? [];
  for (const [key, candidateIndex] of Object.entries(selected)) {
    const segmentIndex = Number(key);
    const previous = candidateAt(before, segmentIndex, candidateIndex);
    if (!previous) continue;
    const candidates = afterSegments[segmentIndex]?.candidates ?? [];
    const kept = candidates.findIndex((c) => c.text === previous.text);
    if (kept >= 0) next[segmentIndex] = kept;
  }
  return next;
}

/** Drop draft lines that point past the segments a new result carries. The
 * service keeps segments stable across redecodes, so this is a guard for
 * malformed logs rather than a path real sessions take. */
function clampDraft(draft: DraftLine[], snapshot: JobSnapshot): DraftLine[] {
  const count = snapshot.result?.segments.length ?? 0;
  const kept = draft.filter((l) => l.segmentIndex < count);
  return kept.length === draft.length ? draft : kept;
}

function archiveCurrent(state: SessionState): ArchivedSession[] {
  if (state.jobId === null) return state.archive;
  return [
    ...state.archive,
    {
      jobId: state.jobId,
      fileName: state.fileName ?? "",
      draftText: draftText(state),
      topLines: topLines(state.snapshot),
    },
  ];
}

function phaseAfterAbortedUpload(state: SessionState): Phase {
  if (state.snapshot?.state === "done") return "ready";
  if (state.snapshot?.state === "failed") return "failed";
  if (state.jobId !== null) return "polling";
  return "idle";
}

export function reduce(state: SessionState, event: UiEvent): SessionState {
  switch (event.type) {
    case "upload_started":
      return {
        ...state,
        pendingFileName: event.fileName,
        phase: "uploading",
        error: null,
        notice: null,
      };

    case "upload_rejected":
      // No job id is stored; the prior session, if any, stays active.
      return {
        ...state,
        pendingFileName: null,
        phase: phaseAfterAbortedUpload(state),
        error: event.message,
      };

    case "job_created":
      // Starting a job supersedes the prior session, which moves to the
      // archive with its draft and top lines intact.
      return {
        ...initialState(),
        archive: archiveCurrent(state),
        jobId: event.jobId,
        fileName: state.pendingFileName,
        phase: "polling",
      };

    case "snapshot_received": {
      if (event.snapshot.id !== state.jobId) return state; // stale poll
      const next: SessionState = { ...state, snapshot: event.snapshot };
      if (event.snapshot.result) {
        next.selected = reconcileSelections(state.selected, state.snapshot, event.snapshot);
        next.draft = clampDraft(state.draft, event.snapshot);
      }
      if (event.snapshot.state === "failed") {
        next.phase = "failed";
        next.error = event.snapshot.error;
      } else if (event.snapshot.state === "done") {
        next.phase = "ready";
        if (state.snapshot?.state !== "done" && event.snapshot.result) {
          const knobs = knobsFromResult(event.snapshot.result);
          next.knobs = knobs;
          next.appliedKnobs = knobs;
        }
      }
      return next;
    }

    case "poll_failed":
      if (state.phase !== "polling") return state;
      return { ...state, phase: "failed", error: event.message };

    case "knob_changed":
      // Deliberately leaves draft and selections alone.
      return {
        ...state,
        knobs: { ...state.knobs, [event.name]: event.value },
      };

    case "redecode_requested":
      return {
        ...state,
        phase: "redecoding",
        error: null,
        requestSeq: Math.max(state.requestSeq, event.seq),
      };

    case "redecode_succeeded": {
      // A response is stale once a newer request exists or it was already
      // applied; either way it is dropped without touching the state.
      if (event.seq !== state.requestSeq || event.seq <= state.appliedSeq) {
        return state;
      }
      if (!event.snapshot.result) return state;
      const knobs = knobsFromResult(event.snapshot.result);
      return {
        ...state,
        snapshot: event.snapshot,
        phase: "ready",
        history: [
          ...state.history,
          { knobs: state.appliedKnobs, topLines: topLines(state.snapshot) },
        ],
        appliedKnobs: knobs,
        selected: reconcileSelections(state.selected, state.snapshot, event.snapshot),
        draft: clampDraft(state.draft, event.snapshot),
        appliedSeq: event.seq,
        notice: null,
      };
    }

    case "redecode_failed":
      if (event.seq !== state.requestSeq) return state;
      return { ...state, phase: "ready", error: event.message };

    case "candidate_selected": {
      const hit = candidateAt(state.snapshot, event.segmentIndex, event.candidateIndex);
      if (!hit) {
        return { ...state, notice: "candidates changed; refresh your pick" };
      }
      return {
        ...state,
        selected: { ...state.selected, [event.segmentIndex]: event.candidateIndex },
        notice: null,
      };
    }

    case "line_accepted": {
      const hit = candidateAt(state.snapshot, event.segmentIndex, event.candidateIndex);
      if (!hit) {
        return { ...state, notice: "candidates changed; refresh your pick" };
      }
      // One line per segment; segments are time-ordered, so ordering by
      // index keeps the draft in segment-time order.
      const draft = state.draft.filter((l) => l.segmentIndex !== event.segmentIndex);
      draft.push({ segmentIndex: event.segmentIndex, text: hit.text });
      draft.sort((a, b) => a.segmentIndex - b.segmentIndex);
      return { ...state, draft, notice: null };
    }

    case "draft_line_removed":
      return {
        ...state,
        draft: state.draft.filter((l) => l.segmentIndex !== event.segmentIndex),
      };
  }
}

export function replay(events: readonly UiEvent[]): SessionState {
  return events.reduce(reduce, initialState());
}
