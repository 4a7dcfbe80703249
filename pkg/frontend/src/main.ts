/** DOM wiring for the steering surface; all logic lives in the controller. */

import { ApiClient } from "./api.js";
import { SessionController } from "./controller.js";
import { draftText, type SessionState } from "./state.js";
import type { Knobs, Segment } from "./types.js";
import { decodeWavToMono } from "./wav.js";
import { computePeaks, drawWaveform, segmentSpans, type Peaks } from "./waveform.js";

interface KnobSpec {
  name: keyof Knobs;
  label: string;
  min: number;
  max: number;
  step: number;
}

const KNOB_SPECS: KnobSpec[] = [
  { name: "lm_weight", label: "language model weight", min: 0, max: 3, step: 0.05 },
  { name: "beam_width", label: "beam width", min: 1, max: 256, step: 1 },
  { name: "word_penalty", label: "word insertion penalty", min: -5, max: 5, step: 0.1 },
  { name: "p_sub", label: "substitution rate", min: 0, max: 0.4, step: 0.01 },
  { name: "p_del", label: "deletion rate", min: 0, max: 0.4, step: 0.01 },
  { name: "p_ins", label: "insertion rate", min: 0, max: 0.4, step: 0.01 },
];

const WAVEFORM_BUCKETS = 480;

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

const controller = new SessionController(new ApiClient());

let peaks: Peaks | null = null;
let clipSeconds = 0;

// ---------------------------------------------------------------------------
// Knob sliders are built once; re-rendering them mid-drag would break input.

const knobInputs = new Map<keyof Knobs, HTMLInputElement>();

function buildKnobs(): void {
  const host = byId<HTMLDivElement>("knobs");
  for (const spec of KNOB_SPECS) {
    const row = document.createElement("label");
    row.className = "knob";
    const title = document.createElement("span");
    title.textContent = spec.label;
    const value = document.createElement("output");
    const input = document.createElement("input");
    input.type = "range";
    input.min = String(spec.min);
    input.max = String(spec.max);
    input.step = String(spec.step);
    input.disabled = true;
    input.addEventListener("input", () => {
      value.textContent = input.value;
      controller.setKnob(spec.name, Number(input.value));
    });
    knobInputs.set(spec.name, input);
    row.append(title, input, value);
    host.append(row);
  }
}

function syncKnobs(state: SessionState): void {
  const enabled = state.snapshot?.state === "done";
  for (const [name, input] of knobInputs) {
    input.disabled = !enabled;
    if (document.activeElement !== input) {
      input.value = String(state.knobs[name]);
      const out = input.parentElement?.querySelector("output");
      if (out) out.textContent = formatNumber(state.knobs[name]);
    }
  }
}

function formatNumber(v: number): string {
  return Number.isInteger(v) ? String(v) : v.toFixed(2);
}

// ---------------------------------------------------------------------------
// Rendering

function renderStatus(state: SessionState): void {
  const status = byId<HTMLSpanElement>("status");
  switch (state.phase) {
    case "idle":
      status.textContent = "no clip loaded";
      break;
    case "uploading":
      status.textContent = `uploading ${state.pendingFileName ?? "clip"}...`;
      break;
    case "polling":
      status.textContent = `job ${state.snapshot?.state ?? "queued"}...`;
      break;
    case "redecoding":
      status.textContent = "redecoding...";
      break;
    case "ready":
      status.textContent = `done: ${state.fileName ?? "clip"}`;
      break;
    case "failed":
      status.textContent = "failed";
      break;
  }
  byId<HTMLSpanElement>("error").textContent = state.error ?? "";
  byId<HTMLSpanElement>("notice").textContent = state.notice ?? "";
}

function renderWave(state: SessionState): void {
  const canvas = byId<HTMLCanvasElement>("waveform");
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const segments = state.snapshot?.result?.segments ?? [];
  const spans = segmentSpans(segments, clipSeconds, canvas.width);
  drawWaveform(ctx, canvas.width, canvas.height, peaks, spans);
}

function candidateLabel(text: string): string {
  return text === "" ? "(no words)" : text;
}

function renderSegments(state: SessionState): void {
  const host = byId<HTMLDivElement>("segments");
  host.replaceChildren();
  const segments = state.snapshot?.result?.segments ?? [];
  if (segments.length === 0) {
    const empty = document.createElement("p");
    empty.className = "hint";
    empty.textContent = "upload a clip to see imagined lines per segment";
    host.append(empty);
    return;
  }
  segments.forEach((segment: Segment, segmentIndex: number) => {
    const card = document.createElement("article");
    card.className = "segment";
    const head = document.createElement("h3");
    head.textContent = `segment ${segmentIndex + 1}: ${segment.start_s.toFixed(2)}s to ${segment.end_s.toFixed(2)}s`;
    card.append(head);
    if (segment.error) {
      const err = document.createElement("p");
      err.className = "error";
      err.textContent = segment.error;
      card.append(err);
    }
    segment.candidates.forEach((candidate, candidateIndex) => {
      const row = document.createElement("div");
      row.className = "candidate";
      if (candidateIndex === 0) row.classList.add("top");
      if (state.selected[segmentIndex] === candidateIndex) row.classList.add("selected");
      row.title = candidate.phonemes.join(" ");
      const pick = document.createElement("button");
      pick.textContent = candidateLabel(candidate.text);
      pick.className = "pick";
      pick.addEventListener("click", () =>
        controller.selectCandidate(segmentIndex, candidateIndex),
      );
      const score = document.createElement("span");
      score.className = "score";
      score.textContent = candidate.score.toFixed(2);
      const accept = document.createElement("button");
      accept.textContent = "accept";
      accept.className = "accept";
      accept.addEventListener("click", () =>
        controller.acceptLine(segmentIndex, candidateIndex),
      );
      row.append(pick, score, accept);
      card.append(row);
    });
    host.append(card);
  });
}

function renderDraft(state: SessionState): void {
  const host = byId<HTMLOListElement>("draft");
  host.replaceChildren();
  for (const line of state.draft) {
    const item = document.createElement("li");
    const text = document.createElement("span");
    text.textContent = candidateLabel(line.text);
    const drop = document.createElement("button");
    drop.textContent = "remove";
    drop.addEventListener("click", () => controller.removeDraftLine(line.segmentIndex));
    item.append(text, drop);
    host.append(item);
  }
  byId<HTMLButtonElement>("export").disabled = state.draft.length === 0;
}

function knobSummary(knobs: Knobs): string {
  return (
    `lm=${formatNumber(knobs.lm_weight)} beam=${knobs.beam_width} ` +
    `pen=${formatNumber(knobs.word_penalty)} sub=${formatNumber(knobs.p_sub)} ` +
    `del=${formatNumber(knobs.p_del)} ins=${formatNumber(knobs.p_ins)}`
  );
}

function renderHistory(state: SessionState): void {
  const host = byId<HTMLUListElement>("history");
  host.replaceChildren();
  for (const entry of [...state.history].reverse()) {
    const item = document.createElement("li");
    const knobs = document.createElement("code");
    knobs.textContent = knobSummary(entry.knobs);
    const lines = document.createElement("p");
    lines.textContent = entry.topLines.map((l) => l ?? "(silence)").join(" / ");
    item.append(knobs, lines);
    host.append(item);
  }
}

function renderArchive(state: SessionState): void {
  const host = byId<HTMLUListElement>("archive");
  host.replaceChildren();
  for (const session of [...state.archive].reverse()) {
    const item = document.createElement("li");
    const name = document.createElement("strong");
    name.textContent = session.fileName || session.jobId.slice(0, 8);
    const body = document.createElement("p");
    body.textContent = session.draftText || session.topLines.map((l) => l ?? "").join(" / ");
    item.append(name, body);
    host.append(item);
  }
}

function render(state: SessionState): void {
  renderStatus(state);
  syncKnobs(state);
  renderWave(state);
  renderSegments(state);
  renderDraft(state);
  renderHistory(state);
  renderArchive(state);
}

// ---------------------------------------------------------------------------
// Wiring

function setup(): void {
  buildKnobs();

  const fileInput = byId<HTMLInputElement>("file-input");
  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    void (async () => {
      const bytes = await file.arrayBuffer();
      try {
        const decoded = decodeWavToMono(bytes);
        peaks = computePeaks(decoded.samples, WAVEFORM_BUCKETS);
        clipSeconds = decoded.samples.length / decoded.sampleRate;
      } catch {
        peaks = null; // the server may still accept it; just skip the drawing
        clipSeconds = 0;
      }
      renderWave(controller.getState());
      const useSeparation = byId<HTMLInputElement>("use-separation").checked;
      await controller.submitAudio(file.name, file, { use_separation: useSeparation });
    })();
    fileInput.value = "";
  });

  byId<HTMLButtonElement>("export").addEventListener("click", () => {
    const text = draftText(controller.getState());
    const blob = new Blob([text], { type: "text/plain" });
    const url = URL.createObjectURL(blob);
    const anchor = document.createElement("a");
    anchor.href = url;
    anchor.download = "draft.txt";
    anchor.click();
    URL.revokeObjectURL(url);
  });

  controller.subscribe(render);
  render(controller.getState());
}

setup();
