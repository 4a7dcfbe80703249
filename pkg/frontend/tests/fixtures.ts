/** Shared builders for snapshot-shaped test data. */

import type {
  Candidate,
  JobSnapshot,
  JobState,
  LyricResult,
  Segment,
} from "../src/types.js";

export function candidate(text: string, score: number): Candidate {
  return { text, score, phonemes: text ? text.toUpperCase().split(" ") : [] };
}

export function segment(
  start_s: number,
  end_s: number,
  texts: string[],
  topScore = -10,
): Segment {
  return {
    start_s,
    end_s,
    // scores must descend, matching the service's ranking contract
    candidates: texts.map((t, i) => candidate(t, topScore - i)),
  };
}

export interface ResultOptions {
  segments?: Segment[];
  lm_weight?: number;
  beam_width?: number;
  word_penalty?: number;
  p_sub?: number;
  p_del?: number;
  p_ins?: number;
}

export function lyricResult(options: ResultOptions = {}): LyricResult {
  return {
    seed: 0,
    config: {
      sample_rate: 22050,
      use_separation: true,
      phoneme_beam_width: 8,
      decoder: {
        beam_width: options.beam_width ?? 64,
        lm_weight: options.lm_weight ?? 1.0,
        word_insertion_penalty: options.word_penalty ?? 0.0,
        n_best: 5,
        max_insertions_per_gap: 2,
      },
      channel: {
        p_match: 0.75,
        p_sub: options.p_sub ?? 0.15,
        p_del: options.p_del ?? 0.05,
        p_ins: options.p_ins ?? 0.05,
      },
      separator: {},
      segmentation: {},
    },
    config_hash: "cfg",
    fingerprints: { acoustic_model: "am", lexicon: "lex", lm: "lm", channel: "ch" },
    segments: options.segments ?? [
      segment(0.0, 1.5, ["the moon is low", "the moon below", "and moon is low"]),
      segment(2.0, 3.5, ["river of light", "river off light"]),
    ],
  };
}

export function snapshot(
  id: string,
  state: JobState,
  result: LyricResult | null = null,
  error: string | null = null,
): JobSnapshot {
  return {
    id,
    state,
    created_at: 1000.0,
    updated_at: 1001.0,
    error,
    overrides: {},
    history: [],
    result,
  };
}

/** Deep-freeze for purity checks; mutation then throws in strict mode. */
export function deepFreeze<T>(value: T): T {
  if (value && typeof value === "object" && !Object.isFrozen(value)) {
    Object.freeze(value);
    for (const key of Object.getOwnPropertyNames(value)) {
      deepFreeze((value as Record<string, unknown>)[key]);
    }
  }
  return value;
}

/** Small deterministic PRNG for event fuzzing. */
export function lcg(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (s * 1664525 + 1013904223) >>> 0;
    return s / 4294967296;
  };
}

/** Seeded PCM16 mono noise clip, the shape the live service accepts. */
export function noiseWav(seconds: number, sampleRate = 22050, seed = 7): ArrayBuffer {
  const frames = Math.round(seconds * sampleRate);
  const buffer = new ArrayBuffer(44 + frames * 2);
  const view = new DataView(buffer);
  const tag = (offset: number, text: string) => {
    for (let i = 0; i < 4; i++) view.setUint8(offset + i, text.charCodeAt(i));
  };
  tag(0, "RIFF");
  view.setUint32(4, buffer.byteLength - 8, true);
  tag(8, "WAVE");
  tag(12, "fmt ");
  view.setUint32(16, 16, true);
  view.setUint16(20, 1, true);
  view.setUint16(22, 1, true);
  view.setUint32(24, sampleRate, true);
  view.setUint32(28, sampleRate * 2, true);
  view.setUint16(32, 2, true);
  view.setUint16(34, 16, true);
  tag(36, "data");
  view.setUint32(40, frames * 2, true);
  const rand = lcg(seed);
  for (let i = 0; i < frames; i++) {
    view.setInt16(44 + i * 2, Math.round((rand() * 2 - 1) * 12000), true);
  }
  return buffer;
}
