/** Wire types mirroring the lyric service's JSON responses. */

export interface Candidate {
  text: string;
  score: number;
  phonemes: string[];
}

export interface Segment {
  start_s: number;
  end_s: number;
  candidates: Candidate[];
  error?: string;
}

export interface DecoderEcho {
  beam_width: number;
  lm_weight: number;
  word_insertion_penalty: number;
  n_best: number;
  max_insertions_per_gap: number;
}

export interface ChannelEcho {
  p_match: number;
  p_sub: number;
  p_del: number;
  p_ins: number;
}

export interface ResultConfig {
  sample_rate: number;
  use_separation: boolean;
  phoneme_beam_width: number;
  decoder: DecoderEcho;
  channel: ChannelEcho;
  separator: Record<string, number>;
  segmentation: Record<string, number>;
}

export interface LyricResult {
  seed: number;
  config: ResultConfig;
  config_hash: string;
  fingerprints: Record<string, string>;
  segments: Segment[];
}

export type JobState =
  | "queued"
  | "separating"
  | "recognizing"
  | "decoding"
  | "done"
  | "failed";

export interface ServerHistoryEntry {
  overrides: Record<string, unknown>;
  top_1: (string | null)[];
}

export interface JobSnapshot {
  id: string;
  state: JobState;
  created_at: number;
  updated_at: number;
  error: string | null;
  overrides: Record<string, unknown>;
  history: ServerHistoryEntry[];
  result: LyricResult | null;
}

/** The six decoder knobs the service accepts as redecode overrides. */
export interface Knobs {
  lm_weight: number;
  beam_width: number;
  word_penalty: number;
  p_sub: number;
  p_del: number;
  p_ins: number;
}
