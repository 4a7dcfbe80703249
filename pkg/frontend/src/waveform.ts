/** Waveform peaks and segment-span layout for the clip overview strip. */

import type { Segment } from "./types.js";

export interface Peaks {
  min: Float32Array;
  max: Float32Array;
}

/** Per-bucket min/max of the signal; empty buckets collapse to zero. */
export function computePeaks(samples: Float32Array, buckets: number): Peaks {
  if (!Number.isInteger(buckets) || buckets <= 0) {
    throw new RangeError(`buckets must be a positive integer, got ${buckets}`);
  }
  const min = new Float32Array(buckets);
  const max = new Float32Array(buckets);
  if (samples.length === 0) return { min, max };
  for (let b = 0; b < buckets; b++) {
    const lo = Math.floor((b * samples.length) / buckets);
    const hi = Math.max(lo + 1, Math.floor(((b + 1) * samples.length) / buckets));
    let lowest = Infinity;
    let highest = -Infinity;
    for (let i = lo; i < hi && i < samples.length; i++) {
      const v = samples[i] as number;
      if (v < lowest) lowest = v;
      if (v > highest) highest = v;
    }
    if (lowest === Infinity) {
      lowest = 0;
      highest = 0;
    }
    min[b] = lowest;
    max[b] = highest;
  }
  return { min, max };
}

export interface SegmentSpan {
  x: number;
  width: number;
}

/** Map segment times onto pixel spans; spans never collapse below 1px. */
export function segmentSpans(
  segments: readonly Pick<Segment, "start_s" | "end_s">[],
  durationS: number,
  pixelWidth: number,
): SegmentSpan[] {
  if (durationS <= 0 || pixelWidth <= 0) return [];
  const clamp = (v: number): number => Math.min(Math.max(v, 0), 1);
  return segments.map((s) => {
    const x = clamp(s.start_s / durationS) * pixelWidth;
    const end = clamp(s.end_s / durationS) * pixelWidth;
    return { x, width: Math.max(1, end - x) };
  });
}

/** Paint peaks and segment spans onto a 2D canvas context. */
export function drawWaveform(
  ctx: CanvasRenderingContext2D,
  width: number,
  height: number,
  peaks: Peaks | null,
  spans: readonly SegmentSpan[],
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10141c";
  ctx.fillRect(0, 0, width, height);

  ctx.fillStyle = "rgba(94, 129, 172, 0.25)";
  for (const span of spans) {
    ctx.fillRect(span.x, 0, span.width, height);
  }

  if (peaks === null) return;
  const mid = height / 2;
  ctx.strokeStyle = "#88c0d0";
  ctx.lineWidth = 1;
  ctx.beginPath();
  const buckets = peaks.min.length;
  for (let b = 0; b < buckets; b++) {
    const x = ((b + 0.5) / buckets) * width;
    const top = mid - (peaks.max[b] as number) * (mid - 2);
    const bottom = mid - (peaks.min[b] as number) * (mid - 2);
    ctx.moveTo(x, top);
    ctx.lineTo(x, Math.max(bottom, top + 1));
  }
  ctx.stroke();
}
