/** Minimal RIFF/WAVE reader for drawing waveforms client-side.
 *
 * Handles the two encodings the service itself accepts, 16-bit PCM and
 * 32-bit IEEE float, and mixes channels down to mono. Anything else raises,
 * and callers treat a failed parse as "no waveform", not a fatal error.
 */

export interface DecodedAudio {
  sampleRate: number;
  samples: Float32Array;
}

const PCM_16 = 1;
const IEEE_FLOAT = 3;

function tag(view: DataView, offset: number): string {
  return String.fromCharCode(
    view.getUint8(offset),
    view.getUint8(offset + 1),
    view.getUint8(offset + 2),
    view.getUint8(offset + 3),
  );
}

export function decodeWavToMono(buffer: ArrayBuffer): DecodedAudio {
  const view = new DataView(buffer);
  if (view.byteLength < 12 || tag(view, 0) !== "RIFF" || tag(view, 8) !== "WAVE") {
    throw new Error("not a RIFF/WAVE file");
  }

  let format = 0;
  let channels = 0;
  let sampleRate = 0;
  let bits = 0;
  let dataStart = -1;
  let dataLength = 0;

  let offset = 12;
  while (offset + 8 <= view.byteLength) {
    const id = tag(view, offset);
    const size = view.getUint32(offset + 4, true);
    const body = offset + 8;
    if (id === "fmt " && body + 16 <= view.byteLength) {
      format = view.getUint16(body, true);
      channels = view.getUint16(body + 2, true);
      sampleRate = view.getUint32(body + 4, true);
      bits = view.getUint16(body + 14, true);
    } else if (id === "data") {
      dataStart = body;
      dataLength = Math.min(size, view.byteLength - body);
    }
    offset = body + size + (size & 1); // chunks are word-aligned
  }

  if (sampleRate <= 0 || channels <= 0 || dataStart < 0) {
    throw new Error("missing fmt or data chunk");
  }
  const pcm16 = format === PCM_16 && bits === 16;
  const float32 = format === IEEE_FLOAT && bits === 32;
  if (!pcm16 && !float32) {
    throw new Error(`unsupported encoding: format ${format}, ${bits} bits`);
  }

  const bytesPerSample = bits / 8;
  const frameBytes = bytesPerSample * channels;
  const frames = Math.floor(dataLength / frameBytes);
  const samples = new Float32Array(frames);
  for (let frame = 0; frame < frames; frame++) {
    let acc = 0;
    for (let ch = 0; ch < channels; ch++) {
      const at = dataStart + frame * frameBytes + ch * bytesPerSample;
      acc += pcm16 ? view.getInt16(at, true) / 32768 : view.getFloat32(at, true);
    }
    samples[frame] = acc / channels;
  }
  return { sampleRate, samples };
}
