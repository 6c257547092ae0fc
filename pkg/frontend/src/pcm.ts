/** Float audio to wire PCM16 conversion and fixed-size frame chunking. */

import { FRAME_MS, WIRE_SAMPLE_RATE } from './protocol.js';

export const FRAME_SAMPLES = (WIRE_SAMPLE_RATE * FRAME_MS) / 1000;
export const FRAME_BYTES = FRAME_SAMPLES * 2;

/** Convert [-1, 1] float samples to little-endian PCM16 bytes, clamping. */
export function floatToPcm16(samples: Float32Array): Uint8Array {
  const out = new Uint8Array(samples.length * 2);
  const view = new DataView(out.buffer);
  for (let i = 0; i < samples.length; i++) {
    let v = Math.max(-1, Math.min(1, samples[i]));
    const q = v < 0 ? Math.round(v * 32768) : Math.round(v * 32767);
    view.setInt16(i * 2, q, true);
  }
  return out;
}

export function pcm16ToFloat(bytes: Uint8Array): Float32Array {
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const n = Math.floor(bytes.byteLength / 2);
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    out[i] = view.getInt16(i * 2, true) / 32768;
  }
  return out;
}

/**
 * Accumulates arbitrary-sized PCM16 byte chunks and yields exact wire
 * frames; flush() returns the final partial frame, if any.
 */
export class FrameChunker {
  private buffer: Uint8Array = new Uint8Array(0);

  push(bytes: Uint8Array): Uint8Array[] {
    const joined = new Uint8Array(this.buffer.length + bytes.length);
    joined.set(this.buffer, 0);
    joined.set(bytes, this.buffer.length);
    const frames: Uint8Array[] = [];
    let offset = 0;
    while (joined.length - offset >= FRAME_BYTES) {
      frames.push(joined.slice(offset, offset + FRAME_BYTES));
      offset += FRAME_BYTES;
    }
    this.buffer = joined.slice(offset);
    return frames;
  }

  flush(): Uint8Array | null {
    if (this.buffer.length === 0) return null;
    const rest = this.buffer;
    this.buffer = new Uint8Array(0);
    // odd trailing byte cannot be half a sample; drop it
    return rest.length % 2 === 0 ? rest : rest.slice(0, rest.length - 1);
  }
}
