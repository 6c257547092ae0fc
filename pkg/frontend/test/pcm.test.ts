import { describe, expect, it } from 'vitest';

import { FRAME_BYTES, FrameChunker, floatToPcm16, pcm16ToFloat } from '../src/pcm.js';

describe('floatToPcm16', () => {
  it('writes little-endian int16', () => {
    const bytes = floatToPcm16(new Float32Array([0, 0.5, -0.5]));
    const view = new DataView(bytes.buffer);
    expect(view.getInt16(0, true)).toBe(0);
    expect(view.getInt16(2, true)).toBe(16384); // round(0.5 * 32767)
    expect(view.getInt16(4, true)).toBe(-16384);
  });

  it('clamps out-of-range samples to full scale', () => {
    const bytes = floatToPcm16(new Float32Array([2.0, -2.0, 1.0, -1.0]));
    const view = new DataView(bytes.buffer);
    expect(view.getInt16(0, true)).toBe(32767);
    expect(view.getInt16(2, true)).toBe(-32768);
    expect(view.getInt16(4, true)).toBe(32767);
    expect(view.getInt16(6, true)).toBe(-32768);
  });

  it('round-trips within quantization error', () => {
    const input = new Float32Array([0.25, -0.125, 0.9, -0.7]);
    const back = pcm16ToFloat(floatToPcm16(input));
    // encode scales positives by 32767, decode divides by 32768:
    // worst case |error| = (x + 0.5) / 32768 <= 1.5 / 32768
    for (let i = 0; i < input.length; i++) {
      expect(Math.abs(back[i] - input[i])).toBeLessThanOrEqual(1.5 / 32768);
    }
  });
});

describe('FrameChunker', () => {
  it('emits exact wire frames and keeps the remainder', () => {
    const chunker = new FrameChunker();
    const first = chunker.push(new Uint8Array(FRAME_BYTES + 10));
    expect(first.length).toBe(1);
    expect(first[0].length).toBe(FRAME_BYTES);
    const second = chunker.push(new Uint8Array(FRAME_BYTES - 10));
    expect(second.length).toBe(1);
    expect(chunker.flush()).toBeNull();
  });

  it('preserves byte order across chunk boundaries', () => {
    const chunker = new FrameChunker();
    const data = new Uint8Array(FRAME_BYTES);
    for (let i = 0; i < data.length; i++) data[i] = i % 251;
    const out: Uint8Array[] = [];
    out.push(...chunker.push(data.slice(0, 100)));
    out.push(...chunker.push(data.slice(100)));
    expect(out.length).toBe(1);
    expect(Array.from(out[0])).toEqual(Array.from(data));
  });

  it('flush drops an odd trailing byte', () => {
    const chunker = new FrameChunker();
    chunker.push(new Uint8Array(5));
    expect(chunker.flush()!.length).toBe(4);
  });
});
