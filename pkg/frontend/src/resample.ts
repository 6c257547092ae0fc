/** Channel downmix and linear resampling to the 16 kHz wire rate. */

export function downmixToMono(channels: Float32Array[]): Float32Array {
  if (channels.length === 0) return new Float32Array(0);
  if (channels.length === 1) return channels[0];
  const n = channels[0].length;
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    let acc = 0;
    for (const ch of channels) acc += ch[i];
    out[i] = acc / channels.length;
  }
  return out;
}

/**
 * Linear-interpolation resampler. Good enough for speech energy detection;
 * capture quality is not the bottleneck for a dictation demo.
 */
export function resampleLinear(input: Float32Array, fromRate: number,
                               toRate: number): Float32Array {
  if (fromRate === toRate || input.length === 0) return input;
  const outLength = Math.max(1, Math.round(input.length * toRate / fromRate));
  const out = new Float32Array(outLength);
  const step = (input.length - 1) / Math.max(1, outLength - 1);
  for (let i = 0; i < outLength; i++) {
    const pos = i * step;
    const lo = Math.floor(pos);
    const hi = Math.min(lo + 1, input.length - 1);
    const frac = pos - lo;
    out[i] = input[lo] * (1 - frac) + input[hi] * frac;
  }
  return out;
}
