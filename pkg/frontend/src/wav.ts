/** Minimal RIFF/WAV reader for the replay feature (PCM16 and float32). */

export interface WavAudio {
  sampleRate: number;
  channels: Float32Array[];
}

export class WavFormatError extends Error {}

function ascii(view: DataView, offset: number, length: number): string {
  let s = '';
  for (let i = 0; i < length; i++) s += String.fromCharCode(view.getUint8(offset + i));
  return s;
}

export function parseWav(buffer: ArrayBuffer): WavAudio {
  const view = new DataView(buffer);
  if (buffer.byteLength < 44 || ascii(view, 0, 4) !== 'RIFF' ||
      ascii(view, 8, 4) !== 'WAVE') {
    throw new WavFormatError('not a RIFF/WAVE file');
  }
  let offset = 12;
  let format = 0;
  let channelCount = 0;
  let sampleRate = 0;
  let bitsPerSample = 0;
  let dataOffset = -1;
  let dataLength = 0;
  while (offset + 8 <= buffer.byteLength) {
    const chunkId = ascii(view, offset, 4);
    const chunkSize = view.getUint32(offset + 4, true);
    const body = offset + 8;
    if (chunkId === 'fmt ') {
      format = view.getUint16(body, true);
      channelCount = view.getUint16(body + 2, true);
      sampleRate = view.getUint32(body + 4, true);
      bitsPerSample = view.getUint16(body + 14, true);
    } else if (chunkId === 'data') {
      dataOffset = body;
      dataLength = Math.min(chunkSize, buffer.byteLength - body);
    }
    offset = body + chunkSize + (chunkSize % 2);
  }
  if (dataOffset < 0 || channelCount === 0) {
    throw new WavFormatError('missing fmt or data chunk');
  }
  const isPcm16 = format === 1 && bitsPerSample === 16;
  const isFloat32 = format === 3 && bitsPerSample === 32;
  if (!isPcm16 && !isFloat32) {
    throw new WavFormatError(
      `unsupported encoding: format ${format}, ${bitsPerSample} bits`);
  }
  const bytesPerSample = bitsPerSample / 8;
  const frameCount = Math.floor(dataLength / (bytesPerSample * channelCount));
  const channels = Array.from({ length: channelCount },
                              () => new Float32Array(frameCount));
  for (let i = 0; i < frameCount; i++) {
    for (let c = 0; c < channelCount; c++) {
      const at = dataOffset + (i * channelCount + c) * bytesPerSample;
      channels[c][i] = isPcm16
        ? view.getInt16(at, true) / 32768
        : view.getFloat32(at, true);
    }
  }
  return { sampleRate, channels };
}
