/** Microphone capture: AudioWorklet chunks resampled to the wire rate. */

import { floatToPcm16 } from './pcm.js';
import { WIRE_SAMPLE_RATE } from './protocol.js';
import { resampleLinear } from './resample.js';

export interface MicHandle {
  stop: () => void;
}

export async function startMicCapture(
  onBytes: (bytes: Uint8Array) => void,
): Promise<MicHandle> {
  const stream = await navigator.mediaDevices.getUserMedia({
    audio: { channelCount: 1, echoCancellation: true, noiseSuppression: true },
  });
  const context = new AudioContext();
  await context.audioWorklet.addModule(
    new URL('./worklet.js', import.meta.url));
  const source = context.createMediaStreamSource(stream);
  const node = new AudioWorkletNode(context, 'pcm-capture');
  node.port.onmessage = (event: MessageEvent<Float32Array>) => {
    const mono = event.data;
    const at16k = resampleLinear(mono, context.sampleRate, WIRE_SAMPLE_RATE);
    onBytes(floatToPcm16(at16k));
  };
  source.connect(node);
  return {
    stop: () => {
      node.port.onmessage = null;
      source.disconnect();
      node.disconnect();
      stream.getTracks().forEach((track) => track.stop());
      void context.close();
    },
  };
}
