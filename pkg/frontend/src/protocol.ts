/**
 * Dictation server wire protocol: typed messages and runtime guards.
 *
 * Client sends a text `start` message, binary PCM16 frames, then `end`.
 * Server replies with `segment`, `transcript`, `error` and `closed`
 * text messages.
 */

export interface StartMessage {
  type: 'start';
  session_id: string;
  sample_rate_hz: number;
}

export interface SegmentEvent {
  type: 'segment';
  segment_id: string;
  start_ms: number;
  duration_ms: number;
}

export interface TranscriptEvent {
  type: 'transcript';
  segment_id: string;
  text: string;
  queue_wait_ms: number;
  backend_ms: number;
  e2e_ms: number;
}

export interface ErrorEvent {
  type: 'error';
  message: string;
}

export interface ClosedEvent {
  type: 'closed';
}

export type ServerEvent = SegmentEvent | TranscriptEvent | ErrorEvent | ClosedEvent;

export const WIRE_SAMPLE_RATE = 16000;
export const FRAME_MS = 30;

export function encodeStart(sessionId: string): string {
  const message: StartMessage = {
    type: 'start',
    session_id: sessionId,
    sample_rate_hz: WIRE_SAMPLE_RATE,
  };
  return JSON.stringify(message);
}

export function encodeEnd(): string {
  return JSON.stringify({ type: 'end' });
}

function isNumber(x: unknown): x is number {
  return typeof x === 'number' && Number.isFinite(x);
}

/** Parse one server text frame; null for anything malformed or unknown. */
export function parseServerEvent(raw: string): ServerEvent | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== 'object' || data === null) return null;
  const msg = data as Record<string, unknown>;
  switch (msg.type) {
    case 'segment':
      if (typeof msg.segment_id === 'string' && isNumber(msg.start_ms) &&
          isNumber(msg.duration_ms)) {
        return msg as unknown as SegmentEvent;
      }
      return null;
    case 'transcript':
      if (typeof msg.segment_id === 'string' && typeof msg.text === 'string' &&
          isNumber(msg.queue_wait_ms) && isNumber(msg.backend_ms) &&
          isNumber(msg.e2e_ms)) {
        return msg as unknown as TranscriptEvent;
      }
      return null;
    case 'error':
      return typeof msg.message === 'string' ? (msg as unknown as ErrorEvent) : null;
    case 'closed':
      return { type: 'closed' };
    default:
      return null;
  }
}
