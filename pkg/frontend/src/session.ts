/**
 * Dictation session state machine, decoupled from the browser socket so it
 * can be driven by tests. Rows appear when the server announces a segment
 * and fill in when its transcript arrives; the server guarantees endpoint
 * order, and rows are never reordered after display.
 */

import { encodeEnd, encodeStart, parseServerEvent, ServerEvent } from './protocol.js';

export type SessionStatus = 'idle' | 'connecting' | 'streaming' | 'closed' | 'error';

export interface TranscriptRow {
  segmentId: string;
  startMs: number;
  durationMs: number;
  text: string | null; // null while transcription is pending
  e2eMs: number | null;
  backendMs: number | null;
}

export interface SocketLike {
  send(data: string | ArrayBufferLike | Uint8Array): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((data: string) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export interface SessionOptions {
  sessionId: string;
  connect: () => SocketLike;
  onChange?: () => void;
}

export class DictationSession {
  status: SessionStatus = 'idle';
  rows: TranscriptRow[] = [];
  errorMessage: string | null = null;
  private socket: SocketLike | null = null;
  private endRequested = false;
  private readonly byId = new Map<string, TranscriptRow>();

  constructor(private readonly opts: SessionOptions) {}

  start(): void {
    if (this.status === 'connecting' || this.status === 'streaming') return;
    this.status = 'connecting';
    this.rows = [];
    this.byId.clear();
    this.errorMessage = null;
    this.endRequested = false;
    const socket = this.opts.connect();
    this.socket = socket;
    socket.onopen = () => {
      socket.send(encodeStart(this.opts.sessionId));
      this.status = 'streaming';
      this.notify();
    };
    socket.onmessage = (data) => this.handleMessage(data);
    socket.onclose = () => {
      if (this.status !== 'closed' && this.status !== 'error') {
        this.fail('connection dropped');
      }
    };
    socket.onerror = () => {
      if (this.status !== 'closed') this.fail('socket error');
    };
    this.notify();
  }

  sendAudio(frame: Uint8Array): void {
    if (this.status !== 'streaming' || this.socket === null) return;
    this.socket.send(frame);
  }

  end(): void {
    if (this.status !== 'streaming' || this.socket === null) return;
    if (this.endRequested) return;
    this.endRequested = true;
    this.socket.send(encodeEnd());
  }

  private handleMessage(raw: string): void {
    const event = parseServerEvent(raw);
    if (event === null) return; // tolerate unknown message kinds
    this.apply(event);
    this.notify();
  }

  private apply(event: ServerEvent): void {
    switch (event.type) {
      case 'segment': {
        const row: TranscriptRow = {
          segmentId: event.segment_id,
          startMs: event.start_ms,
          durationMs: event.duration_ms,
          text: null,
          e2eMs: null,
          backendMs: null,
        };
        this.rows.push(row);
        this.byId.set(row.segmentId, row);
        break;
      }
      case 'transcript': {
        let row = this.byId.get(event.segment_id);
        if (row === undefined) {
          // transcript without a prior segment event: append in arrival order
          row = {
            segmentId: event.segment_id, startMs: 0, durationMs: 0,
            text: null, e2eMs: null, backendMs: null,
          };
          this.rows.push(row);
          this.byId.set(row.segmentId, row);
        }
        row.text = event.text;
        row.e2eMs = event.e2e_ms;
        row.backendMs = event.backend_ms;
        break;
      }
      case 'error':
        this.fail(event.message);
        break;
      case 'closed':
        this.status = 'closed';
        this.socket?.close();
        this.socket = null;
        break;
    }
  }

  private fail(message: string): void {
    this.status = 'error';
    this.errorMessage = message;
    this.socket?.close();
    this.socket = null;
    this.notify();
  }

  private notify(): void {
    this.opts.onChange?.();
  }
}
