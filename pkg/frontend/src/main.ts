/** Browser wiring: dictation panel (mic or WAV replay) and ops dashboard. */

import { DashboardPoller, fetchStatsHttp, POLL_INTERVAL_MS } from './dashboard.js';
import { startMicCapture, MicHandle } from './mic.js';
import { FrameChunker, floatToPcm16 } from './pcm.js';
import { FRAME_MS, WIRE_SAMPLE_RATE } from './protocol.js';
import { downmixToMono, resampleLinear } from './resample.js';
import { DictationSession, SocketLike } from './session.js';
import { parseWav } from './wav.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function browserSocket(url: string): SocketLike {
  const ws = new WebSocket(url);
  ws.binaryType = 'arraybuffer';
  const like: SocketLike = {
    send: (data) => ws.send(data as never),
    close: () => ws.close(),
    onopen: null,
    onmessage: null,
    onclose: null,
    onerror: null,
  };
  ws.onopen = () => like.onopen?.();
  ws.onmessage = (event) => {
    if (typeof event.data === 'string') like.onmessage?.(event.data);
  };
  ws.onclose = () => like.onclose?.();
  ws.onerror = () => like.onerror?.();
  return like;
}

const serverInput = el<HTMLInputElement>('server-url');
const sessionInput = el<HTMLInputElement>('session-id');
const statusBadge = el<HTMLSpanElement>('session-status');
const rowsBody = el<HTMLTableSectionElement>('transcript-rows');
const micButton = el<HTMLButtonElement>('btn-mic');
const replayButton = el<HTMLButtonElement>('btn-replay');
const endButton = el<HTMLButtonElement>('btn-end');

let session: DictationSession | null = null;
let mic: MicHandle | null = null;
let replayTimer: number | null = null;
const chunker = new FrameChunker();

function wsBase(): string {
  return serverInput.value.trim().replace(/\/$/, '');
}

function httpBase(): string {
  return wsBase().replace(/^ws/, 'http');
}

function render(): void {
  const status = session?.status ?? 'idle';
  statusBadge.textContent = session?.errorMessage
    ? `${status}: ${session.errorMessage}` : status;
  statusBadge.className = `badge badge-${status}`;
  const streaming = status === 'streaming';
  micButton.disabled = streaming;
  replayButton.disabled = streaming;
  endButton.disabled = !streaming;
  rowsBody.innerHTML = '';
  for (const row of session?.rows ?? []) {
    const tr = document.createElement('tr');
    const pending = row.text === null;
    tr.innerHTML = `
      <td>${(row.startMs / 1000).toFixed(1)}s</td>
      <td>${(row.durationMs / 1000).toFixed(1)}s</td>
      <td class="${pending ? 'pending' : ''}">${
        pending ? 'transcribing…' : escapeHtml(row.text ?? '')}</td>
      <td>${row.e2eMs === null ? '' : `${row.e2eMs} ms`}</td>`;
    rowsBody.appendChild(tr);
  }
}

function escapeHtml(text: string): string {
  const div = document.createElement('div');
  div.textContent = text;
  return div.innerHTML;
}

function newSession(): DictationSession {
  stopStreaming();
  const created = new DictationSession({
    sessionId: sessionInput.value.trim() || 'console',
    connect: () => browserSocket(`${wsBase()}/ws`),
    onChange: render,
  });
  session = created;
  return created;
}

function stopStreaming(): void {
  mic?.stop();
  mic = null;
  if (replayTimer !== null) {
    window.clearInterval(replayTimer);
    replayTimer = null;
  }
}

micButton.addEventListener('click', async () => {
  const active = newSession();
  active.start();
  try {
    mic = await startMicCapture((bytes) => {
      for (const frame of chunker.push(bytes)) active.sendAudio(frame);
    });
  } catch (err) {
    stopStreaming();
    statusBadge.textContent = `error: microphone denied (${err})`;
    statusBadge.className = 'badge badge-error';
  }
});

replayButton.addEventListener('click', async () => {
  const response = await fetch('assets/sample.wav');
  const wav = parseWav(await response.arrayBuffer());
  const mono = downmixToMono(wav.channels);
  const at16k = resampleLinear(mono, wav.sampleRate, WIRE_SAMPLE_RATE);
  const bytes = floatToPcm16(at16k);
  const frameBytes = (WIRE_SAMPLE_RATE * FRAME_MS / 1000) * 2;

  const active = newSession();
  active.start();
  let offset = 0;
  const startedAt = performance.now();
  replayTimer = window.setInterval(() => {
    if (session !== active || active.status === 'error') {
      stopStreaming();
      return;
    }
    if (active.status !== 'streaming') return;
    // drift-corrected pacing: send every frame that is due by now
    const due = Math.floor((performance.now() - startedAt) / FRAME_MS);
    while (offset < bytes.length && offset / frameBytes <= due) {
      active.sendAudio(bytes.slice(offset, offset + frameBytes));
      offset += frameBytes;
    }
    if (offset >= bytes.length) {
      stopStreaming();
      active.end();
    }
  }, FRAME_MS);
});

endButton.addEventListener('click', () => {
  stopStreaming();
  const leftover = chunker.flush();
  if (leftover && session) session.sendAudio(leftover);
  session?.end();
});

// ---- dashboard ------------------------------------------------------------

const poller = new DashboardPoller(() => fetchStatsHttp(httpBase()));

function renderDashboard(): void {
  el('dash-users').textContent = String(poller.model.connectedUsers);
  el('dash-rtf').textContent = poller.model.perceivedRtf.toFixed(3);
  el('dash-depth').textContent = String(poller.model.queueDepth);
  el('dash-p90').textContent = `${Math.round(poller.model.p90LatencyMs)} ms`;
  const stale = el('dash-stale');
  stale.style.display = poller.model.stale ? 'inline' : 'none';
}

window.setInterval(async () => {
  await poller.pollOnce();
  renderDashboard();
}, POLL_INTERVAL_MS);

void poller.pollOnce().then(renderDashboard);
render();
