"""Session-facing dictation service.

Each connected client streams PCM16 audio over a websocket; the server
segments it per session, pushes segments through the shared scheduler
(multiplexed mode) or a whole-session FIFO job runner (sequential baseline),
and delivers transcripts back in segment endpoint order. An HTTP side door
exposes health and a stats snapshot for dashboards.

Wire protocol (one websocket per session):
  client -> server: {"type":"start","session_id":str,"sample_rate_hz":int}
                    then binary little-endian PCM16 frames, then
                    {"type":"end"}
  server -> client: {"type":"segment",...}, {"type":"transcript",...},
                    {"type":"error",...}, {"type":"closed"}
"""

from __future__ import annotations

import asyncio
import json
import queue as queue_mod
import threading
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from fastapi import FastAPI
from starlette.websockets import WebSocket, WebSocketDisconnect

from dictamux.backend import (
    RemoteBackend,
    RemoteBackendConfig,
    SimBackend,
    SimBackendConfig,
    TranscriptResult,
)
from dictamux.report import percentile
from dictamux.scheduler import (
    Batch,
    BatchingPolicy,
    DispatchLoop,
    QueueEntry,
    SegmentQueue,
    monotonic_ms,
)
from dictamux.vad import SpeechSegment, VadConfig, VadState, finalize_stream, ingest_frame
from dictamux.vad import AudioFrame

MULTIPLEXED = "multiplexed"
SEQUENTIAL = "sequential"

REORDER_BUFFER_LIMIT = 256
DRAIN_TIMEOUT_S = 60.0


@dataclass
class ServerConfig:
    listen_address: str = "127.0.0.1:8765"
    mode: str = MULTIPLEXED
    backend_kind: str = "sim"
    sim_backend: SimBackendConfig = field(default_factory=SimBackendConfig)
    remote_backend: RemoteBackendConfig | None = None
    vad: VadConfig = field(default_factory=VadConfig)
    policy: BatchingPolicy = field(default_factory=BatchingPolicy)
    max_sessions: int = 20
    stats_window_s: float = 60.0

    def __post_init__(self) -> None:
        if self.max_sessions < 1:
            raise ValueError("max_sessions must be >= 1")
        if self.mode not in (MULTIPLEXED, SEQUENTIAL):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.backend_kind not in ("sim", "remote"):
            raise ValueError(f"unknown backend {self.backend_kind!r}")
        if self.backend_kind == "remote" and self.remote_backend is None:
            raise ValueError("remote backend selected but not configured")


def server_config_from_dict(d: dict) -> ServerConfig:
    kwargs = dict(d)
    if isinstance(kwargs.get("sim_backend"), dict):
        kwargs["sim_backend"] = SimBackendConfig(**kwargs["sim_backend"])
    if isinstance(kwargs.get("remote_backend"), dict):
        kwargs["remote_backend"] = RemoteBackendConfig(**kwargs["remote_backend"])
    if isinstance(kwargs.get("vad"), dict):
        kwargs["vad"] = VadConfig(**kwargs["vad"])
    if isinstance(kwargs.get("policy"), dict):
        kwargs["policy"] = BatchingPolicy(**kwargs["policy"])
    return ServerConfig(**kwargs)


def load_server_config(path: str) -> ServerConfig:
    with open(path) as fh:
        return server_config_from_dict(json.load(fh))


@dataclass
class StatsSnapshot:
    connected_users: int
    perceived_rtf: float
    queue_depth: int
    p50_latency_ms: float
    p90_latency_ms: float
    uptime_s: float


class Session:
    """One streaming client. Mutated by its websocket handler (serially)
    and by the result-routing thread; the lock covers the shared bits."""

    def __init__(self, uid: str, client_session_id: str, sample_rate_hz: int,
                 loop: asyncio.AbstractEventLoop):
        self.uid = uid
        self.client_session_id = client_session_id
        self.sample_rate_hz = sample_rate_hz
        self.vad_state = VadState(session_id=uid, segment_prefix=uid)
        self.connected_at = monotonic_ms()
        self.segments_emitted = 0
        self.results_delivered = 0
        self.results_errored = 0
        self.audio_seconds_received = 0.0
        self.outbox: asyncio.Queue = asyncio.Queue()
        self.loop = loop
        self.lock = threading.Lock()
        self.segment_order: dict[str, int] = {}
        self.segment_audio_s: dict[str, float] = {}
        self.segment_endpoint_ms: dict[str, float] = {}
        self.reorder: dict[int, TranscriptResult] = {}
        self.delivered_ids: set[str] = set()
        self.next_expected = 0
        self.eos_announced = False
        self.drained = asyncio.Event()
        self.failed = False
        self.job_segments: list[SpeechSegment] = []
        self._recv_buffer = bytearray()
        self._frames_received = 0

    def segment_index(self, segment_id: str) -> int | None:
        return self.segment_order.get(segment_id)


class SequentialJobRunner(threading.Thread):
    """Baseline discipline: whole-session jobs FIFO, one at a time, each
    job's segments batched in endpoint order up to max_batch."""

    def __init__(self, backend, max_batch: int, route_result):
        super().__init__(name="sequential-runner", daemon=True)
        self.backend = backend
        self.max_batch = max_batch
        self.route_result = route_result
        self.jobs: queue_mod.Queue = queue_mod.Queue()
        self._stop_requested = threading.Event()
        self._job_seq = 0

    def submit(self, segments: list[SpeechSegment]) -> None:
        self.jobs.put(list(segments))

    def pending_jobs(self) -> int:
        return self.jobs.qsize()

    def run(self) -> None:
        while True:
            try:
                job = self.jobs.get(timeout=0.02)
            except queue_mod.Empty:
                if self._stop_requested.is_set():
                    return
                continue
            self._run_job(job)

    def _run_job(self, job: list[SpeechSegment]) -> None:
        if not job:
            return
        for i in range(0, len(job), self.max_batch):
            chunk = job[i:i + self.max_batch]
            now = monotonic_ms()
            batch = Batch(
                batch_id=f"j{self._job_seq:08d}",
                entries=[QueueEntry(segment=s, enqueue_time=s.endpoint_time)
                         for s in chunk],
                formed_at=now,
                total_audio_s=sum(s.duration_s for s in chunk))
            self._job_seq += 1
            try:
                results = self.backend.transcribe_batch(batch)
                failed = None
            except Exception as exc:
                failed = str(exc)
                results = []
            if failed is None and results and all(r.is_error for r in results):
                failed = results[0].message
            if failed is not None:
                # fail the rest of the job, move on to the next one
                for seg in job[i:]:
                    self.route_result(TranscriptResult(
                        segment_id=seg.segment_id, session_id=seg.session_id,
                        text="", status="error", message=failed,
                        queue_wait_ms=now - seg.endpoint_time))
                return
            for seg, result in zip(chunk, results):
                result.queue_wait_ms = now - seg.endpoint_time
                self.route_result(result)

    def shutdown(self, timeout: float = 30.0) -> None:
        self._stop_requested.set()
        self.join(timeout=timeout)


class DictationServer:
    """Owns the shared scheduler, the backend, and all live sessions."""

    def __init__(self, config: ServerConfig):
        self.config = config
        if config.backend_kind == "sim":
            self.backend = SimBackend(config.sim_backend)
        else:
            self.backend = RemoteBackend(config.remote_backend)
        self.queue = SegmentQueue()
        self.sessions: dict[str, Session] = {}
        self._sessions_lock = threading.Lock()
        self._session_counter = 0
        self._started_at = monotonic_ms()
        self.dropped_results = 0
        self.duplicate_results = 0
        self._metrics_lock = threading.Lock()
        self._window: list[tuple[float, float, float, float]] = []
        self.dispatch_loop: DispatchLoop | None = None
        self.job_runner: SequentialJobRunner | None = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        if self.config.mode == MULTIPLEXED:
            self.dispatch_loop = DispatchLoop(
                self.queue, self.config.policy, self.backend,
                self.route_result)
            self.dispatch_loop.start()
        else:
            self.job_runner = SequentialJobRunner(
                self.backend, self.config.policy.max_batch, self.route_result)
            self.job_runner.start()

    def stop(self) -> None:
        if self.dispatch_loop is not None:
            self.dispatch_loop.shutdown()
        if self.job_runner is not None:
            self.job_runner.shutdown()
        close = getattr(self.backend, "close", None)
        if close:
            close()

    # -- sessions ----------------------------------------------------------

    def open_session(self, client_session_id: str, sample_rate_hz: int,
                     loop: asyncio.AbstractEventLoop) -> Session | None:
        """Register a session; None means the server is at capacity."""
        with self._sessions_lock:
            if len(self.sessions) >= self.config.max_sessions:
                return None
            uid = f"{client_session_id}#{self._session_counter}"
            self._session_counter += 1
            session = Session(uid, client_session_id, sample_rate_hz, loop)
            self.sessions[uid] = session
            return session

    def close_session(self, session: Session) -> None:
        with self._sessions_lock:
            self.sessions.pop(session.uid, None)

    def connected_users(self) -> int:
        with self._sessions_lock:
            return len(self.sessions)

    # -- audio path --------------------------------------------------------

    def feed_audio(self, session: Session, data: bytes) -> list[SpeechSegment]:
        """Re-chunk incoming bytes into exact frames and run them through
        the session's segmenter. Returns segments finalized by this data."""
        session._recv_buffer.extend(data)
        frame_samples = (self.config.vad.frame_len_ms
                         * session.sample_rate_hz // 1000)
        frame_bytes = frame_samples * 2
        emitted: list[SpeechSegment] = []
        while len(session._recv_buffer) >= frame_bytes:
            raw = bytes(session._recv_buffer[:frame_bytes])
            del session._recv_buffer[:frame_bytes]
            emitted.extend(self._ingest(session, raw))
        return emitted

    def _ingest(self, session: Session, raw: bytes) -> list[SpeechSegment]:
        samples = np.frombuffer(raw, dtype="<i2")
        frame = AudioFrame(session_id=session.uid, samples=samples,
                           sample_rate_hz=session.sample_rate_hz,
                           capture_time=monotonic_ms())
        session._frames_received += 1
        session.audio_seconds_received += len(samples) / session.sample_rate_hz
        return ingest_frame(session.vad_state, self.config.vad, frame)

    def finish_audio(self, session: Session) -> list[SpeechSegment]:
        """Flush the remainder (final partial frame) and the segmenter."""
        emitted: list[SpeechSegment] = []
        leftover = bytes(session._recv_buffer)
        session._recv_buffer.clear()
        if len(leftover) >= 2:
            emitted.extend(self._ingest(session, leftover[:len(leftover) // 2 * 2]))
        emitted.extend(finalize_stream(session.vad_state, self.config.vad))
        return emitted

    def accept_segment(self, session: Session, segment: SpeechSegment) -> None:
        """Register an emitted segment and hand it to the serving discipline."""
        with session.lock:
            session.segment_order[segment.segment_id] = session.segments_emitted
            session.segment_audio_s[segment.segment_id] = segment.duration_s
            session.segment_endpoint_ms[segment.segment_id] = segment.endpoint_time
            session.segments_emitted += 1
        if self.config.mode == MULTIPLEXED:
            self.queue.enqueue_segment(segment, monotonic_ms())
        else:
            session.job_segments.append(segment)

    def submit_session_job(self, session: Session) -> None:
        if self.config.mode == SEQUENTIAL and session.job_segments:
            self.job_runner.submit(session.job_segments)
            session.job_segments = []

    # -- result path (called from backend threads) --------------------------

    def route_result(self, result: TranscriptResult) -> None:
        """Deliver a result to its session in segment endpoint order; results
        for dead sessions are counted and dropped."""
        with self._sessions_lock:
            session = self.sessions.get(result.session_id)
        if session is None:
            with self._metrics_lock:
                self.dropped_results += 1
            return
        deliveries: list[TranscriptResult] = []
        with session.lock:
            index = session.segment_index(result.segment_id)
            if index is None:
                with self._metrics_lock:
                    self.dropped_results += 1
                return
            if result.segment_id in session.delivered_ids or index in session.reorder:
                with self._metrics_lock:
                    self.duplicate_results += 1
                return
            session.reorder[index] = result
            if len(session.reorder) > REORDER_BUFFER_LIMIT:
                session.failed = True
                session.loop.call_soon_threadsafe(
                    session.outbox.put_nowait,
                    {"type": "error", "message": "reorder buffer overflow"})
                session.loop.call_soon_threadsafe(session.drained.set)
                return
            while session.next_expected in session.reorder:
                ready = session.reorder.pop(session.next_expected)
                session.next_expected += 1
                session.delivered_ids.add(ready.segment_id)
                if ready.is_error:
                    session.results_errored += 1
                else:
                    session.results_delivered += 1
                deliveries.append(ready)
            drained = (session.eos_announced
                       and session.next_expected >= session.segments_emitted)
        now = monotonic_ms()
        for ready in deliveries:
            endpoint = session.segment_endpoint_ms.get(ready.segment_id, now)
            ready.e2e_latency_ms = now - endpoint
            self._record_completion(ready, session)
            try:
                session.loop.call_soon_threadsafe(
                    session.outbox.put_nowait, _transcript_message(ready))
            except RuntimeError:
                with self._metrics_lock:
                    self.dropped_results += 1
        if drained:
            try:
                session.loop.call_soon_threadsafe(session.drained.set)
            except RuntimeError:
                pass

    def _record_completion(self, result: TranscriptResult,
                           session: Session) -> None:
        audio_s = session.segment_audio_s.get(result.segment_id, 0.0)
        if result.is_error or audio_s <= 0:
            return
        now = monotonic_ms()
        with self._metrics_lock:
            self._window.append((now, result.backend_time_ms, audio_s,
                                 result.e2e_latency_ms))
            horizon = now - self.config.stats_window_s * 1000.0
            while self._window and self._window[0][0] < horizon:
                self._window.pop(0)

    # -- stats ---------------------------------------------------------------

    def queue_depth(self) -> int:
        if self.config.mode == MULTIPLEXED:
            return len(self.queue)
        return self.job_runner.pending_jobs() if self.job_runner else 0

    def stats_snapshot(self) -> StatsSnapshot:
        now = monotonic_ms()
        with self._metrics_lock:
            horizon = now - self.config.stats_window_s * 1000.0
            window = [w for w in self._window if w[0] >= horizon]
        if window:
            rtf = sum(b / (1000.0 * a) for _, b, a, _ in window) / len(window)
            lat = [e for _, _, _, e in window]
            p50, p90 = percentile(lat, 0.5), percentile(lat, 0.9)
        else:
            rtf, p50, p90 = 0.0, 0.0, 0.0
        return StatsSnapshot(
            connected_users=self.connected_users(),
            perceived_rtf=rtf,
            queue_depth=self.queue_depth(),
            p50_latency_ms=p50,
            p90_latency_ms=p90,
            uptime_s=(now - self._started_at) / 1000.0,
        )

    def stats_payload(self) -> dict:
        payload = asdict(self.stats_snapshot())
        sched = self.queue.stats(monotonic_ms())
        payload["scheduler"] = asdict(sched)
        with self._metrics_lock:
            payload["dropped_results"] = self.dropped_results
            payload["duplicate_results"] = self.duplicate_results
        return payload


def _transcript_message(result: TranscriptResult) -> dict:
    if result.is_error:
        return {"type": "error",
                "message": f"segment {result.segment_id}: {result.message}"}
    return {
        "type": "transcript",
        "segment_id": result.segment_id,
        "text": result.text,
        "queue_wait_ms": int(round(result.queue_wait_ms)),
        "backend_ms": int(round(result.backend_time_ms)),
        "e2e_ms": int(round(result.e2e_latency_ms)),
    }


def _segment_message(segment: SpeechSegment) -> dict:
    return {
        "type": "segment",
        "segment_id": segment.segment_id,
        "start_ms": int(round(segment.content_start_ms)),
        "duration_ms": int(round(segment.duration_s * 1000.0)),
    }


async def _send_json(ws: WebSocket, payload: dict) -> None:
    await ws.send_text(json.dumps(payload))


def create_app(server: DictationServer,
               console_dir: str | None = None) -> FastAPI:
    app = FastAPI()

    @app.get("/healthz")
    def healthz():
        from starlette.responses import PlainTextResponse
        return PlainTextResponse("ok")

    @app.get("/stats")
    def stats():
        return server.stats_payload()

    @app.websocket("/ws")
    async def dictation_socket(ws: WebSocket):
        await ws.accept()
        try:
            first = await ws.receive()
        except WebSocketDisconnect:
            return
        if first.get("type") == "websocket.disconnect":
            return
        start = _parse_start(first)
        if start is None:
            await _send_json(ws, {"type": "error",
                                  "message": "protocol error: expected start"})
            await ws.close()
            return
        session = server.open_session(start["session_id"],
                                      start["sample_rate_hz"],
                                      asyncio.get_running_loop())
        if session is None:
            await _send_json(ws, {"type": "error", "message": "server busy"})
            await ws.close()
            return
        sender = asyncio.create_task(_sender_loop(ws, session))
        try:
            await _session_loop(ws, server, session)
        except WebSocketDisconnect:
            _abandon(server, session)
        except Exception as exc:
            session.outbox.put_nowait(
                {"type": "error", "message": f"session error: {exc}"})
            _abandon(server, session)
        finally:
            server.close_session(session)
            session.outbox.put_nowait(None)  # sender stop sentinel
            try:
                await asyncio.wait_for(sender, timeout=5.0)
            except (asyncio.TimeoutError, Exception):
                sender.cancel()

    if console_dir is not None:
        from starlette.staticfiles import StaticFiles
        app.mount("/console", StaticFiles(directory=console_dir, html=True),
                  name="console")
    return app


def _parse_start(message: dict) -> dict | None:
    if message.get("type") != "websocket.receive" or "text" not in message:
        return None
    try:
        payload = json.loads(message["text"])
    except (TypeError, json.JSONDecodeError):
        return None
    if payload.get("type") != "start":
        return None
    session_id = payload.get("session_id")
    rate = payload.get("sample_rate_hz")
    if not isinstance(session_id, str) or not session_id:
        return None
    if not isinstance(rate, int) or rate <= 0:
        return None
    return {"session_id": session_id, "sample_rate_hz": rate}


async def _sender_loop(ws: WebSocket, session: Session) -> None:
    while True:
        payload = await session.outbox.get()
        if payload is None:
            return
        try:
            await _send_json(ws, payload)
        except Exception:
            return  # client went away; receive loop handles cleanup


async def _session_loop(ws: WebSocket, server: DictationServer,
                        session: Session) -> None:
    while True:
        message = await ws.receive()
        if message["type"] == "websocket.disconnect":
            raise WebSocketDisconnect(message.get("code", 1000))
        if session.failed:
            raise RuntimeError("session failed")
        if "bytes" in message and message["bytes"] is not None:
            segments = server.feed_audio(session, message["bytes"])
        elif "text" in message and message["text"] is not None:
            try:
                payload = json.loads(message["text"])
            except json.JSONDecodeError:
                raise RuntimeError("malformed control message")
            if payload.get("type") != "end":
                raise RuntimeError(
                    f"unexpected message type {payload.get('type')!r}")
            segments = server.finish_audio(session)
            _announce_and_schedule(server, session, segments)
            with session.lock:
                session.eos_announced = True
                done = session.next_expected >= session.segments_emitted
            server.submit_session_job(session)
            if done:
                session.drained.set()
            await asyncio.wait_for(session.drained.wait(),
                                   timeout=DRAIN_TIMEOUT_S)
            session.outbox.put_nowait({"type": "closed"})
            return
        else:
            raise RuntimeError("unsupported websocket payload")
        _announce_and_schedule(server, session, segments)


def _announce_and_schedule(server: DictationServer, session: Session,
                           segments: list[SpeechSegment]) -> None:
    for segment in segments:
        session.outbox.put_nowait(_segment_message(segment))
        server.accept_segment(session, segment)


def _abandon(server: DictationServer, session: Session) -> None:
    """Disconnect mid-stream: flush the segmenter so pending audio is still
    transcribed; the results will be dropped on arrival."""
    try:
        segments = server.finish_audio(session)
        for segment in segments:
            server.accept_segment(session, segment)
        server.submit_session_job(session)
    except Exception:
        pass
