"""Benchmark harness: concurrent virtual users against the serving stack.

Virtual-clock mode hosts the real segmenter, queue, policy and simulated
cost model in-process under a discrete-event sweep and is bit-for-bit
deterministic: frame arrivals drive VAD, segment endpoints enqueue, the
queue is polled on every enqueue, at exact trigger deadlines and on batch
completion, and one batch occupies the device at a time. Wall-clock mode
drives a live server over its socket protocol instead.

The closed loop keeps `concurrency` sessions streaming at all times: a
finished stream immediately hands its slot to the next queued user.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass, field, replace

from dictamux.backend import (
    SimBackendConfig,
    sim_batch_duration_ms,
    sim_transcript_for_segment,
)
from dictamux.loadgen import generate_user_audio
from dictamux.report import LatencyReport, build_cells, hash_config
from dictamux.scheduler import CONTINUOUS, BatchingPolicy, SegmentQueue
from dictamux.vad import AudioFrame, SpeechSegment, VadConfig, finalize_stream, ingest_frame, make_state

MULTIPLEXED = "multiplexed"
SEQUENTIAL = "sequential"

DEFAULT_BUCKETS = ((15.0, 30.0), (30.0, 60.0), (60.0, 105.0), (105.0, 120.0))


class ScenarioError(Exception):
    """A benchmark session failed; results would be incomplete."""


def default_bench_policy() -> BatchingPolicy:
    """Serving policy used by benchmark scenarios unless overridden.

    Continuous batching with a long starvation flush: at low concurrency a
    segment may wait the full flush for batch partners, while busier queues
    pair segments quickly. This is the regime where shared batching shows
    its scaling behavior; the flush bounds the worst case for a lone user.
    """
    return BatchingPolicy(kind=CONTINUOUS, max_batch=8, min_batch=2,
                          starvation_flush_ms=6000.0)


@dataclass
class ScenarioConfig:
    concurrency: int = 5
    duration_buckets_s: tuple[tuple[float, float], ...] = DEFAULT_BUCKETS
    sessions_per_bucket: int = 6
    mode: str = MULTIPLEXED
    clock: str = "virtual"
    seed: int = 0
    speech_silence_duty: float = 0.7
    sample_rate_hz: int = 16000
    frame_ms: int = 30
    backend: SimBackendConfig = field(default_factory=SimBackendConfig)
    policy: BatchingPolicy = field(default_factory=default_bench_policy)
    vad: VadConfig = field(default_factory=VadConfig)
    server_url: str = "ws://127.0.0.1:8765/ws"

    def __post_init__(self) -> None:
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        if not 0 < self.speech_silence_duty < 1:
            raise ValueError("speech_silence_duty must be in (0, 1)")
        if self.mode not in (MULTIPLEXED, SEQUENTIAL):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.clock not in ("virtual", "wall"):
            raise ValueError(f"unknown clock {self.clock!r}")
        buckets = sorted(self.duration_buckets_s)
        for lo, hi in buckets:
            if not lo < hi:
                raise ValueError(f"bucket ({lo}, {hi}) needs lo < hi")
        for (_, prev_hi), (lo, _) in zip(buckets, buckets[1:]):
            if lo < prev_hi:
                raise ValueError("duration buckets overlap")
        self.duration_buckets_s = tuple(
            (float(lo), float(hi)) for lo, hi in self.duration_buckets_s)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    d = asdict(cfg)
    d["duration_buckets_s"] = [list(b) for b in cfg.duration_buckets_s]
    return d


def scenario_from_dict(d: dict) -> ScenarioConfig:
    kwargs = dict(d)
    if "duration_buckets_s" in kwargs:
        kwargs["duration_buckets_s"] = tuple(
            tuple(b) for b in kwargs["duration_buckets_s"])
    if isinstance(kwargs.get("backend"), dict):
        kwargs["backend"] = SimBackendConfig(**kwargs["backend"])
    if isinstance(kwargs.get("policy"), dict):
        kwargs["policy"] = BatchingPolicy(**kwargs["policy"])
    if isinstance(kwargs.get("vad"), dict):
        kwargs["vad"] = VadConfig(**kwargs["vad"])
    return ScenarioConfig(**kwargs)


@dataclass
class SegmentTrace:
    segment_id: str
    session_id: str
    bucket: tuple[float, float]
    endpoint_ms: float
    duration_s: float
    queue_wait_ms: float
    backend_ms: float
    e2e_ms: float
    batch_size: int
    text: str


@dataclass
class SessionTrace:
    session_id: str
    launch_index: int
    bucket: tuple[float, float]
    start_ms: float
    end_ms: float
    segments: list[SpeechSegment]


@dataclass
class VirtualRunResult:
    report: LatencyReport
    segments: list[SegmentTrace]
    sessions: list[SessionTrace]


def simulate_sessions(cfg: ScenarioConfig) -> list[SessionTrace]:
    """Closed-loop VAD phase, independent of serving mode: stream every
    user's frames through a fresh segmenter on the virtual clock."""
    buckets = cfg.duration_buckets_s
    users = [(f"u{i:03d}", buckets[i % len(buckets)])
             for i in range(cfg.sessions_per_bucket * len(buckets))]
    slots = [(0.0, s) for s in range(cfg.concurrency)]
    heapq.heapify(slots)
    frame_ms = float(cfg.frame_ms)
    sessions: list[SessionTrace] = []
    for launch_index, (user_id, bucket) in enumerate(users):
        start, slot = heapq.heappop(slots)
        user = generate_user_audio(cfg.seed, user_id, bucket,
                                   cfg.speech_silence_duty,
                                   sample_rate_hz=cfg.sample_rate_hz,
                                   frame_ms=cfg.frame_ms)
        state = make_state(user_id)
        segments: list[SpeechSegment] = []
        for k in range(user.n_frames):
            frame = AudioFrame(session_id=user_id,
                               samples=user.frame_samples(k),
                               sample_rate_hz=user.sample_rate_hz,
                               capture_time=start + (k + 1) * frame_ms)
            segments.extend(ingest_frame(state, cfg.vad, frame))
        segments.extend(finalize_stream(state, cfg.vad))
        end = start + user.n_frames * frame_ms
        sessions.append(SessionTrace(session_id=user_id,
                                     launch_index=launch_index,
                                     bucket=bucket, start_ms=start,
                                     end_ms=end, segments=segments))
        heapq.heappush(slots, (end, slot))
    return sessions


def _segment_text(cfg: ScenarioConfig, seg: SpeechSegment) -> str:
    return sim_transcript_for_segment(cfg.backend, seg)


def _serve_multiplexed(cfg: ScenarioConfig,
                       sessions: list[SessionTrace]) -> list[SegmentTrace]:
    """Event sweep over the shared queue: single device, completion handled
    before same-instant arrivals, queue polled after each enqueue."""
    bucket_of = {s.session_id: s.bucket for s in sessions}
    arrivals = sorted((seg for s in sessions for seg in s.segments),
                      key=lambda g: (g.endpoint_time, g.segment_id))
    queue = SegmentQueue()
    policy = cfg.policy
    traces: list[SegmentTrace] = []
    in_flight = None  # (batch, duration_ms)
    done_at = math.inf
    now = 0.0
    i = 0

    def poll(t: float) -> None:
        nonlocal in_flight, done_at
        if in_flight is not None:
            return
        batch = queue.try_form_batch(policy, t)
        if batch is None:
            return
        duration = sim_batch_duration_ms(cfg.backend, len(batch.entries))
        in_flight = (batch, duration)
        done_at = t + duration

    while i < len(arrivals) or len(queue) or in_flight is not None:
        candidates = []
        if in_flight is not None:
            candidates.append(done_at)
        elif len(queue):
            candidates.append(max(now, queue.next_trigger_deadline(policy)))
        if i < len(arrivals):
            candidates.append(arrivals[i].endpoint_time)
        now = min(candidates)
        if in_flight is not None and done_at == now:
            batch, duration = in_flight
            for entry in batch.entries:
                seg = entry.segment
                traces.append(SegmentTrace(
                    segment_id=seg.segment_id, session_id=seg.session_id,
                    bucket=bucket_of[seg.session_id],
                    endpoint_ms=seg.endpoint_time,
                    duration_s=seg.duration_s,
                    queue_wait_ms=batch.formed_at - entry.enqueue_time,
                    backend_ms=duration,
                    e2e_ms=now - seg.endpoint_time,
                    batch_size=len(batch.entries),
                    text=_segment_text(cfg, seg),
                ))
            in_flight = None
            done_at = math.inf
            if len(queue):
                poll(now)
        while i < len(arrivals) and arrivals[i].endpoint_time == now:
            queue.enqueue_segment(arrivals[i], now)
            i += 1
            poll(now)
        if len(queue) and in_flight is None:
            poll(now)
    return traces


def _serve_sequential(cfg: ScenarioConfig,
                      sessions: list[SessionTrace]) -> list[SegmentTrace]:
    """Whole-session jobs, FIFO by stream end; one job at a time with the
    job's segments batched in endpoint order up to max_batch."""
    traces: list[SegmentTrace] = []
    max_batch = cfg.policy.max_batch
    free_at = 0.0
    for session in sorted(sessions,
                          key=lambda s: (s.end_ms, s.launch_index)):
        t = max(free_at, session.end_ms)
        for i in range(0, len(session.segments), max_batch):
            chunk = session.segments[i:i + max_batch]
            duration = sim_batch_duration_ms(cfg.backend, len(chunk))
            done = t + duration
            for seg in chunk:
                traces.append(SegmentTrace(
                    segment_id=seg.segment_id, session_id=seg.session_id,
                    bucket=session.bucket,
                    endpoint_ms=seg.endpoint_time,
                    duration_s=seg.duration_s,
                    queue_wait_ms=t - seg.endpoint_time,
                    backend_ms=duration,
                    e2e_ms=done - seg.endpoint_time,
                    batch_size=len(chunk),
                    text=_segment_text(cfg, seg),
                ))
            t = done
        free_at = t
    return traces


def _build_report(cfg: ScenarioConfig,
                  traces: list[SegmentTrace]) -> LatencyReport:
    samples: dict[tuple[float, float], list[tuple[float, int]]] = {
        b: [] for b in cfg.duration_buckets_s}
    for tr in traces:
        samples[tr.bucket].append((tr.e2e_ms, tr.batch_size))
    cells = build_cells(cfg.mode, cfg.concurrency, samples)
    return LatencyReport(mode=cfg.mode, concurrency=cfg.concurrency,
                         clock=cfg.clock, seed=cfg.seed,
                         config_hash=hash_config(scenario_to_dict(cfg)),
                         cells=cells)


def run_virtual(cfg: ScenarioConfig,
                sessions: list[SessionTrace] | None = None) -> VirtualRunResult:
    if cfg.clock != "virtual":
        raise ValueError("run_virtual requires clock='virtual'")
    if sessions is None:
        sessions = simulate_sessions(cfg)
    if cfg.mode == MULTIPLEXED:
        traces = _serve_multiplexed(cfg, sessions)
    else:
        traces = _serve_sequential(cfg, sessions)
    total = sum(len(s.segments) for s in sessions)
    if len(traces) != total:
        raise ScenarioError(
            f"served {len(traces)} segments, expected {total}")
    traces.sort(key=lambda t: (t.endpoint_ms, t.segment_id))
    return VirtualRunResult(report=_build_report(cfg, traces),
                            segments=traces, sessions=sessions)


def run_mode_pair(cfg: ScenarioConfig
                  ) -> tuple[VirtualRunResult, VirtualRunResult]:
    """Run both serving modes over one shared VAD phase (the segmentation
    is mode-independent); returns (multiplexed, sequential) results."""
    sessions = simulate_sessions(replace(cfg, mode=MULTIPLEXED))
    mux = run_virtual(replace(cfg, mode=MULTIPLEXED), sessions=sessions)
    seq = run_virtual(replace(cfg, mode=SEQUENTIAL), sessions=sessions)
    return mux, seq


def run_scenario(cfg: ScenarioConfig) -> LatencyReport:
    """Run one benchmark scenario to a latency report.

    Virtual clock runs in-process and deterministically; wall clock streams
    real audio against a live server at cfg.server_url.
    """
    if cfg.clock == "virtual":
        return run_virtual(cfg).report
    from dictamux.wallclient import run_wall_scenario
    return run_wall_scenario(cfg)
