"""Energy-based voice activity detection and streaming speech segmentation.

Turns a per-session stream of fixed-size PCM16 frames into self-contained
speech segments, calibrated to land between ``min_segment_s`` and
``max_segment_s`` with ``padding_ms`` of silence context on both sides.
Segments are emitted as soon as their end is detectable (speech end plus
hangover), which is what keeps downstream latency low.

All duration bookkeeping is done in audio samples, never in arrival-time
deltas, so replaying a stream faster than real time segments identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

FULL_SCALE = 32768.0  # dBFS reference for signed 16-bit PCM


class VadError(Exception):
    """Protocol violation while feeding audio into a segmenter."""


class FrameOrderError(VadError):
    """Frame arrived with a capture_time earlier than its predecessor."""


class SampleRateChangeError(VadError):
    """Sample rate changed mid-session; the session must be terminated."""


class FrameClass(Enum):
    SILENCE = 0
    SPEECH = 1


class VadMode(Enum):
    SILENCE = "silence"
    SPEECH = "speech"
    HANGOVER = "hangover"


@dataclass
class VadConfig:
    """Segmenter calibration. Defaults target command-style dictation."""

    frame_len_ms: int = 30
    energy_threshold_db: float = -40.0
    speech_trigger_frames: int = 3
    silence_hangover_ms: int = 300
    min_segment_s: float = 3.0
    max_segment_s: float = 30.0
    padding_ms: int = 300

    def __post_init__(self) -> None:
        if not 0 < self.min_segment_s < self.max_segment_s:
            raise ValueError("need 0 < min_segment_s < max_segment_s")
        if self.padding_ms > self.silence_hangover_ms:
            raise ValueError("padding_ms must not exceed silence_hangover_ms")
        if self.speech_trigger_frames < 1:
            raise ValueError("speech_trigger_frames must be >= 1")
        if self.frame_len_ms <= 0:
            raise ValueError("frame_len_ms must be positive")

    @property
    def energy_threshold_rms(self) -> float:
        """Linear RMS equivalent of the dBFS threshold."""
        return FULL_SCALE * 10.0 ** (self.energy_threshold_db / 20.0)


@dataclass
class AudioFrame:
    """One fixed-length chunk of a session's PCM16 stream.

    ``capture_time`` is the monotonic instant (ms) at which the frame became
    fully available: the end of its audio span on a live stream, the receive
    time on a server.
    """

    session_id: str
    samples: np.ndarray
    sample_rate_hz: int = 16000
    capture_time: float = 0.0


@dataclass
class SpeechSegment:
    """A finalized, padded speech unit ready for transcription."""

    segment_id: str
    session_id: str
    samples: np.ndarray
    sample_rate_hz: int
    speech_start: float
    endpoint_time: float
    duration_s: float
    forced_split: bool = False
    final_flush: bool = False
    # Stream-sample span of the non-padding content, used for offset
    # reporting and for checking that segments never overlap.
    content_start_index: int = 0
    content_end_index: int = 0

    @property
    def content_start_ms(self) -> float:
        return self.content_start_index * 1000.0 / self.sample_rate_hz


def rms_dbfs(samples: np.ndarray) -> float:
    """RMS energy in dB relative to full scale; -inf for digital silence."""
    if len(samples) == 0:
        raise ValueError("cannot compute energy of an empty frame")
    mean_sq = float(np.mean(samples.astype(np.float64) ** 2))
    if mean_sq == 0.0:
        return -math.inf
    return 20.0 * math.log10(math.sqrt(mean_sq) / FULL_SCALE)


def classify_frame(cfg: VadConfig, frame: AudioFrame) -> FrameClass:
    """Label a frame SPEECH iff its RMS energy reaches the configured
    threshold. Pure function of (cfg, frame)."""
    if len(frame.samples) == 0:
        raise ValueError("cannot classify an empty frame")
    mean_sq = float(np.mean(frame.samples.astype(np.float64) ** 2))
    # Linear-domain comparison; equivalent to rms_dbfs(f) >= threshold_db.
    threshold = cfg.energy_threshold_rms
    if mean_sq >= threshold * threshold:
        return FrameClass.SPEECH
    return FrameClass.SILENCE


class _Ring:
    """Sample ring keeping the most recent ``cap`` samples."""

    def __init__(self, cap: int):
        self.cap = cap
        self.chunks: list[np.ndarray] = []
        self.total = 0

    def push(self, samples: np.ndarray) -> None:
        if self.cap <= 0:
            return
        self.chunks.append(samples)
        self.total += len(samples)
        while self.total - len(self.chunks[0]) >= self.cap:
            self.total -= len(self.chunks[0])
            self.chunks.pop(0)
        excess = self.total - self.cap
        if excess > 0:
            self.chunks[0] = self.chunks[0][excess:]
            self.total -= excess

    def drain(self) -> list[np.ndarray]:
        out = self.chunks
        self.chunks = []
        self.total = 0
        return out


@dataclass
class _Held:
    """A finalized sub-minimum segment waiting to be merged forward."""

    chunks: list[tuple[int | None, np.ndarray]]
    total: int
    content_start: int
    content_end: int
    speech_start: float


@dataclass
class VadState:
    """Per-session segmenter state. One instance per stream, never shared."""

    session_id: str
    segment_prefix: str
    mode: VadMode = VadMode.SILENCE
    consecutive_speech_frames: int = 0
    silence_run_samples: int = 0
    segment_start_time: float = 0.0
    samples_ingested: int = 0
    sample_rate_hz: int | None = None
    last_capture_time: float = -math.inf
    saw_partial_frame: bool = False
    finalized: bool = False
    failed: bool = False
    next_segment_seq: int = 0
    # pending segment content: (stream_index | None, samples) chunks
    pending: list[tuple[int | None, np.ndarray]] = field(default_factory=list)
    pending_len: int = 0
    pending_content_start: int = 0
    pre_roll: _Ring | None = None
    trigger_buf: list[tuple[int, float, np.ndarray]] = field(default_factory=list)
    held: _Held | None = None

    @property
    def silence_run_ms(self) -> float:
        if self.sample_rate_hz is None:
            return 0.0
        return self.silence_run_samples * 1000.0 / self.sample_rate_hz


def make_state(session_id: str, segment_prefix: str | None = None) -> VadState:
    return VadState(session_id=session_id,
                    segment_prefix=segment_prefix or session_id)


def _samples_per(cfg_ms: float, rate: int) -> int:
    return int(round(cfg_ms * rate / 1000.0))


def _next_segment_id(state: VadState) -> str:
    seg_id = f"{state.segment_prefix}:{state.next_segment_seq:05d}"
    state.next_segment_seq += 1
    return seg_id


def _begin_segment(state: VadState, cfg: VadConfig, rate: int) -> None:
    """Open a pending segment from held audio, pre-roll padding and the
    buffered trigger frames."""
    pad = _samples_per(cfg.padding_ms, rate)
    chunks: list[tuple[int | None, np.ndarray]] = []
    total = 0
    if state.held is not None:
        chunks.extend(state.held.chunks)
        total += state.held.total
        state.pending_content_start = state.held.content_start
        state.segment_start_time = state.held.speech_start
    lead = state.pre_roll.drain() if state.pre_roll else []
    lead_len = sum(len(c) for c in lead)
    if lead_len < pad and state.held is None:
        # Stream began mid-speech; synthesize the missing silence context.
        chunks.append((None, np.zeros(pad - lead_len, dtype=np.int16)))
        total += pad - lead_len
    for c in lead:
        chunks.append((None, c))
        total += len(c)
    first_idx, first_capture, first_samples = state.trigger_buf[0]
    if state.held is None:
        state.pending_content_start = first_idx
        state.segment_start_time = (
            first_capture - len(first_samples) * 1000.0 / rate)
    for idx, _capture, samples in state.trigger_buf:
        chunks.append((idx, samples))
        total += len(samples)
    state.trigger_buf.clear()
    state.consecutive_speech_frames = 0
    state.held = None
    state.pending = chunks
    state.pending_len = total
    state.mode = VadMode.SPEECH


def _concat_pending(state: VadState) -> np.ndarray:
    if not state.pending:
        return np.zeros(0, dtype=np.int16)
    return np.concatenate([c for _, c in state.pending])


def _split_if_full(state: VadState, cfg: VadConfig, rate: int,
                   capture_time: float,
                   emitted: list[SpeechSegment]) -> None:
    """Emit exact max_segment_s chunks while the pending buffer is full.

    The cut lands on a sample boundary; the remainder keeps accumulating
    as a new segment with no pre-roll.
    """
    max_samples = int(round(cfg.max_segment_s * rate))
    while state.pending_len >= max_samples:
        consumed = 0
        cut_chunk_i = 0
        cut_offset = 0
        for i, (_idx, samples) in enumerate(state.pending):
            if consumed + len(samples) >= max_samples:
                cut_chunk_i = i
                cut_offset = max_samples - consumed
                break
            consumed += len(samples)
        idx, samples = state.pending[cut_chunk_i]
        head = state.pending[:cut_chunk_i] + [(idx, samples[:cut_offset])]
        tail: list[tuple[int | None, np.ndarray]] = []
        if cut_offset < len(samples):
            tail.append((None if idx is None else idx + cut_offset,
                         samples[cut_offset:]))
        tail.extend(state.pending[cut_chunk_i + 1:])
        if idx is None:
            raise AssertionError("forced split landed inside padding")
        cut_stream_idx = idx + cut_offset
        seg_samples = np.concatenate([c for _, c in head])
        emitted.append(SpeechSegment(
            segment_id=_next_segment_id(state),
            session_id=state.session_id,
            samples=seg_samples,
            sample_rate_hz=rate,
            speech_start=state.segment_start_time,
            endpoint_time=capture_time,
            duration_s=len(seg_samples) / rate,
            forced_split=True,
            content_start_index=state.pending_content_start,
            content_end_index=cut_stream_idx,
        ))
        state.pending = tail
        state.pending_len -= max_samples
        state.pending_content_start = cut_stream_idx
        state.segment_start_time = capture_time


def _finalize_from_hangover(state: VadState, cfg: VadConfig, rate: int,
                            capture_time: float,
                            emitted: list[SpeechSegment]) -> None:
    """Close the pending segment: keep exactly padding_ms of the trailing
    silence, reseed the pre-roll with the observed silence, and either emit
    or hold the result depending on the minimum-duration rule."""
    pad = _samples_per(cfg.padding_ms, rate)
    trim = state.silence_run_samples - pad
    content_end = state.samples_ingested - state.silence_run_samples

    all_samples = _concat_pending(state)
    silence_tail = all_samples[len(all_samples) - state.silence_run_samples:]
    if state.pre_roll is not None:
        state.pre_roll.push(silence_tail.copy())

    kept = all_samples[:len(all_samples) - trim] if trim > 0 else all_samples
    min_samples = int(round(cfg.min_segment_s * rate))
    if len(kept) < min_samples:
        state.held = _Held(chunks=[(None, kept)], total=len(kept),
                           content_start=state.pending_content_start,
                           content_end=content_end,
                           speech_start=state.segment_start_time)
    else:
        emitted.append(SpeechSegment(
            segment_id=_next_segment_id(state),
            session_id=state.session_id,
            samples=kept,
            sample_rate_hz=rate,
            speech_start=state.segment_start_time,
            endpoint_time=capture_time,
            duration_s=len(kept) / rate,
            content_start_index=state.pending_content_start,
            content_end_index=content_end,
        ))
    state.pending = []
    state.pending_len = 0
    state.silence_run_samples = 0
    state.consecutive_speech_frames = 0
    state.mode = VadMode.SILENCE


def _check_frame(state: VadState, cfg: VadConfig, frame: AudioFrame) -> int:
    if state.finalized:
        raise VadError("stream already finalized")
    if state.failed:
        raise VadError("session terminated after an earlier error")
    if frame.capture_time < state.last_capture_time:
        raise FrameOrderError(
            f"frame capture_time {frame.capture_time} precedes "
            f"{state.last_capture_time}")
    rate = frame.sample_rate_hz
    if state.sample_rate_hz is None:
        state.sample_rate_hz = rate
        state.pre_roll = _Ring(_samples_per(cfg.padding_ms, rate))
    elif rate != state.sample_rate_hz:
        state.failed = True
        raise SampleRateChangeError(
            f"sample rate changed from {state.sample_rate_hz} to {rate}")
    nominal = _samples_per(cfg.frame_len_ms, rate)
    if len(frame.samples) == 0:
        raise VadError("empty frame")
    if state.saw_partial_frame:
        raise VadError("frames may not follow a partial (final) frame")
    if len(frame.samples) > nominal:
        raise VadError(f"frame has {len(frame.samples)} samples, "
                       f"expected at most {nominal}")
    if len(frame.samples) < nominal:
        state.saw_partial_frame = True
    return rate


def ingest_frame(state: VadState, cfg: VadConfig,
                 frame: AudioFrame) -> list[SpeechSegment]:
    """Advance the segmenter by one frame; returns segments finalized by it.

    Frames of one session must arrive serially in capture order. An
    out-of-order frame is rejected without touching the state; a sample
    rate change terminates the session.
    """
    rate = _check_frame(state, cfg, frame)
    cls = classify_frame(cfg, frame)
    start_idx = state.samples_ingested
    state.samples_ingested += len(frame.samples)
    state.last_capture_time = frame.capture_time
    emitted: list[SpeechSegment] = []

    if state.mode is VadMode.SILENCE:
        if cls is FrameClass.SPEECH:
            state.consecutive_speech_frames += 1
            state.trigger_buf.append((start_idx, frame.capture_time,
                                      frame.samples))
            if state.consecutive_speech_frames >= cfg.speech_trigger_frames:
                _begin_segment(state, cfg, rate)
                _split_if_full(state, cfg, rate, frame.capture_time, emitted)
        else:
            # A broken trigger run is still context; keep it as pre-roll.
            for _idx, _cap, samples in state.trigger_buf:
                state.pre_roll.push(samples)
            state.trigger_buf.clear()
            state.consecutive_speech_frames = 0
            state.pre_roll.push(frame.samples)
    elif state.mode is VadMode.SPEECH:
        state.pending.append((start_idx, frame.samples))
        state.pending_len += len(frame.samples)
        if cls is FrameClass.SPEECH:
            _split_if_full(state, cfg, rate, frame.capture_time, emitted)
        else:
            state.mode = VadMode.HANGOVER
            state.silence_run_samples = len(frame.samples)
            if state.silence_run_samples >= _samples_per(
                    cfg.silence_hangover_ms, rate):
                _finalize_from_hangover(state, cfg, rate,
                                        frame.capture_time, emitted)
    else:  # HANGOVER
        state.pending.append((start_idx, frame.samples))
        state.pending_len += len(frame.samples)
        if cls is FrameClass.SPEECH:
            state.mode = VadMode.SPEECH
            state.silence_run_samples = 0
            _split_if_full(state, cfg, rate, frame.capture_time, emitted)
        else:
            state.silence_run_samples += len(frame.samples)
            if state.silence_run_samples >= _samples_per(
                    cfg.silence_hangover_ms, rate):
                _finalize_from_hangover(state, cfg, rate,
                                        frame.capture_time, emitted)
    return emitted


def finalize_stream(state: VadState, cfg: VadConfig) -> list[SpeechSegment]:
    """Flush any pending speech (held sub-minimum audio included) at end of
    stream. Idempotent: a second call returns nothing."""
    if state.finalized or state.failed:
        return []
    state.finalized = True
    rate = state.sample_rate_hz
    if rate is None:
        return []
    emitted: list[SpeechSegment] = []
    if state.trigger_buf:
        # Un-triggered speech at stream end still counts as pending speech.
        _begin_segment(state, cfg, rate)
    if state.pending_len > 0:
        samples = _concat_pending(state)
        content_end = state.samples_ingested - state.silence_run_samples
        emitted.append(SpeechSegment(
            segment_id=_next_segment_id(state),
            session_id=state.session_id,
            samples=samples,
            sample_rate_hz=rate,
            speech_start=state.segment_start_time,
            endpoint_time=state.last_capture_time,
            duration_s=len(samples) / rate,
            final_flush=True,
            content_start_index=state.pending_content_start,
            content_end_index=content_end,
        ))
    elif state.held is not None:
        held = state.held
        samples = np.concatenate([c for _, c in held.chunks])
        emitted.append(SpeechSegment(
            segment_id=_next_segment_id(state),
            session_id=state.session_id,
            samples=samples,
            sample_rate_hz=rate,
            speech_start=held.speech_start,
            endpoint_time=state.last_capture_time,
            duration_s=len(samples) / rate,
            final_flush=True,
            content_start_index=held.content_start,
            content_end_index=held.content_end,
        ))
    state.pending = []
    state.pending_len = 0
    state.held = None
    state.trigger_buf.clear()
    state.mode = VadMode.SILENCE
    return emitted
