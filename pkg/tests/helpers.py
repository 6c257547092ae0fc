"""Shared builders for audio frames and labeled streams."""

from __future__ import annotations

import numpy as np

from dictamux.vad import AudioFrame, VadConfig, VadState, finalize_stream, ingest_frame

SPEECH_AMP = 1200  # constant-amplitude speech, ~-28.7 dBFS


def const_frame(value: int, n: int, rate: int, capture: float,
                session: str = "s1") -> AudioFrame:
    samples = np.full(n, value, dtype=np.int16)
    return AudioFrame(session_id=session, samples=samples,
                      sample_rate_hz=rate, capture_time=capture)


def frames_from_flags(flags: list[bool], *, rate: int = 16000,
                      frame_ms: int = 30, session: str = "s1",
                      amp: int = SPEECH_AMP) -> list[AudioFrame]:
    """One frame per flag, paced as a real-time stream: frame i covers
    [i, i+1) * frame_ms and is captured at its end."""
    n = round(frame_ms * rate / 1000)
    out = []
    for i, is_speech in enumerate(flags):
        out.append(const_frame(amp if is_speech else 0, n, rate,
                               capture=(i + 1) * float(frame_ms),
                               session=session))
    return out


def flags_from_plan(plan: list[tuple[float, bool]], *,
                    frame_ms: int = 30) -> list[bool]:
    """Expand (duration_s, is_speech) spans into per-frame flags."""
    flags: list[bool] = []
    for dur_s, is_speech in plan:
        flags.extend([is_speech] * round(dur_s * 1000 / frame_ms))
    return flags


def drive(flags: list[bool], cfg: VadConfig, *, rate: int = 16000,
          flush: bool = True, session: str = "s1"):
    """Run a labeled stream through a fresh segmenter; returns
    (segments, state)."""
    state = VadState(session_id=session, segment_prefix=session)
    segments = []
    for frame in frames_from_flags(flags, rate=rate,
                                   frame_ms=cfg.frame_len_ms,
                                   session=session):
        segments.extend(ingest_frame(state, cfg, frame))
    if flush:
        segments.extend(finalize_stream(state, cfg))
    return segments, state
