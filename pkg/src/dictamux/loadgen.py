"""Synthetic dictation users for the benchmark harness.

Each virtual user is a seeded, replayable audio plan: alternating speech
and silence spans at a configured duty cycle, rendered as PCM16 frames
(uniform noise well above the VAD threshold for speech, zeros for silence).
Identical (seed, user_id) always yields byte-identical frames.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

SPEECH_NOISE_AMP = 8000  # uniform noise in [-amp, amp): ~-17 dBFS RMS
SPEECH_SPAN_MS = (2000, 15000)
INITIAL_SILENCE_MS = (300, 1000)


@dataclass
class AudioSpan:
    duration_ms: int
    is_speech: bool


@dataclass
class VirtualUser:
    user_id: str
    bucket: tuple[float, float]
    sample_rate_hz: int
    frame_ms: int
    total_ms: int
    spans: list[AudioSpan]
    samples: np.ndarray = field(repr=False)

    @property
    def n_frames(self) -> int:
        return self.total_ms // self.frame_ms

    @property
    def speech_ms(self) -> int:
        return sum(s.duration_ms for s in self.spans if s.is_speech)

    def frame_samples(self, k: int) -> np.ndarray:
        n = self.sample_rate_hz * self.frame_ms // 1000
        return self.samples[k * n:(k + 1) * n]


def _user_rng(seed: int, user_id: str) -> np.random.Generator:
    digest = hashlib.blake2s(f"{seed}:{user_id}".encode(),
                             digest_size=8).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))


def generate_user_audio(seed: int, user_id: str, bucket: tuple[float, float],
                        duty: float, *, sample_rate_hz: int = 16000,
                        frame_ms: int = 30) -> VirtualUser:
    """Build one user's stream: total duration uniform in the bucket, speech
    spans of 2-15 s, silence spans sized so speech time tracks the duty
    cycle. Spans are frame-aligned."""
    lo, hi = bucket
    if not 0 < duty < 1:
        raise ValueError("duty must be strictly between 0 and 1")
    if not 0 < lo < hi:
        raise ValueError("bucket needs 0 < lo < hi")
    rng = _user_rng(seed, user_id)

    def align(ms: float) -> int:
        return max(frame_ms, int(round(ms / frame_ms)) * frame_ms)

    total_ms = int(rng.integers(int(lo * 1000), int(hi * 1000) + 1))
    total_ms = (total_ms // frame_ms) * frame_ms

    spans: list[AudioSpan] = []
    t = align(float(rng.integers(*INITIAL_SILENCE_MS)))
    spans.append(AudioSpan(duration_ms=t, is_speech=False))
    speaking = True
    while t < total_ms:
        if speaking:
            span = align(float(rng.integers(*SPEECH_SPAN_MS)))
        else:
            span = align(spans[-1].duration_ms * (1.0 - duty) / duty)
        span = min(span, total_ms - t)
        if span <= 0:
            break
        spans.append(AudioSpan(duration_ms=span, is_speech=speaking))
        t += span
        speaking = not speaking

    n_per_ms = sample_rate_hz // 1000
    samples = np.zeros(total_ms * n_per_ms, dtype=np.int16)
    offset = 0
    for span in spans:
        n = span.duration_ms * n_per_ms
        if span.is_speech:
            samples[offset:offset + n] = rng.integers(
                -SPEECH_NOISE_AMP, SPEECH_NOISE_AMP, size=n, dtype=np.int16)
        offset += n
    return VirtualUser(user_id=user_id, bucket=bucket,
                       sample_rate_hz=sample_rate_hz, frame_ms=frame_ms,
                       total_ms=total_ms, spans=spans, samples=samples)
