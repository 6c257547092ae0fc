"""Batch transcription backends behind one contract.

``transcribe_batch`` returns exactly one result per batch entry, in entry
order, or an error result for every entry; partial results never happen.
Two implementations: a deterministic simulated backend whose cost model is
``fixed_overhead_ms + per_row_ms * ceil(rows / concurrency_width)`` (the
amortization that makes multiplexing pay off), and a remote client that
ships batches to an external inference service over HTTP.
"""

from __future__ import annotations

import base64
import hashlib
import math
import random
import threading
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable

import httpx
import numpy as np

if TYPE_CHECKING:
    from dictamux.scheduler import Batch


@dataclass
class TranscriptResult:
    """Per-segment transcription outcome with its timing breakdown.

    The three timing components are measured independently: the backend
    stamps backend_time_ms, the dispatch loop stamps queue_wait_ms, and the
    delivery path stamps e2e_latency_ms (endpoint to delivery).
    """

    segment_id: str
    session_id: str
    text: str
    backend_time_ms: float = 0.0
    queue_wait_ms: float = 0.0
    e2e_latency_ms: float = 0.0
    status: str = "ok"
    message: str = ""

    @property
    def is_error(self) -> bool:
        return self.status != "ok"


@dataclass
class SimBackendConfig:
    """Cost model and text seed for the simulated backend."""

    fixed_overhead_ms: float = 500.0
    per_row_ms: float = 120.0
    window_s: float = 30.0
    seed: int = 0
    concurrency_width: int = 1

    def __post_init__(self) -> None:
        if self.fixed_overhead_ms < 0:
            raise ValueError("fixed_overhead_ms must be >= 0")
        if self.per_row_ms <= 0:
            raise ValueError("per_row_ms must be positive")
        if self.window_s <= 0:
            raise ValueError("window_s must be positive")
        if self.concurrency_width < 1:
            raise ValueError("concurrency_width must be >= 1")


@dataclass
class RemoteBackendConfig:
    endpoint_url: str
    decode_options: dict[str, Any] = field(default_factory=dict)
    request_timeout_ms: float = 10000.0
    max_retries: int = 2

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.request_timeout_ms <= 0:
            raise ValueError("request_timeout_ms must be positive")


def pad_or_trim(samples: np.ndarray, window_s: float,
                sample_rate_hz: int) -> np.ndarray:
    """Fit samples to exactly window_s seconds: zero-pad or truncate at the
    end, mirroring fixed-window model front ends."""
    target = int(round(window_s * sample_rate_hz))
    if len(samples) == target:
        return samples
    if len(samples) > target:
        return samples[:target]
    out = np.zeros(target, dtype=samples.dtype if len(samples) else np.int16)
    if len(samples):
        out[:len(samples)] = samples
    return out


def sim_batch_duration_ms(cfg: SimBackendConfig, n_rows: int) -> float:
    """Simulated device occupancy for a batch of n_rows segments."""
    if n_rows < 1:
        raise ValueError("a batch holds at least one segment")
    return cfg.fixed_overhead_ms + cfg.per_row_ms * math.ceil(
        n_rows / cfg.concurrency_width)


_SYLLABLES = ("ka", "ri", "to", "ve", "na", "su", "mel", "or",
              "da", "pi", "lu", "sha", "en", "gro", "mi", "tan")
WORDS_PER_SECOND = 2.5


def sim_segment_text(cfg: SimBackendConfig, identity: str,
                     duration_s: float) -> str:
    """Deterministic pseudo-transcript: ~2.5 words per audio second, seeded
    by (config seed, identity key)."""
    n_words = max(1, math.ceil(WORDS_PER_SECOND * duration_s))
    digest = hashlib.blake2s(
        f"{cfg.seed}:{identity}".encode(), digest_size=8).digest()
    rng = random.Random(int.from_bytes(digest, "big"))
    words = []
    for _ in range(n_words):
        words.append("".join(rng.choice(_SYLLABLES)
                             for _ in range(rng.randint(2, 3))))
    return " ".join(words)


def sim_transcript_for_segment(cfg: SimBackendConfig, segment) -> str:
    """Transcript for one segment: empty for pure silence, otherwise keyed
    by the audio content itself, so replaying identical audio yields
    identical text even though segment ids never repeat."""
    samples = segment.samples
    if len(samples) == 0 or not np.any(samples):
        return ""
    key = hashlib.blake2s(samples.astype("<i2").tobytes(),
                          digest_size=12).hexdigest()
    return sim_segment_text(cfg, key, segment.duration_s)


def _require_shared_rate(batch: "Batch") -> None:
    rates = {e.segment.sample_rate_hz for e in batch.entries}
    if len(rates) > 1:
        raise ValueError(f"batch mixes sample rates {sorted(rates)}")


class SimBackend:
    """Deterministic stand-in for a GPU inference service.

    Occupies its (virtual) device exclusively for the modeled duration;
    transcripts are a pure function of (seed, segment_id, duration), so the
    same audio stream transcribes identically across runs and modes.
    """

    def __init__(self, cfg: SimBackendConfig,
                 sleep: Callable[[float], None] = time.sleep):
        self.cfg = cfg
        self._sleep = sleep
        self._device_lock = threading.Lock()

    def transcribe_batch(self, batch: "Batch") -> list[TranscriptResult]:
        if not batch.entries:
            raise ValueError("a batch holds at least one segment")
        _require_shared_rate(batch)
        duration_ms = sim_batch_duration_ms(self.cfg, len(batch.entries))
        with self._device_lock:
            self._sleep(duration_ms / 1000.0)
        results = []
        for entry in batch.entries:
            seg = entry.segment
            results.append(TranscriptResult(
                segment_id=seg.segment_id,
                session_id=seg.session_id,
                text=sim_transcript_for_segment(self.cfg, seg),
                backend_time_ms=duration_ms,
            ))
        return results


def encode_batch_request(batch: "Batch",
                         decode_options: dict[str, Any]) -> dict[str, Any]:
    """Wire format: JSON with little-endian PCM16 audio in base64."""
    if not batch.entries:
        raise ValueError("a batch holds at least one segment")
    _require_shared_rate(batch)
    return {
        "batch_id": batch.batch_id,
        "sample_rate_hz": batch.entries[0].segment.sample_rate_hz,
        "decode_options": decode_options,
        "segments": [
            {
                "segment_id": e.segment.segment_id,
                "audio_b64": base64.b64encode(
                    e.segment.samples.astype("<i2").tobytes()).decode("ascii"),
            }
            for e in batch.entries
        ],
    }


class RemoteBackend:
    """Forwards batches to an external transcription service.

    Timeouts and transport/HTTP failures are retried with the same batch_id
    (the service must treat repeated batch ids as idempotent). A malformed
    body or a row-count mismatch is a protocol bug and fails immediately
    with a distinct message. Any failure produces one error result per
    entry; rows and entries are matched by index.
    """

    def __init__(self, cfg: RemoteBackendConfig,
                 client: httpx.Client | None = None):
        self.cfg = cfg
        self._client = client or httpx.Client(
            timeout=cfg.request_timeout_ms / 1000.0)

    def close(self) -> None:
        self._client.close()

    def transcribe_batch(self, batch: "Batch") -> list[TranscriptResult]:
        payload = encode_batch_request(batch, self.cfg.decode_options)
        started = time.monotonic()
        last_error = "no attempts made"
        for _attempt in range(self.cfg.max_retries + 1):
            try:
                response = self._client.post(self.cfg.endpoint_url,
                                             json=payload)
            except httpx.HTTPError as exc:
                last_error = f"transport failure: {exc}"
                continue
            if response.status_code // 100 != 2:
                last_error = f"http status {response.status_code}"
                continue
            elapsed_ms = (time.monotonic() - started) * 1000.0
            return self._map_response(batch, response, elapsed_ms)
        return self._all_errors(batch, last_error)

    def _map_response(self, batch: "Batch", response: httpx.Response,
                      elapsed_ms: float) -> list[TranscriptResult]:
        try:
            body = response.json()
            rows = body["results"]
        except Exception:
            return self._all_errors(batch, "malformed response body")
        if not isinstance(rows, list) or len(rows) != len(batch.entries):
            got = len(rows) if isinstance(rows, list) else "non-list"
            return self._all_errors(
                batch, f"row count mismatch: got {got}, "
                       f"expected {len(batch.entries)}")
        results = []
        for entry, row in zip(batch.entries, rows):
            seg = entry.segment
            if not isinstance(row, dict) or "text" not in row:
                return self._all_errors(batch, "malformed response row")
            if row.get("segment_id") not in (None, seg.segment_id):
                return self._all_errors(
                    batch, f"segment_id mismatch at row for {seg.segment_id}")
            results.append(TranscriptResult(
                segment_id=seg.segment_id,
                session_id=seg.session_id,
                text=str(row["text"]),
                backend_time_ms=elapsed_ms,
            ))
        return results

    def _all_errors(self, batch: "Batch",
                    message: str) -> list[TranscriptResult]:
        return [
            TranscriptResult(
                segment_id=e.segment.segment_id,
                session_id=e.segment.session_id,
                text="",
                status="error",
                message=message,
            ) for e in batch.entries
        ]
