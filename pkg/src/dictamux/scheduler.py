"""Centralized segment queue and batch dispatch.

Segments from all sessions aggregate into one priority queue, ordered by
(enqueue_time, segment_id). A batching policy decides when the head of the
queue becomes a batch; a dispatch loop feeds batches to a transcription
backend one at a time per device and routes results back to their owners.

The queue is the only cross-session shared state on the hot path: enqueues
may come from many threads, batch extraction is atomic, and a backend call
never blocks an enqueue.
"""

from __future__ import annotations

import heapq
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol

from dictamux.backend import TranscriptResult
from dictamux.vad import SpeechSegment

DYNAMIC = "dynamic"
CONTINUOUS = "continuous"


class DuplicateSegmentError(Exception):
    """A segment_id was enqueued twice in one queue lifetime."""


class QueueClosedError(Exception):
    """Enqueue attempted after shutdown began."""


@dataclass
class BatchingPolicy:
    """Batch formation rules.

    dynamic: fire when the oldest entry waited max_wait_ms, or queued audio
    reaches target_audio_s, or the queue holds max_batch entries.
    continuous: fire when min_batch entries are waiting, with a
    starvation_flush_ms override so a lone talker is never stalled forever.
    """

    kind: str = DYNAMIC
    max_batch: int = 8
    max_wait_ms: float = 200.0
    target_audio_s: float = 120.0
    min_batch: int = 2
    starvation_flush_ms: float = 1000.0

    def __post_init__(self) -> None:
        if self.kind not in (DYNAMIC, CONTINUOUS):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if self.kind == DYNAMIC and self.max_wait_ms <= 0:
            raise ValueError("max_wait_ms must be positive")
        if self.kind == CONTINUOUS and not 1 <= self.min_batch <= self.max_batch:
            raise ValueError("need 1 <= min_batch <= max_batch")


@dataclass
class QueueEntry:
    segment: SpeechSegment
    enqueue_time: float

    @property
    def priority_key(self) -> tuple[float, str]:
        return (self.enqueue_time, self.segment.segment_id)


@dataclass
class Batch:
    batch_id: str
    entries: list[QueueEntry]
    formed_at: float
    total_audio_s: float


@dataclass
class SchedulerStats:
    queue_depth: int
    oldest_wait_ms: float
    batches_formed: int
    mean_batch_size: float
    segments_enqueued: int


class SegmentQueue:
    """Thread-safe FIFO-by-arrival segment queue with batch extraction."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._heap: list[tuple[float, str, QueueEntry]] = []
        self._seen_ids: set[str] = set()
        self._total_audio_s = 0.0
        self._closed = False
        self._batch_seq = 0
        self._segments_enqueued = 0
        self._batches_formed = 0
        self._segments_batched = 0

    def enqueue_segment(self, segment: SpeechSegment, now: float) -> None:
        with self._cond:
            if self._closed:
                raise QueueClosedError("queue is shut down")
            if segment.segment_id in self._seen_ids:
                raise DuplicateSegmentError(segment.segment_id)
            self._seen_ids.add(segment.segment_id)
            entry = QueueEntry(segment=segment, enqueue_time=now)
            heapq.heappush(self._heap,
                           (entry.enqueue_time, segment.segment_id, entry))
            self._total_audio_s += segment.duration_s
            self._segments_enqueued += 1
            self._cond.notify_all()

    def try_form_batch(self, policy: BatchingPolicy,
                       now: float) -> Batch | None:
        """Extract the next batch if a policy trigger fired; never blocks."""
        with self._cond:
            if not self._heap:
                return None
            oldest_wait = now - self._heap[0][0]
            if policy.kind == DYNAMIC:
                fired = (oldest_wait >= policy.max_wait_ms
                         or self._total_audio_s >= policy.target_audio_s
                         or len(self._heap) >= policy.max_batch)
            else:
                fired = (len(self._heap) >= policy.min_batch
                         or oldest_wait >= policy.starvation_flush_ms)
            if not fired:
                return None
            return self._extract(policy, now)

    def force_batch(self, policy: BatchingPolicy, now: float) -> Batch | None:
        """Extract a batch regardless of triggers; used to drain on shutdown."""
        with self._cond:
            if not self._heap:
                return None
            return self._extract(policy, now)

    def _extract(self, policy: BatchingPolicy, now: float) -> Batch:
        entries = [heapq.heappop(self._heap)[2]]
        audio = entries[0].segment.duration_s
        while self._heap and len(entries) < policy.max_batch:
            nxt = self._heap[0][2]
            if (policy.kind == DYNAMIC
                    and audio + nxt.segment.duration_s > policy.target_audio_s):
                break
            heapq.heappop(self._heap)
            entries.append(nxt)
            audio += nxt.segment.duration_s
        self._total_audio_s -= audio
        batch = Batch(batch_id=f"b{self._batch_seq:08d}", entries=entries,
                      formed_at=now, total_audio_s=audio)
        self._batch_seq += 1
        self._batches_formed += 1
        self._segments_batched += len(entries)
        return batch

    def next_trigger_deadline(self, policy: BatchingPolicy) -> float | None:
        """Earliest future instant a time-based trigger can fire for the
        current head. Depth and audio triggers only change on enqueue, so
        between enqueues this deadline is exact."""
        with self._cond:
            if not self._heap:
                return None
            head_time = self._heap[0][0]
            if policy.kind == DYNAMIC:
                return head_time + policy.max_wait_ms
            return head_time + policy.starvation_flush_ms

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def wait_for_work(self, timeout_s: float) -> None:
        """Sleep until the next poll is due, waking early on enqueue or
        close. Callers poll after every wakeup, so a lost notify only costs
        one quantum."""
        with self._cond:
            if self._closed:
                return
            self._cond.wait(timeout=timeout_s)

    def __len__(self) -> int:
        with self._cond:
            return len(self._heap)

    @property
    def closed(self) -> bool:
        with self._cond:
            return self._closed

    def stats(self, now: float) -> SchedulerStats:
        with self._cond:
            oldest = now - self._heap[0][0] if self._heap else 0.0
            mean = (self._segments_batched / self._batches_formed
                    if self._batches_formed else 0.0)
            return SchedulerStats(
                queue_depth=len(self._heap),
                oldest_wait_ms=oldest,
                batches_formed=self._batches_formed,
                mean_batch_size=mean,
                segments_enqueued=self._segments_enqueued,
            )


class SupportsTranscribe(Protocol):
    def transcribe_batch(self, batch: Batch) -> list[TranscriptResult]: ...


def monotonic_ms() -> float:
    return time.monotonic() * 1000.0


class DispatchLoop(threading.Thread):
    """Single-device dispatch: polls the queue at least every
    poll_interval_ms (immediately on enqueue), runs one batch at a time,
    and tags each result with its queue wait before routing.

    On shutdown the queue is closed and every remaining entry is drained
    into final batches, so no accepted segment is ever lost.
    """

    def __init__(self, queue: SegmentQueue, policy: BatchingPolicy,
                 backend: SupportsTranscribe,
                 result_router: Callable[[TranscriptResult], None], *,
                 poll_interval_ms: float = 10.0,
                 clock: Callable[[], float] = monotonic_ms):
        super().__init__(name="dispatch-loop", daemon=True)
        self.queue = queue
        self.policy = policy
        self.backend = backend
        self.result_router = result_router
        self.poll_interval_ms = poll_interval_ms
        self.clock = clock
        self._stop_requested = threading.Event()
        self.batches_dispatched = 0

    def run(self) -> None:
        while not self._stop_requested.is_set() and not self.queue.closed:
            self.queue.wait_for_work(self.poll_interval_ms / 1000.0)
            if self._stop_requested.is_set() or self.queue.closed:
                break
            batch = self.queue.try_form_batch(self.policy, self.clock())
            if batch is not None:
                self._dispatch(batch)
        while True:
            batch = self.queue.force_batch(self.policy, self.clock())
            if batch is None:
                break
            self._dispatch(batch)

    def _dispatch(self, batch: Batch) -> None:
        self.batches_dispatched += 1
        try:
            results = self.backend.transcribe_batch(batch)
            if len(results) != len(batch.entries):
                raise RuntimeError(
                    f"backend returned {len(results)} results for "
                    f"{len(batch.entries)} entries")
        except Exception as exc:  # backend failure fails the whole batch
            results = [
                TranscriptResult(
                    segment_id=e.segment.segment_id,
                    session_id=e.segment.session_id,
                    text="",
                    status="error",
                    message=str(exc),
                ) for e in batch.entries
            ]
        for entry, result in zip(batch.entries, results):
            result.queue_wait_ms = batch.formed_at - entry.enqueue_time
            self.result_router(result)

    def shutdown(self, timeout: float = 30.0) -> None:
        """Close the queue and stop; remaining accepted segments are drained
        into final batches before the thread exits."""
        self.queue.close()
        self._stop_requested.set()
        self.join(timeout=timeout)
