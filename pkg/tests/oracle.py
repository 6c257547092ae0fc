"""Independent reference implementations used only as test oracles.

Everything in here is written directly from the documented rules using
plain Python arithmetic, deliberately sharing no code with the package:
scalar VAD rule simulation, hand-simulated batching policy decisions,
brute-force percentile, and a brute-force discrete-event replay of the
multiplexed and sequential pipelines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


# ---------------------------------------------------------------------------
# VAD rule simulation (lengths only, integer sample arithmetic)
# ---------------------------------------------------------------------------

@dataclass
class OracleSegment:
    samples: int
    forced_split: bool
    final_flush: bool
    end_frame: int  # index of the frame whose arrival finalized the segment


def vad_oracle(frames: list[tuple[int, bool]], *, rate: int,
               trigger_frames: int = 3, hangover_ms: int = 300,
               min_s: float = 3.0, max_s: float = 30.0,
               padding_ms: int = 300) -> list[OracleSegment]:
    """Replay the segmentation rules over (n_samples, is_speech) frames.

    Tracks only sample counts, which is enough to predict every emitted
    segment's length, split/flush flags and finalizing frame.
    """
    pad = round(padding_ms * rate / 1000)
    hangover = round(hangover_ms * rate / 1000)
    min_samples = round(min_s * rate)
    max_samples = round(max_s * rate)

    mode = "silence"
    consec = 0
    trigger_len = 0
    ring_len = 0
    pending = 0
    silence_run = 0
    held: int | None = None
    out: list[OracleSegment] = []

    def split_full(frame_i: int) -> None:
        nonlocal pending
        while pending >= max_samples:
            out.append(OracleSegment(max_samples, True, False, frame_i))
            pending -= max_samples

    for i, (n, is_speech) in enumerate(frames):
        if mode == "silence":
            if is_speech:
                consec += 1
                trigger_len += n
                if consec >= trigger_frames:
                    lead = pad if held is None else min(ring_len, pad)
                    pending = (held or 0) + lead + trigger_len
                    held = None
                    ring_len = 0
                    trigger_len = 0
                    consec = 0
                    mode = "speech"
                    split_full(i)
            else:
                ring_len = min(ring_len + trigger_len + n, pad)
                trigger_len = 0
                consec = 0
        else:
            pending += n
            if is_speech:
                mode = "speech"
                silence_run = 0
                split_full(i)
            else:
                silence_run = (silence_run + n if mode == "hangover" else n)
                mode = "hangover"
                if silence_run >= hangover:
                    kept = pending - (silence_run - pad)
                    ring_len = min(silence_run, pad)
                    if kept < min_samples:
                        held = kept
                    else:
                        out.append(OracleSegment(kept, False, False, i))
                    pending = 0
                    silence_run = 0
                    mode = "silence"

    # end-of-stream flush
    last = len(frames) - 1
    if trigger_len:
        lead = pad if held is None else min(ring_len, pad)
        pending += (held or 0) + lead + trigger_len
        held = None
    if pending > 0:
        out.append(OracleSegment(pending, False, True, last))
    elif held is not None:
        out.append(OracleSegment(held, False, True, last))
    return out


# ---------------------------------------------------------------------------
# Batching policy decisions, hand-simulated
# ---------------------------------------------------------------------------

def dynamic_batch_decision(waits_ms: list[float], audio_s: list[float], *,
                           max_batch: int, max_wait_ms: float,
                           target_audio_s: float) -> int:
    """How many queued entries a dynamic policy should take right now.

    ``waits_ms``/``audio_s`` describe the queue oldest-first. Returns 0 for
    no batch.
    """
    if not waits_ms:
        return 0
    fired = (waits_ms[0] >= max_wait_ms
             or sum(audio_s) >= target_audio_s
             or len(waits_ms) >= max_batch)
    if not fired:
        return 0
    take = 1
    total = audio_s[0]
    while take < min(max_batch, len(audio_s)):
        if total + audio_s[take] > target_audio_s:
            break
        total += audio_s[take]
        take += 1
    return take


def continuous_batch_decision(waits_ms: list[float], *, max_batch: int,
                              min_batch: int,
                              starvation_flush_ms: float) -> int:
    if not waits_ms:
        return 0
    if len(waits_ms) >= min_batch or waits_ms[0] >= starvation_flush_ms:
        return min(max_batch, len(waits_ms))
    return 0


# ---------------------------------------------------------------------------
# Percentile by definition
# ---------------------------------------------------------------------------

def percentile_brute(samples: list[float], p: float) -> float:
    """Smallest sample x such that at least p*n samples are <= x."""
    assert samples and 0 < p <= 1
    need = p * len(samples)
    for x in sorted(samples):
        count = sum(1 for s in samples if s <= x)
        if count >= need:
            return x
    return max(samples)


# ---------------------------------------------------------------------------
# Brute-force discrete-event replay of the two serving disciplines.
#
# Inputs are finalized segments (as produced by the real segmenter); the
# queueing, batching, device occupancy and the cost model are re-derived
# here from their definitions without touching the scheduler package.
# ---------------------------------------------------------------------------

@dataclass
class OracleArrival:
    segment_id: str
    session_index: int
    endpoint_ms: float
    duration_s: float


@dataclass
class OracleLatency:
    segment_id: str
    queue_wait_ms: float
    backend_ms: float
    e2e_ms: float
    batch_size: int


def _cost_ms(n_rows: int, *, fixed_overhead_ms: float, per_row_ms: float,
             concurrency_width: int) -> float:
    return fixed_overhead_ms + per_row_ms * math.ceil(
        n_rows / concurrency_width)


def replay_multiplexed(arrivals: list[OracleArrival], *, policy_kind: str,
                       max_batch: int, max_wait_ms: float = 200.0,
                       target_audio_s: float = 120.0, min_batch: int = 2,
                       starvation_flush_ms: float = 1000.0,
                       fixed_overhead_ms: float = 500.0,
                       per_row_ms: float = 120.0,
                       concurrency_width: int = 1) -> dict[str, OracleLatency]:
    """Single-device event replay of the shared-queue serving discipline.

    Event semantics mirror the documented virtual-clock rules: the queue is
    polled after every enqueue, at exact trigger deadlines, and the moment a
    batch completes; at equal timestamps a completion is handled before
    arrivals, and simultaneous arrivals enqueue one at a time in
    (endpoint, segment_id) order.
    """
    pending = sorted(arrivals, key=lambda a: (a.endpoint_ms, a.segment_id))
    queue: list[OracleArrival] = []
    results: dict[str, OracleLatency] = {}
    in_flight: list[tuple[OracleArrival, float, float, int]] | None = None
    done_at = math.inf
    now = 0.0

    def decide(t: float) -> int:
        waits = [t - e.endpoint_ms for e in queue]
        audio = [e.duration_s for e in queue]
        if policy_kind == "dynamic":
            return dynamic_batch_decision(
                waits, audio, max_batch=max_batch, max_wait_ms=max_wait_ms,
                target_audio_s=target_audio_s)
        return continuous_batch_decision(
            waits, max_batch=max_batch, min_batch=min_batch,
            starvation_flush_ms=starvation_flush_ms)

    def deadline() -> float:
        head = queue[0].endpoint_ms
        if policy_kind == "dynamic":
            return head + max_wait_ms
        return head + starvation_flush_ms

    def poll(t: float) -> None:
        nonlocal queue, in_flight, done_at
        if in_flight is not None:
            return
        take = decide(t)
        if take == 0:
            return
        batch, queue = queue[:take], queue[take:]
        dur = _cost_ms(len(batch), fixed_overhead_ms=fixed_overhead_ms,
                       per_row_ms=per_row_ms,
                       concurrency_width=concurrency_width)
        in_flight = [(e, t - e.endpoint_ms, dur, len(batch)) for e in batch]
        done_at = t + dur

    while pending or queue or in_flight is not None:
        candidates = []
        if in_flight is not None:
            candidates.append(done_at)
        elif queue:
            candidates.append(max(now, deadline()))
        if pending:
            candidates.append(pending[0].endpoint_ms)
        now = min(candidates)
        if in_flight is not None and done_at == now:
            for entry, wait, dur, size in in_flight:
                results[entry.segment_id] = OracleLatency(
                    segment_id=entry.segment_id, queue_wait_ms=wait,
                    backend_ms=dur, e2e_ms=now - entry.endpoint_ms,
                    batch_size=size)
            in_flight = None
            done_at = math.inf
            if queue:
                poll(now)
        while pending and pending[0].endpoint_ms == now:
            queue.append(pending.pop(0))
            poll(now)
        if queue and in_flight is None:
            poll(now)
    return results


def replay_sequential(jobs: list[tuple[float, list[OracleArrival]]], *,
                      max_batch: int, fixed_overhead_ms: float = 500.0,
                      per_row_ms: float = 120.0,
                      concurrency_width: int = 1) -> dict[str, OracleLatency]:
    """Whole-session jobs served FIFO by submit time, one at a time; each
    job's segments batched in endpoint order up to max_batch."""
    ordered = sorted(enumerate(jobs), key=lambda kv: (kv[1][0], kv[0]))
    results: dict[str, OracleLatency] = {}
    free_at = 0.0
    for _idx, (submit_ms, segments) in ordered:
        t = max(free_at, submit_ms)
        for i in range(0, len(segments), max_batch):
            chunk = segments[i:i + max_batch]
            dur = _cost_ms(len(chunk), fixed_overhead_ms=fixed_overhead_ms,
                           per_row_ms=per_row_ms,
                           concurrency_width=concurrency_width)
            done = t + dur
            for entry in chunk:
                results[entry.segment_id] = OracleLatency(
                    segment_id=entry.segment_id,
                    queue_wait_ms=t - entry.endpoint_ms,
                    backend_ms=dur,
                    e2e_ms=done - entry.endpoint_ms,
                    batch_size=len(chunk),
                )
            t = done
        free_at = t
    return results
