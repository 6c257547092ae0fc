"""Wall-clock load generation against a live dictation server.

Each virtual user opens one websocket session, streams its frames paced in
real time, and collects transcript messages until the server closes the
session. Latency components come from the server's transcript messages, so
wall and virtual reports measure the same span (segment endpoint to
delivery)."""

from __future__ import annotations

import asyncio
import json
from typing import TYPE_CHECKING

import websockets

from dictamux.loadgen import VirtualUser, generate_user_audio
from dictamux.report import LatencyReport, build_cells, hash_config

if TYPE_CHECKING:
    from dictamux.bench import ScenarioConfig


class WallSessionError(Exception):
    """A live benchmark session ended abnormally."""


async def stream_user_session(url: str, user: VirtualUser, *,
                              paced: bool = True,
                              connect_timeout_s: float = 10.0) -> list[dict]:
    """Run one full dictation session; returns the transcript messages."""
    transcripts: list[dict] = []
    closed = asyncio.Event()
    failure: list[str] = []

    async with websockets.connect(url, open_timeout=connect_timeout_s,
                                  max_size=None) as ws:
        await ws.send(json.dumps({"type": "start", "session_id": user.user_id,
                                  "sample_rate_hz": user.sample_rate_hz}))

        async def receive_loop() -> None:
            async for raw in ws:
                if isinstance(raw, bytes):
                    continue
                message = json.loads(raw)
                kind = message.get("type")
                if kind == "transcript":
                    transcripts.append(message)
                elif kind == "error":
                    failure.append(message.get("message", "unknown error"))
                    closed.set()
                    return
                elif kind == "closed":
                    closed.set()
                    return

        receiver = asyncio.create_task(receive_loop())
        loop = asyncio.get_running_loop()
        interval = user.frame_ms / 1000.0
        next_send = loop.time()
        for k in range(user.n_frames):
            if paced:
                delay = next_send - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                next_send += interval
            await ws.send(user.frame_samples(k).astype("<i2").tobytes())
            if failure:
                break
        await ws.send(json.dumps({"type": "end"}))
        await asyncio.wait_for(closed.wait(), timeout=120.0)
        receiver.cancel()
    if failure:
        raise WallSessionError(f"{user.user_id}: {failure[0]}")
    return transcripts


async def _run_wall_async(cfg: "ScenarioConfig") -> LatencyReport:
    buckets = cfg.duration_buckets_s
    users = [
        (f"u{i:03d}", buckets[i % len(buckets)])
        for i in range(cfg.sessions_per_bucket * len(buckets))
    ]
    todo: asyncio.Queue = asyncio.Queue()
    for item in users:
        todo.put_nowait(item)
    samples: dict[tuple[float, float], list[tuple[float, int]]] = {
        b: [] for b in buckets}

    async def worker() -> None:
        while True:
            try:
                user_id, bucket = todo.get_nowait()
            except asyncio.QueueEmpty:
                return
            user = generate_user_audio(cfg.seed, user_id, bucket,
                                       cfg.speech_silence_duty,
                                       sample_rate_hz=cfg.sample_rate_hz,
                                       frame_ms=cfg.frame_ms)
            transcripts = await stream_user_session(cfg.server_url, user)
            for msg in transcripts:
                # batch size is not on the wire; 0 marks it unknown
                samples[bucket].append((float(msg["e2e_ms"]), 0))

    await asyncio.gather(*(worker() for _ in range(cfg.concurrency)))
    from dictamux.bench import scenario_to_dict
    cells = build_cells(cfg.mode, cfg.concurrency, samples)
    return LatencyReport(mode=cfg.mode, concurrency=cfg.concurrency,
                         clock="wall", seed=cfg.seed,
                         config_hash=hash_config(scenario_to_dict(cfg)),
                         cells=cells)


def run_wall_scenario(cfg: "ScenarioConfig") -> LatencyReport:
    try:
        return asyncio.run(_run_wall_async(cfg))
    except WallSessionError:
        raise
    except Exception as exc:
        raise WallSessionError(str(exc)) from exc
