"""Backend contract tests: pad_or_trim, the simulated cost model, and the
remote client against a programmable stub service."""

from __future__ import annotations

import base64
import json
import math
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dictamux.backend import (
    RemoteBackend,
    RemoteBackendConfig,
    SimBackend,
    SimBackendConfig,
    encode_batch_request,
    pad_or_trim,
    sim_batch_duration_ms,
    sim_segment_text,
    sim_transcript_for_segment,
)
from dictamux.scheduler import Batch, QueueEntry
from test_scheduler import make_segment


def batch_of(segments, formed_at=0.0, batch_id="b1") -> Batch:
    entries = [QueueEntry(segment=s, enqueue_time=s.endpoint_time)
               for s in segments]
    return Batch(batch_id=batch_id, entries=entries, formed_at=formed_at,
                 total_audio_s=sum(s.duration_s for s in segments))


class TestPadOrTrim:
    def test_empty_input_becomes_all_zero_window(self):
        out = pad_or_trim(np.zeros(0, dtype=np.int16), 30.0, 16000)
        assert len(out) == 480_000
        assert not np.any(out)

    def test_exact_window_unchanged(self):
        samples = np.arange(480_000, dtype=np.int16)
        out = pad_or_trim(samples, 30.0, 16000)
        assert out is samples

    def test_long_input_truncated_at_end(self):
        samples = np.arange(500_000) .astype(np.int16)
        out = pad_or_trim(samples, 30.0, 16000)
        # independent slice for comparison
        assert np.array_equal(out, samples[:480_000])

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(0, 4000), window=st.floats(0.01, 2.0),
           rate=st.sampled_from([8000, 16000]))
    def test_output_length_constant(self, n, window, rate):
        out = pad_or_trim(np.ones(n, dtype=np.int16), window, rate)
        assert len(out) == int(round(window * rate))


class TestSimBackend:
    def test_cost_formula_single_row(self):
        cfg = SimBackendConfig(fixed_overhead_ms=500.0, per_row_ms=120.0)
        assert sim_batch_duration_ms(cfg, 1) == 620.0

    def test_cost_formula_amortizes_across_rows(self):
        cfg = SimBackendConfig(fixed_overhead_ms=500.0, per_row_ms=120.0)
        total = sim_batch_duration_ms(cfg, 8)
        assert total == 1460.0
        assert total / 8 == pytest.approx(182.5)
        assert sim_batch_duration_ms(cfg, 1) == 620.0

    @settings(max_examples=40, deadline=None)
    @given(b=st.integers(1, 63))
    def test_per_segment_cost_strictly_decreasing(self, b):
        cfg = SimBackendConfig()
        here = sim_batch_duration_ms(cfg, b) / b
        nxt = sim_batch_duration_ms(cfg, b + 1) / (b + 1)
        assert nxt < here

    def test_zero_row_batch_unreachable(self):
        with pytest.raises(ValueError):
            sim_batch_duration_ms(SimBackendConfig(), 0)

    def test_results_in_entry_order_with_shared_backend_time(self):
        slept = []
        backend = SimBackend(SimBackendConfig(), sleep=slept.append)
        segs = [make_segment(f"s{i}", session=f"u{i}", duration_s=4.0)
                for i in range(3)]
        results = backend.transcribe_batch(batch_of(segs))
        assert [r.segment_id for r in results] == ["s0", "s1", "s2"]
        assert [r.session_id for r in results] == ["u0", "u1", "u2"]
        assert len({r.backend_time_ms for r in results}) == 1
        assert results[0].backend_time_ms == 860.0
        assert slept == [0.86]

    def test_silent_segment_gets_empty_text(self):
        backend = SimBackend(SimBackendConfig(), sleep=lambda s: None)
        seg = make_segment("quiet", duration_s=2.0)
        seg.samples = np.zeros_like(seg.samples)
        (result,) = backend.transcribe_batch(batch_of([seg]))
        assert result.status == "ok"
        assert result.text == ""

    def test_texts_deterministic_and_paced_to_duration(self):
        cfg = SimBackendConfig(seed=42)
        a = sim_segment_text(cfg, "seg-1", 10.0)
        b = sim_segment_text(cfg, "seg-1", 10.0)
        assert a == b
        assert len(a.split()) == math.ceil(2.5 * 10.0)
        assert sim_segment_text(cfg, "seg-2", 10.0) != a
        assert sim_segment_text(SimBackendConfig(seed=43), "seg-1", 10.0) != a

    def test_identical_audio_transcribes_identically_across_ids(self):
        # segment ids never repeat, but replays of the same audio must
        # produce the same text
        cfg = SimBackendConfig(seed=7)
        first = make_segment("run1:0001", duration_s=4.0)
        second = make_segment("run2:0932", duration_s=4.0)
        assert np.array_equal(first.samples, second.samples)
        assert (sim_transcript_for_segment(cfg, first)
                == sim_transcript_for_segment(cfg, second) != "")
        third = make_segment("run3:0001", duration_s=4.0)
        third.samples = third.samples.copy()
        third.samples[100] += 1
        assert (sim_transcript_for_segment(cfg, third)
                != sim_transcript_for_segment(cfg, first))

    def test_mixed_sample_rates_rejected(self):
        backend = SimBackend(SimBackendConfig(), sleep=lambda s: None)
        segs = [make_segment("a", rate=1000), make_segment("b", rate=2000)]
        with pytest.raises(ValueError):
            backend.transcribe_batch(batch_of(segs))


class _StubHandler(BaseHTTPRequestHandler):
    behavior = "echo"
    attempts = 0
    lock = threading.Lock()
    sleep_s = 0.0

    def do_POST(self):
        cls = type(self)
        with cls.lock:
            cls.attempts += 1
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if cls.sleep_s:
            time.sleep(cls.sleep_s)
        if cls.behavior == "http_error":
            self.send_response(503)
            self.end_headers()
            return
        rows = [{"segment_id": seg["segment_id"],
                 "text": f"echo {seg['segment_id']}"}
                for seg in body["segments"]]
        if cls.behavior == "short_rows":
            rows = rows[:-1]
        payload = json.dumps({"batch_id": body["batch_id"], "results": rows})
        data = payload.encode()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
        except (BrokenPipeError, ConnectionResetError):
            pass  # client gave up (timeout tests)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_service():
    _StubHandler.behavior = "echo"
    _StubHandler.attempts = 0
    _StubHandler.sleep_s = 0.0
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    url = f"http://127.0.0.1:{server.server_address[1]}/transcribe"
    yield url, _StubHandler
    server.shutdown()


class TestRemoteBackend:
    def test_healthy_service_maps_texts_by_segment(self, stub_service):
        url, _ = stub_service
        backend = RemoteBackend(RemoteBackendConfig(endpoint_url=url))
        segs = [make_segment(f"s{i}", session=f"u{i}") for i in range(3)]
        results = backend.transcribe_batch(batch_of(segs))
        backend.close()
        assert [r.text for r in results] == ["echo s0", "echo s1", "echo s2"]
        assert all(not r.is_error for r in results)
        assert all(r.backend_time_ms > 0 for r in results)

    def test_row_count_mismatch_distinct_error_no_retry(self, stub_service):
        url, handler = stub_service
        handler.behavior = "short_rows"
        backend = RemoteBackend(RemoteBackendConfig(endpoint_url=url,
                                                    max_retries=3))
        segs = [make_segment(f"s{i}") for i in range(3)]
        results = backend.transcribe_batch(batch_of(segs))
        backend.close()
        assert len(results) == 3
        assert all(r.is_error for r in results)
        assert all("row count mismatch" in r.message for r in results)
        assert handler.attempts == 1  # protocol bug, not retried

    def test_http_failure_retried_then_all_errors(self, stub_service):
        url, handler = stub_service
        handler.behavior = "http_error"
        backend = RemoteBackend(RemoteBackendConfig(endpoint_url=url,
                                                    max_retries=2))
        segs = [make_segment(f"s{i}") for i in range(3)]
        results = backend.transcribe_batch(batch_of(segs))
        backend.close()
        assert all(r.is_error for r in results)
        assert all("http status 503" in r.message for r in results)
        assert handler.attempts == 3

    def test_timeout_makes_exactly_retries_plus_one_attempts(self, stub_service):
        url, handler = stub_service
        handler.sleep_s = 0.5
        backend = RemoteBackend(RemoteBackendConfig(
            endpoint_url=url, request_timeout_ms=100.0, max_retries=2))
        segs = [make_segment("only")]
        results = backend.transcribe_batch(batch_of(segs))
        backend.close()
        assert len(results) == 1 and results[0].is_error
        assert "transport failure" in results[0].message
        assert handler.attempts == 3

    def test_wire_format_round_trips_pcm16(self):
        seg = make_segment("s0", duration_s=0.01, rate=1000)
        seg.samples = np.array([-1, 0, 257, -32768], dtype=np.int16)
        request = encode_batch_request(batch_of([seg], batch_id="bid"),
                                       {"prompt": "legal", "no_timestamps": True})
        assert request["batch_id"] == "bid"
        assert request["sample_rate_hz"] == 1000
        assert request["decode_options"] == {"prompt": "legal",
                                             "no_timestamps": True}
        raw = base64.b64decode(request["segments"][0]["audio_b64"])
        assert np.array_equal(np.frombuffer(raw, dtype="<i2"), seg.samples)
