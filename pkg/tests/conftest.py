"""Shared fixtures: a live uvicorn server wrapper for socket-level tests."""

from __future__ import annotations

import threading
import time

import pytest
import uvicorn

from dictamux.server import DictationServer, ServerConfig, create_app


class LiveServer:
    """DictationServer + uvicorn on an ephemeral port, run in a thread."""

    def __init__(self, config: ServerConfig):
        self.dictation = DictationServer(config)
        self.dictation.start()
        self._uvicorn = uvicorn.Server(uvicorn.Config(
            create_app(self.dictation), host="127.0.0.1", port=0,
            log_level="error"))
        self._thread = threading.Thread(target=self._uvicorn.run, daemon=True)
        self.port: int | None = None

    def start(self) -> "LiveServer":
        self._thread.start()
        deadline = time.time() + 15.0
        while not self._uvicorn.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.01)
        self.port = self._uvicorn.servers[0].sockets[0].getsockname()[1]
        return self

    @property
    def ws_url(self) -> str:
        return f"ws://127.0.0.1:{self.port}/ws"

    @property
    def http_url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def stop(self) -> None:
        self._uvicorn.should_exit = True
        self._thread.join(timeout=10.0)
        self.dictation.stop()


@pytest.fixture
def live_server_factory():
    servers: list[LiveServer] = []

    def make(config: ServerConfig) -> LiveServer:
        server = LiveServer(config)
        servers.append(server)
        return server.start()

    yield make
    for server in servers:
        server.stop()
