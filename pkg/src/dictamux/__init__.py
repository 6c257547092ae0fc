"""Multi-user dictation serving: VAD segmentation, multiplexed batch ASR,
and a latency benchmark harness."""

__version__ = "0.1.0"
