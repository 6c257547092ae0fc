#!/usr/bin/env python3
"""Start the dictation server. Equivalent to the dictamux-server command.

Examples:
    python scripts/serve.py --listen 127.0.0.1:8765 --mode multiplexed --backend sim
    python scripts/serve.py --config configs/server-sim.json --console frontend
"""

import sys

from dictamux.cli import server_main

if __name__ == "__main__":
    sys.exit(server_main())
