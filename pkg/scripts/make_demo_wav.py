#!/usr/bin/env python3
"""Generate the bundled demo WAV used by the web console's replay mode:
a few seconds of noise-speech with pauses, 16 kHz mono PCM16."""

import argparse
import wave

from dictamux.loadgen import generate_user_audio


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="frontend/assets/sample.wav")
    parser.add_argument("--seed", type=int, default=11)
    args = parser.parse_args()

    user = generate_user_audio(args.seed, "demo", (10.0, 12.0), 0.65)
    with wave.open(args.out, "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(user.sample_rate_hz)
        wav.writeframes(user.samples.astype("<i2").tobytes())
    print(f"wrote {args.out}: {user.total_ms / 1000:.1f}s at "
          f"{user.sample_rate_hz} Hz")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
