#!/usr/bin/env python3
"""Serve the deterministic mock TTS backend over the wire protocol.

Gives the HTTP client (and any external consumer of the protocol) a live
endpoint without neural models:

    python scripts/serve_mock_tts.py --port 8095
    convoforge generate --out /tmp/d --count 3 \
        --tts http --tts-endpoint http://127.0.0.1:8095
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from convoforge.synthesis import MockTtsBackend
from convoforge.tts_server import serve_tts


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8095)
    args = parser.parse_args(argv)

    server = serve_tts(MockTtsBackend(), host=args.host, port=args.port)
    host, port = server.server_address
    print(f"mock TTS wire server on http://{host}:{port} (ctrl-c to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
