"""HTTP server exposing a TTS backend over the wire protocol.

POST /v1/reference  JSON {style, seed, sample_rate}            -> WAV bytes
POST /v1/speak      multipart: reference (WAV), text, sample_rate -> WAV bytes

Status contract: 400 for malformed or unusable bodies, 404 for unknown
paths, 422 for empty style or text, 200 with audio/wav otherwise. Error
bodies are JSON objects with a single "error" string.

This serves the deterministic mock backend for wire-level testing; the
same protocol is what a real synthesis service must speak.
"""

from __future__ import annotations

import json
import threading
from email.parser import BytesParser
from email.policy import default as _EMAIL_POLICY
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .audio import SUPPORTED_SAMPLE_RATES, clip_to_wav_bytes, wav_bytes_to_clip
from .errors import ConvoforgeError
from .synthesis import MockTtsBackend


def parse_multipart_form(content_type: str, body: bytes) -> dict[str, bytes]:
    """Split a multipart/form-data body into {field name: raw bytes}."""
    message = BytesParser(policy=_EMAIL_POLICY).parsebytes(
        b"Content-Type: " + content_type.encode("latin-1") + b"\r\n\r\n" + body
    )
    if not message.is_multipart():
        raise ValueError("body is not multipart")
    fields: dict[str, bytes] = {}
    for part in message.iter_parts():
        name = part.get_param("name", header="content-disposition")
        if name is not None:
            fields[str(name)] = part.get_payload(decode=True) or b""
    return fields


def _checked_rate(value) -> int:
    # bool is an int subclass; it is never a sample rate.
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"sample_rate must be an integer, got {value!r}")
    if value not in SUPPORTED_SAMPLE_RATES:
        raise ValueError(f"sample rate {value} outside supported set {SUPPORTED_SAMPLE_RATES}")
    return value


class TtsWireHandler(BaseHTTPRequestHandler):
    """Request handler bound to one backend via a subclass attribute."""

    backend: MockTtsBackend  # set by serve_tts

    def log_message(self, fmt, *args):  # no stderr chatter under tests
        pass

    def _reply(self, status: int, payload: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _reply_error(self, status: int, reason: str) -> None:
        self._reply(status, json.dumps({"error": reason}).encode("utf-8"), "application/json")

    def do_GET(self):
        self._reply_error(404, f"no resource at {self.path}")

    def do_POST(self):
        try:
            body = self.rfile.read(int(self.headers.get("Content-Length", "0")))
            if self.path == "/v1/reference":
                self._handle_reference(body)
            elif self.path == "/v1/speak":
                self._handle_speak(body)
            else:
                self._reply_error(404, f"no resource at {self.path}")
        except (BrokenPipeError, ConnectionResetError):
            pass  # client went away; nothing to answer
        except Exception as exc:  # a clean 500 beats a dropped socket
            try:
                self._reply_error(500, f"{type(exc).__name__}: {exc}")
            except OSError:
                pass

    def _handle_reference(self, body: bytes) -> None:
        try:
            payload = json.loads(body)
        except ValueError:
            return self._reply_error(400, "body is not valid JSON")
        if not isinstance(payload, dict):
            return self._reply_error(400, "body must be a JSON object")
        style = payload.get("style")
        seed = payload.get("seed")
        if not isinstance(style, str):
            return self._reply_error(400, "style must be a string")
        if isinstance(seed, bool) or not isinstance(seed, int):
            return self._reply_error(400, "seed must be an integer")
        try:
            rate = _checked_rate(payload.get("sample_rate"))
        except ValueError as exc:
            return self._reply_error(400, str(exc))
        if not style.strip():
            return self._reply_error(422, "style is empty")
        clip = self.backend.make_reference(style, seed, rate)
        self._reply(200, clip_to_wav_bytes(clip), "audio/wav")

    def _handle_speak(self, body: bytes) -> None:
        content_type = self.headers.get("Content-Type", "")
        if not content_type.startswith("multipart/form-data"):
            return self._reply_error(400, "expected a multipart/form-data body")
        try:
            fields = parse_multipart_form(content_type, body)
        except Exception:
            return self._reply_error(400, "unparseable multipart body")
        for required in ("reference", "text", "sample_rate"):
            if required not in fields:
                return self._reply_error(400, f"missing {required} field")
        try:
            rate = _checked_rate(int(fields["sample_rate"].decode("ascii")))
        except (ValueError, UnicodeDecodeError) as exc:
            return self._reply_error(400, str(exc))
        try:
            text = fields["text"].decode("utf-8")
        except UnicodeDecodeError:
            return self._reply_error(400, "text is not valid UTF-8")
        if not text.strip():
            return self._reply_error(422, "text is empty")
        try:
            reference = wav_bytes_to_clip(fields["reference"])
        except ConvoforgeError as exc:
            return self._reply_error(400, f"reference is not usable WAV: {exc}")
        try:
            clip = self.backend.speak(reference, text, rate)
        except ConvoforgeError as exc:
            return self._reply_error(400, f"reference audio unusable: {exc}")
        self._reply(200, clip_to_wav_bytes(clip), "audio/wav")


def serve_tts(backend, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Build a server bound to `backend`; caller starts and stops it."""
    handler = type("BoundTtsWireHandler", (TtsWireHandler,), {"backend": backend})
    return ThreadingHTTPServer((host, port), handler)


def run_in_thread(server: ThreadingHTTPServer) -> threading.Thread:
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return thread
