"""Black-box conformance checks for the TTS wire protocol.

Every check takes a service base URL and talks to it purely over HTTP, so
the same module validates any implementation of the protocol: the mock
wire server, a neural bridge, anything else. No project imports here.

Contract checked: status codes (200/400/404/422), WAV validity (16-bit
PCM mono at the requested rate), a 2.0 s reference duration floor, and
byte-identical responses for repeated identical requests.
"""

import io
import json
import wave

import requests

STYLE = (
    "A woman speaks slowly with a very deep voice in a large room, very clear audio."
)
TIMEOUT_S = 300.0
REFERENCE_FLOOR_S = 2.0


def post_reference(base_url, style=STYLE, seed=7, sample_rate=24000, raw_body=None):
    body = (
        raw_body
        if raw_body is not None
        else json.dumps({"style": style, "seed": seed, "sample_rate": sample_rate})
    )
    return requests.post(
        base_url + "/v1/reference",
        data=body,
        headers={"Content-Type": "application/json"},
        timeout=TIMEOUT_S,
    )


def post_speak(base_url, reference_wav, text, sample_rate=24000):
    return requests.post(
        base_url + "/v1/speak",
        files={"reference": ("reference.wav", reference_wav, "audio/wav")},
        data={"text": text, "sample_rate": str(sample_rate)},
        timeout=TIMEOUT_S,
    )


def read_wav_profile(data: bytes) -> dict:
    """Parse WAV bytes; raises if the container is invalid."""
    with wave.open(io.BytesIO(data)) as handle:
        return {
            "channels": handle.getnchannels(),
            "sample_width": handle.getsampwidth(),
            "rate": handle.getframerate(),
            "frames": handle.getnframes(),
            "compression": handle.getcomptype(),
        }


def assert_valid_wav(data: bytes, sample_rate: int, min_duration_s: float = 0.0) -> None:
    profile = read_wav_profile(data)
    assert profile["channels"] == 1, profile
    assert profile["sample_width"] == 2, profile
    assert profile["compression"] == "NONE", profile
    assert profile["rate"] == sample_rate, profile
    duration_s = profile["frames"] / profile["rate"]
    assert duration_s >= min_duration_s, f"{duration_s:.3f}s < {min_duration_s}s"


def _assert_json_error(response, status: int) -> None:
    assert response.status_code == status, (
        f"expected {status}, got {response.status_code}: {response.text[:200]}"
    )
    payload = response.json()
    assert isinstance(payload, dict) and isinstance(payload.get("error"), str), payload


def check_reference_returns_valid_wav(base_url):
    response = post_reference(base_url)
    assert response.status_code == 200, response.text[:200]
    assert response.headers.get("Content-Type", "").startswith("audio/wav")
    assert_valid_wav(response.content, 24000, REFERENCE_FLOOR_S)


def check_reference_floor_across_rates(base_url):
    for rate in (16000, 24000, 48000):
        response = post_reference(base_url, seed=3, sample_rate=rate)
        assert response.status_code == 200, response.text[:200]
        assert_valid_wav(response.content, rate, REFERENCE_FLOOR_S)


def check_reference_repeat_call_identical(base_url):
    first = post_reference(base_url, seed=11)
    second = post_reference(base_url, seed=11)
    assert first.status_code == 200 and second.status_code == 200
    assert first.content == second.content


def check_reference_empty_style_rejected(base_url):
    _assert_json_error(post_reference(base_url, style=""), 422)
    _assert_json_error(post_reference(base_url, style="   \n"), 422)


def check_reference_malformed_body_rejected(base_url):
    _assert_json_error(post_reference(base_url, raw_body="{not json"), 400)
    _assert_json_error(post_reference(base_url, raw_body=json.dumps([1, 2])), 400)
    _assert_json_error(
        post_reference(base_url, raw_body=json.dumps({"style": STYLE, "seed": 7})), 400
    )
    _assert_json_error(
        post_reference(
            base_url,
            raw_body=json.dumps({"style": STYLE, "seed": "seven", "sample_rate": 24000}),
        ),
        400,
    )
    _assert_json_error(post_reference(base_url, sample_rate=12345), 400)


def check_speak_returns_valid_wav(base_url):
    reference = post_reference(base_url, seed=5)
    assert reference.status_code == 200
    response = post_speak(base_url, reference.content, "Hello over the wire.")
    assert response.status_code == 200, response.text[:200]
    assert response.headers.get("Content-Type", "").startswith("audio/wav")
    assert_valid_wav(response.content, 24000)
    assert read_wav_profile(response.content)["frames"] > 0


def check_speak_repeat_call_identical(base_url):
    reference = post_reference(base_url, seed=5).content
    first = post_speak(base_url, reference, "Say this twice, identically.")
    second = post_speak(base_url, reference, "Say this twice, identically.")
    assert first.status_code == 200 and second.status_code == 200
    assert first.content == second.content


def check_speak_empty_text_rejected(base_url):
    reference = post_reference(base_url, seed=5).content
    _assert_json_error(post_speak(base_url, reference, ""), 422)
    _assert_json_error(post_speak(base_url, reference, "  \t "), 422)


def check_speak_malformed_body_rejected(base_url):
    # not multipart at all
    flat = requests.post(
        base_url + "/v1/speak",
        data={"text": "hi", "sample_rate": "24000"},
        timeout=TIMEOUT_S,
    )
    _assert_json_error(flat, 400)
    # multipart, but no reference part
    missing = requests.post(
        base_url + "/v1/speak",
        files={"bogus": ("x.bin", b"12", "application/octet-stream")},
        data={"text": "hi", "sample_rate": "24000"},
        timeout=TIMEOUT_S,
    )
    _assert_json_error(missing, 400)
    _assert_json_error(post_speak(base_url, b"not a wav at all", "hi"), 400)
    reference = post_reference(base_url, seed=5).content
    _assert_json_error(post_speak(base_url, reference, "hi", sample_rate=12345), 400)


def check_unknown_path_rejected(base_url):
    response = requests.post(base_url + "/v1/nothing", data=b"{}", timeout=TIMEOUT_S)
    _assert_json_error(response, 404)
    assert requests.get(base_url + "/v1/reference", timeout=TIMEOUT_S).status_code == 404


ALL_CHECKS = [
    check_reference_returns_valid_wav,
    check_reference_floor_across_rates,
    check_reference_repeat_call_identical,
    check_reference_empty_style_rejected,
    check_reference_malformed_body_rejected,
    check_speak_returns_valid_wav,
    check_speak_repeat_call_identical,
    check_speak_empty_text_rejected,
    check_speak_malformed_body_rejected,
    check_unknown_path_rejected,
]
