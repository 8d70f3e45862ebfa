"""Mono PCM audio clips and their on-disk WAV profile.

Every stage of the pipeline trades in :class:`AudioClip`: a float sample
buffer in [-1, 1] plus a sample rate. Files are written as plain RIFF/WAVE,
16-bit little-endian PCM, mono, with the minimal 44-byte header. Reading
anything else (float encodings, stereo, other bit depths) is an error rather
than a silent conversion.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedWavEncoding

SUPPORTED_SAMPLE_RATES = (16000, 22050, 24000, 44100, 48000)

_PCM_SCALE = 32767  # symmetric: int range [-32767, 32767] maps onto [-1, 1]


@dataclass(frozen=True)
class AudioClip:
    """Mono audio: float64 samples in [-1, 1] at a supported sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise ValueError("clip samples must be one-dimensional (mono)")
        if self.sample_rate_hz not in SUPPORTED_SAMPLE_RATES:
            raise ValueError(
                f"unsupported sample rate {self.sample_rate_hz}; "
                f"expected one of {SUPPORTED_SAMPLE_RATES}"
            )
        if samples.size and (samples.min() < -1.0 or samples.max() > 1.0):
            raise ValueError("clip samples out of range [-1, 1]")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def __len__(self) -> int:
        return len(self.samples)


def quantize_samples(samples: np.ndarray) -> np.ndarray:
    """Float [-1, 1] to int16, rounding half away from zero."""
    x = np.asarray(samples, dtype=np.float64) * _PCM_SCALE
    q = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(q, -_PCM_SCALE, _PCM_SCALE).astype("<i2")


def dequantize_samples(pcm: np.ndarray) -> np.ndarray:
    return pcm.astype(np.float64) / _PCM_SCALE


def quantize_clip(clip: AudioClip) -> AudioClip:
    """One int16 round trip; a second pass is the identity."""
    return AudioClip(dequantize_samples(quantize_samples(clip.samples)), clip.sample_rate_hz)


def clip_to_wav_bytes(clip: AudioClip) -> bytes:
    """Serialize a clip into a canonical 44-byte-header PCM WAV."""
    pcm = quantize_samples(clip.samples).tobytes()
    rate = clip.sample_rate_hz
    header = (
        b"RIFF"
        + (36 + len(pcm)).to_bytes(4, "little")
        + b"WAVE"
        + b"fmt "
        + (16).to_bytes(4, "little")
        + (1).to_bytes(2, "little")  # PCM
        + (1).to_bytes(2, "little")  # mono
        + rate.to_bytes(4, "little")
        + (rate * 2).to_bytes(4, "little")  # byte rate
        + (2).to_bytes(2, "little")  # block align
        + (16).to_bytes(2, "little")  # bits per sample
        + b"data"
        + len(pcm).to_bytes(4, "little")
    )
    return header + pcm


def wav_bytes_to_clip(data: bytes) -> AudioClip:
    """Parse PCM WAV bytes, walking RIFF chunks; rejects non-16-bit-mono-PCM."""
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnsupportedWavEncoding("not a RIFF/WAVE file")
    fmt = None
    pcm = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        chunk_size = int.from_bytes(data[pos + 4:pos + 8], "little")
        body = data[pos + 8:pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise UnsupportedWavEncoding("truncated fmt chunk")
            fmt = {
                "audio_format": int.from_bytes(body[0:2], "little"),
                "channels": int.from_bytes(body[2:4], "little"),
                "sample_rate": int.from_bytes(body[4:8], "little"),
                "bits": int.from_bytes(body[14:16], "little"),
            }
        elif chunk_id == b"data":
            pcm = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned
    if fmt is None or pcm is None:
        raise UnsupportedWavEncoding("missing fmt or data chunk")
    if fmt["audio_format"] != 1:
        raise UnsupportedWavEncoding(f"audio format {fmt['audio_format']} is not PCM")
    if fmt["channels"] != 1:
        raise UnsupportedWavEncoding(f"{fmt['channels']} channels; only mono is supported")
    if fmt["bits"] != 16:
        raise UnsupportedWavEncoding(f"{fmt['bits']}-bit samples; only 16-bit is supported")
    if fmt["sample_rate"] not in SUPPORTED_SAMPLE_RATES:
        raise UnsupportedWavEncoding(f"sample rate {fmt['sample_rate']} outside supported set")
    if len(pcm) % 2:
        raise UnsupportedWavEncoding("odd PCM byte count")
    samples = dequantize_samples(np.frombuffer(pcm, dtype="<i2"))
    return AudioClip(samples, fmt["sample_rate"])


def write_wav(clip: AudioClip, path) -> None:
    with open(path, "wb") as fh:
        fh.write(clip_to_wav_bytes(clip))


def read_wav(path) -> AudioClip:
    with open(path, "rb") as fh:
        return wav_bytes_to_clip(fh.read())
