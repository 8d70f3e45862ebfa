"""Synthesis engines behind the wire endpoints.

Two implementations of the same two-method surface:

* ProceduralEngine: deterministic harmonic voices, numpy only, instant.
  Lets the service (and anything speaking the protocol to it) run on
  machines with no model stacks installed.
* NeuralEngine: a description-to-voice model for references and a
  voice-cloning model for speech, loaded lazily on first use.

Engines produce float sample arrays; the server owns WAV framing, the
duration floor, caching, and all HTTP concerns.
"""

from __future__ import annotations

import hashlib
import io
import wave

import numpy as np

SUPPORTED_SAMPLE_RATES = (16000, 22050, 24000, 44100, 48000)
PARTIAL_GAINS = (0.5, 0.25, 0.125)  # fundamental, 2x, 3x


class EngineUnavailable(Exception):
    """The configured engine cannot run here (missing packages or models)."""


def hash64(*parts) -> int:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def encode_wav(samples: np.ndarray, sample_rate: int) -> bytes:
    """float64 [-1, 1] -> 16-bit PCM mono WAV bytes."""
    pcm = np.clip(np.rint(samples * 32767.0), -32768, 32767).astype("<i2")
    buffer = io.BytesIO()
    with wave.open(buffer, "wb") as handle:
        handle.setnchannels(1)
        handle.setsampwidth(2)
        handle.setframerate(sample_rate)
        handle.writeframes(pcm.tobytes())
    return buffer.getvalue()


def decode_wav(data: bytes) -> tuple[np.ndarray, int]:
    """WAV bytes -> (float64 samples, rate). ValueError on anything unusable."""
    try:
        with wave.open(io.BytesIO(data)) as handle:
            if handle.getnchannels() != 1:
                raise ValueError("reference must be mono")
            if handle.getsampwidth() != 2:
                raise ValueError("reference must be 16-bit PCM")
            rate = handle.getframerate()
            frames = handle.readframes(handle.getnframes())
    except (wave.Error, EOFError) as exc:
        raise ValueError(f"not a readable WAV: {exc}") from exc
    samples = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32767.0
    return samples, rate


def _harmonic_stack(f0_hz: float, n: int, sample_rate: int) -> np.ndarray:
    t = np.arange(n, dtype=np.float64) / sample_rate
    wave_sum = np.zeros(n)
    for k, gain in enumerate(PARTIAL_GAINS, start=1):
        wave_sum += gain * np.sin(2.0 * np.pi * k * f0_hz * t)
    return wave_sum


def _edge_ramp(samples: np.ndarray, sample_rate: int, ramp_s: float = 0.01) -> np.ndarray:
    ramp = min(round(ramp_s * sample_rate), len(samples) // 2)
    if ramp > 0:
        curve = 0.5 * (1.0 - np.cos(np.pi * np.arange(ramp) / ramp))
        samples[:ramp] *= curve
        samples[-ramp:] *= curve[::-1]
    return samples


def estimate_pitch(samples: np.ndarray, sample_rate: int) -> float:
    """Autocorrelation pitch in the speech band (80 to 320 Hz).

    Good enough for the steady voiced material both engines deal in; this
    is how the cloning side recovers the voice from a reference clip.
    """
    lag_min = max(1, int(np.ceil(sample_rate / 320.0)))
    lag_max = int(np.floor(sample_rate / 80.0))
    window = samples[: min(len(samples), sample_rate)]  # first second is plenty
    if len(window) < lag_max + 2:
        raise ValueError("reference too short for pitch analysis")
    if not np.any(np.abs(window) > 0):
        raise ValueError("reference is silent")
    window = window - np.mean(window)
    corr = np.correlate(window, window, mode="full")[len(window) - 1 :]
    if corr[0] <= 0:
        raise ValueError("reference has no pitch energy")
    best = lag_min + int(np.argmax(corr[lag_min : lag_max + 1]))
    return sample_rate / best


class ProceduralEngine:
    """Deterministic stand-in voices: a harmonic stack per (style, seed)."""

    REFERENCE_S = 2.5
    LEAD_S = 0.1
    VOICED_PER_WORD_S = 0.22
    WORD_GAP_S = 0.06

    def make_reference(self, style: str, seed: int, sample_rate: int) -> np.ndarray:
        f0 = 90.0 + (hash64("bridge-voice", style, seed) % 221)
        n = round(self.REFERENCE_S * sample_rate)
        samples = _harmonic_stack(f0, n, sample_rate)
        return _edge_ramp(samples, sample_rate)

    def speak(self, reference_wav: bytes, text: str, sample_rate: int) -> np.ndarray:
        reference, reference_rate = decode_wav(reference_wav)
        f0 = estimate_pitch(reference, reference_rate)
        words = text.split()
        step_s = self.VOICED_PER_WORD_S + self.WORD_GAP_S
        total = round((2 * self.LEAD_S + step_s * len(words)) * sample_rate)
        samples = np.zeros(total)
        for i, word in enumerate(words):
            a = round((self.LEAD_S + step_s * i) * sample_rate)
            b = round((self.LEAD_S + step_s * i + self.VOICED_PER_WORD_S) * sample_rate)
            gain = 0.45 + 0.2 * (hash64("bridge-word", word, i) % 1000) / 999.0
            samples[a:b] = _edge_ramp(gain * _harmonic_stack(f0, b - a, sample_rate), sample_rate)
        return samples


class NeuralEngine:
    """Description-to-voice references plus voice-cloning speech.

    Models load on first use and stay resident. Generation is seeded where
    the runtime supports it; the server's response cache covers the rest.
    """

    def __init__(self, reference_model: str, cloning_model: str, device: str = "cpu"):
        self.reference_model = reference_model
        self.cloning_model = cloning_model
        self.device = device
        self._reference_pipe = None
        self._cloning_pipe = None

    # -- lazy loading ------------------------------------------------------

    def _load_reference_pipe(self):
        if self._reference_pipe is None:
            try:
                import torch
                from parler_tts import ParlerTTSForConditionalGeneration
                from transformers import AutoTokenizer
            except ImportError as exc:
                raise EngineUnavailable(
                    f"reference model stack not installed: {exc}"
                ) from exc
            try:
                model = ParlerTTSForConditionalGeneration.from_pretrained(
                    self.reference_model
                ).to(self.device)
                tokenizer = AutoTokenizer.from_pretrained(self.reference_model)
            except Exception as exc:
                raise EngineUnavailable(
                    f"cannot load {self.reference_model}: {exc}"
                ) from exc
            self._reference_pipe = (torch, model, tokenizer)
        return self._reference_pipe

    def _load_cloning_pipe(self):
        if self._cloning_pipe is None:
            try:
                from TTS.api import TTS as CoquiTTS
            except ImportError as exc:
                raise EngineUnavailable(
                    f"cloning model stack not installed: {exc}"
                ) from exc
            try:
                self._cloning_pipe = CoquiTTS(self.cloning_model).to(self.device)
            except Exception as exc:
                raise EngineUnavailable(
                    f"cannot load {self.cloning_model}: {exc}"
                ) from exc
        return self._cloning_pipe

    def warm_up(self) -> None:
        """Load both models now; raises EngineUnavailable if either cannot."""
        self._load_reference_pipe()
        self._load_cloning_pipe()

    # -- synthesis ---------------------------------------------------------

    def make_reference(self, style: str, seed: int, sample_rate: int) -> np.ndarray:
        torch, model, tokenizer = self._load_reference_pipe()
        torch.manual_seed(seed)
        # the description prompt controls the voice; a fixed carrier
        # sentence gives the cloning model clean voiced material
        description = tokenizer(style, return_tensors="pt").to(self.device)
        carrier = tokenizer(
            "The quick brown fox jumps over the lazy dog.", return_tensors="pt"
        ).to(self.device)
        with torch.no_grad():
            audio = model.generate(
                input_ids=description.input_ids,
                prompt_input_ids=carrier.input_ids,
            )
        samples = audio.cpu().numpy().ravel().astype(np.float64)
        return _resample(samples, int(model.config.sampling_rate), sample_rate)

    def speak(self, reference_wav: bytes, text: str, sample_rate: int) -> np.ndarray:
        decode_wav(reference_wav)  # reject garbage before touching the model
        pipe = self._load_cloning_pipe()
        import tempfile

        with tempfile.NamedTemporaryFile(suffix=".wav") as handle:
            handle.write(reference_wav)
            handle.flush()
            chunks = pipe.tts(text=text, speaker_wav=handle.name, language="en")
        samples = np.asarray(chunks, dtype=np.float64).ravel()
        native_rate = int(pipe.synthesizer.output_sample_rate)
        return _resample(samples, native_rate, sample_rate)


def _resample(samples: np.ndarray, from_rate: int, to_rate: int) -> np.ndarray:
    if from_rate == to_rate:
        return samples
    from math import gcd

    from scipy.signal import resample_poly

    factor = gcd(from_rate, to_rate)
    return resample_poly(samples, to_rate // factor, from_rate // factor)


def build_engine(name: str, reference_model: str, cloning_model: str, device: str):
    if name == "procedural":
        return ProceduralEngine()
    if name == "neural":
        return NeuralEngine(reference_model, cloning_model, device)
    raise ValueError(f"unknown engine {name!r}")
