"""Two-stage voice synthesis: one reference clip per persona, cloned per turn.

A backend exposes two capabilities behind one interface: describe a voice and
get a reference clip, or hand back that reference plus text and get speech in
the same voice. References are generated once, cached on disk, and reused, so
a persona sounds the same in conversation 3 and conversation 3000.

The mock backend emits a harmonic stack whose fundamental frequency encodes
the voice identity. That makes voice consistency measurable: estimate_f0 can
recover the fundamental from any emitted clip, with no neural model in the
loop.
"""

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
import requests

from .audio import AudioClip, clip_to_wav_bytes, quantize_clip, quantize_samples, wav_bytes_to_clip
from .errors import (
    BackendError,
    DurationTooShort,
    EmptyText,
    MissingProfile,
    SilentInput,
    TooShort,
    TransportError,
    VoiceCollision,
)
from .parsing import ConversationScript
from .personas import PersonaRegistry
from .seeding import stable_hash64, text_hash64

DEFAULT_SAMPLE_RATE = 24000
MIN_REFERENCE_DURATION_S = 2.0  # cloning needs enough material to copy

# Mock voice: three partials at F0, 2F0, 3F0. Amplitudes sum to 0.875 so the
# signal stays inside [-1, 1] under any unit envelope.
_PARTIAL_AMPLITUDES = (0.5, 0.25, 0.125)

_F0_FLOOR_HZ = 80.0
_F0_CEIL_HZ = 320.0

_REFERENCE_DURATION_S = 3.0
_LEAD_SILENCE_S = 0.125
_PER_WORD_S = 0.35
_VOICED_PER_WORD_S = 0.26
_RAMP_S = 0.010


class TtsBackend(Protocol):
    def make_reference(self, style: str, seed: int, sample_rate: int) -> AudioClip: ...

    def speak(self, reference: AudioClip, text: str, sample_rate: int) -> AudioClip: ...


def fingerprint_clip(clip: AudioClip) -> int:
    """64-bit content hash of a clip, stable across write/read round trips.

    Hashes the 16-bit quantized samples rather than the floats, so a clip and
    its WAV-file round trip fingerprint identically.
    """
    return stable_hash64("audio-fp", clip.sample_rate_hz, quantize_samples(clip.samples).tobytes())


def estimate_f0(clip: AudioClip, f_min: float = _F0_FLOOR_HZ, f_max: float = _F0_CEIL_HZ) -> float:
    """Fundamental frequency by autocorrelation, in Hz.

    Looks for autocorrelation peaks at lags corresponding to [f_min, f_max],
    takes the smallest-lag local maximum within 5% of the strongest one
    (periodic signals repeat at every multiple of the true period, and the
    smallest near-maximal lag is the fundamental), then sharpens the lag with
    parabolic interpolation so the result is not quantized to integer lags.
    """
    rate = clip.sample_rate_hz
    lag_min = max(1, math.ceil(rate / f_max))
    lag_max = math.floor(rate / f_min)
    x = clip.samples - clip.samples.mean()
    n = len(x)
    if n < lag_max + 2:
        raise TooShort(f"need at least {lag_max + 2} samples at {rate} Hz, got {n}")

    # Full linear autocorrelation via FFT; only lags up to lag_max+1 are kept.
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(x, size)
    acf = np.fft.irfft(spectrum * np.conj(spectrum), size)[: lag_max + 2]

    window = acf[lag_min : lag_max + 1]
    peak = float(window.max())
    if peak <= 0.0:
        raise SilentInput("no periodicity found; input is silent or aperiodic")

    threshold = 0.95 * peak
    lag = None
    for k in range(lag_min, lag_max + 1):
        if acf[k] >= threshold and acf[k] >= acf[k - 1] and acf[k] >= acf[k + 1]:
            lag = k
            break
    if lag is None:
        lag = lag_min + int(np.argmax(window))

    y0, y1, y2 = float(acf[lag - 1]), float(acf[lag]), float(acf[lag + 1])
    denom = y0 - 2.0 * y1 + y2
    delta = 0.0 if denom >= 0.0 else 0.5 * (y0 - y2) / denom
    delta = min(0.5, max(-0.5, delta))
    return rate / (lag + delta)


def _harmonic_stack(f0: float, n_samples: int, rate: int) -> np.ndarray:
    t = np.arange(n_samples, dtype=np.float64) / rate
    wave = np.zeros(n_samples, dtype=np.float64)
    for k, amplitude in enumerate(_PARTIAL_AMPLITUDES, start=1):
        wave += amplitude * np.sin(2.0 * np.pi * k * f0 * t)
    return wave


class MockTtsBackend:
    """Offline deterministic voices: F0 derived from (style, seed).

    Identity formula: F0 = 100 + ((hash(style) xor seed) mod 200) Hz, so any
    style/seed pair lands in [100, 299] Hz, inside estimate_f0's search band.
    speak() recovers the voice from the reference audio alone, exactly like a
    cloning model would: nothing else is transmitted.
    """

    def __init__(self):
        self.reference_calls = 0
        self.speak_calls = 0

    @staticmethod
    def voice_f0(style: str, seed: int) -> float:
        return float(100 + ((text_hash64(style) ^ seed) % 200))

    def make_reference(self, style: str, seed: int, sample_rate: int) -> AudioClip:
        self.reference_calls += 1
        if not style.strip():
            raise EmptyText("style description is empty")
        f0 = self.voice_f0(style, seed)
        n = round(_REFERENCE_DURATION_S * sample_rate)
        wave = _harmonic_stack(f0, n, sample_rate)
        # 4 Hz amplitude modulation: crude syllable rhythm, and it starts and
        # ends at zero so the clip has no edge clicks.
        t = np.arange(n, dtype=np.float64) / sample_rate
        envelope = 0.5 * (1.0 - np.cos(2.0 * np.pi * 4.0 * t))
        return AudioClip(wave * envelope, sample_rate)

    def speak(self, reference: AudioClip, text: str, sample_rate: int) -> AudioClip:
        self.speak_calls += 1
        if not text.strip():
            raise EmptyText("speech text is empty")
        f0 = estimate_f0(reference)
        words = text.split()
        total_s = _PER_WORD_S * len(words) + 2 * _LEAD_SILENCE_S
        samples = np.zeros(round(total_s * sample_rate), dtype=np.float64)
        ramp_target = round(_RAMP_S * sample_rate)
        for i in range(len(words)):
            start_s = _LEAD_SILENCE_S + _PER_WORD_S * i
            a = round(start_s * sample_rate)
            b = round((start_s + _VOICED_PER_WORD_S) * sample_rate)
            # Word loudness varies with (text, position) so different texts
            # give different waveforms; the fundamental never moves.
            amplitude = 0.4 + 0.15 * (stable_hash64("word-amp", text, i) % 1000) / 999.0
            wave = amplitude * _harmonic_stack(f0, b - a, sample_rate)
            ramp = min(ramp_target, (b - a) // 2)
            if ramp > 0:
                curve = 0.5 * (1.0 - np.cos(np.pi * np.arange(ramp) / ramp))
                wave[:ramp] *= curve
                wave[b - a - ramp :] *= curve[::-1]
            samples[a:b] = wave
        return AudioClip(samples, sample_rate)


class HttpTtsBackend:
    """Client for the TTS wire protocol (reference and speak endpoints).

    503 means the server's job queue is full; it is retried with a linear
    pause, bounded. Any other non-200 status is a hard backend failure.
    """

    def __init__(
        self,
        endpoint: str,
        timeout_s: float = 300.0,
        busy_retries: int = 5,
        busy_wait_s: float = 1.0,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.timeout_s = timeout_s
        self.busy_retries = busy_retries
        self.busy_wait_s = busy_wait_s

    def _post(self, path: str, **kwargs) -> bytes:
        url = self.endpoint + path
        for attempt in range(self.busy_retries + 1):
            try:
                response = requests.post(url, timeout=self.timeout_s, **kwargs)
            except requests.RequestException as exc:
                raise TransportError(f"POST {url} failed: {exc}") from exc
            if response.status_code == 503 and attempt < self.busy_retries:
                time.sleep(self.busy_wait_s * (attempt + 1))
                continue
            if response.status_code != 200:
                raise BackendError(f"HTTP {response.status_code} from {url}: {response.text[:200]}")
            return response.content
        raise BackendError(f"{url} still busy after {self.busy_retries} retries")

    def make_reference(self, style: str, seed: int, sample_rate: int) -> AudioClip:
        body = {"style": style, "seed": seed, "sample_rate": sample_rate}
        return wav_bytes_to_clip(self._post("/v1/reference", json=body))

    def speak(self, reference: AudioClip, text: str, sample_rate: int) -> AudioClip:
        wav = clip_to_wav_bytes(reference)
        return wav_bytes_to_clip(
            self._post(
                "/v1/speak",
                files={"reference": ("reference.wav", wav, "audio/wav")},
                data={"text": text, "sample_rate": str(sample_rate)},
            )
        )


@dataclass(frozen=True)
class VoiceProfile:
    persona_name: str
    reference: AudioClip
    fingerprint: int
    f0_hz: float
    style_hash: int
    seed: int  # the seed the run asked for; cache files are named with it
    effective_seed: int  # what was actually synthesized, after collision bumps


@dataclass(frozen=True)
class RenderedSegment:
    speaker: str
    clip: AudioClip
    turn_index: int

    def __post_init__(self):
        if self.turn_index < 0:
            raise ValueError("turn_index must be >= 0")
        if len(self.clip) == 0:
            raise ValueError("rendered segment must contain audio")


def make_reference(
    style: str,
    seed: int,
    backend: TtsBackend,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> AudioClip:
    """One reference clip, quantized to 16-bit so fingerprints survive disk.

    Quantizing here (rather than at write time) means the in-memory clip and
    its cached WAV are the same signal, byte for byte.
    """
    if not style.strip():
        raise EmptyText("reference style must be non-empty")
    clip = backend.make_reference(style, seed, sample_rate)
    if clip.sample_rate_hz != sample_rate:
        raise BackendError(
            f"backend returned {clip.sample_rate_hz} Hz, requested {sample_rate} Hz"
        )
    if clip.duration_s < MIN_REFERENCE_DURATION_S:
        raise DurationTooShort(
            f"reference is {clip.duration_s:.3f} s; need >= {MIN_REFERENCE_DURATION_S} s"
        )
    return quantize_clip(clip)


def _cache_paths(cache_dir: Path, persona_name: str, style_hash: int, seed: int):
    stem = f"{persona_name}.{style_hash:016x}.{seed}"
    return cache_dir / f"{stem}.wav", cache_dir / f"{stem}.json"


def _load_cached_profile(
    cache_dir: Path, persona_name: str, style_hash: int, seed: int
) -> VoiceProfile | None:
    wav_path, meta_path = _cache_paths(cache_dir, persona_name, style_hash, seed)
    if not (wav_path.exists() and meta_path.exists()):
        return None
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        clip = wav_bytes_to_clip(wav_path.read_bytes())
    except Exception:
        return None  # unreadable cache entry; regenerate
    if fingerprint_clip(clip) != meta.get("fingerprint"):
        return None  # stale or corrupted; regenerate
    return VoiceProfile(
        persona_name=persona_name,
        reference=clip,
        fingerprint=meta["fingerprint"],
        f0_hz=float(meta["f0_hz"]),
        style_hash=style_hash,
        seed=seed,
        effective_seed=int(meta["effective_seed"]),
    )


def _store_profile(cache_dir: Path, profile: VoiceProfile) -> None:
    cache_dir.mkdir(parents=True, exist_ok=True)
    wav_path, meta_path = _cache_paths(
        cache_dir, profile.persona_name, profile.style_hash, profile.seed
    )
    wav_path.write_bytes(clip_to_wav_bytes(profile.reference))
    meta_path.write_text(
        json.dumps(
            {
                "persona": profile.persona_name,
                "fingerprint": profile.fingerprint,
                "f0_hz": profile.f0_hz,
                "effective_seed": profile.effective_seed,
                "sample_rate_hz": profile.reference.sample_rate_hz,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )


MAX_COLLISION_RETRIES = 8
MIN_F0_SEPARATION_HZ = 1.0


def build_voice_profiles(
    registry: PersonaRegistry,
    seed: int,
    backend: TtsBackend,
    cache_dir: str | Path | None = None,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> dict[str, VoiceProfile]:
    """One voice per persona, distinct and reusable across runs.

    Cache layout: `{persona}.{stylehash}.{seed}.wav` plus a JSON sidecar with
    the fingerprint. A warm cache costs zero backend calls. If a freshly made
    voice lands within 1 Hz of an already-assigned one, the seed is bumped and
    the voice regenerated, up to MAX_COLLISION_RETRIES times; the cache file
    keeps the requested seed in its name so later runs still hit it.
    """
    cache = Path(cache_dir) if cache_dir is not None else None
    profiles: dict[str, VoiceProfile] = {}

    def too_close(f0: float) -> str | None:
        for other in profiles.values():
            if abs(other.f0_hz - f0) < MIN_F0_SEPARATION_HZ:
                return other.persona_name
        return None

    for persona in registry:
        style_hash = text_hash64(persona.style)
        if cache is not None:
            cached = _load_cached_profile(cache, persona.name, style_hash, seed)
            if cached is not None:
                clash = too_close(cached.f0_hz)
                if clash is not None:
                    raise VoiceCollision(
                        f"cached voice for {persona.name} is within "
                        f"{MIN_F0_SEPARATION_HZ} Hz of {clash}; clear the voice cache"
                    )
                profiles[persona.name] = cached
                continue

        profile = None
        for bump in range(MAX_COLLISION_RETRIES + 1):
            effective = seed + bump
            try:
                clip = make_reference(persona.style, effective, backend, sample_rate)
            except (BackendError, DurationTooShort, EmptyText, TransportError) as exc:
                raise type(exc)(f"persona {persona.name}: {exc}") from exc
            f0 = estimate_f0(clip)
            if too_close(f0) is None:
                profile = VoiceProfile(
                    persona_name=persona.name,
                    reference=clip,
                    fingerprint=fingerprint_clip(clip),
                    f0_hz=f0,
                    style_hash=style_hash,
                    seed=seed,
                    effective_seed=effective,
                )
                break
        if profile is None:
            raise VoiceCollision(
                f"could not find a distinct voice for {persona.name} in "
                f"{MAX_COLLISION_RETRIES} retries"
            )
        if cache is not None:
            _store_profile(cache, profile)
        profiles[persona.name] = profile
    return profiles


def clone_speech(profile: VoiceProfile, text: str, backend: TtsBackend) -> AudioClip:
    """Render text in the profile's voice; duration scales with word count."""
    if not text.strip():
        raise EmptyText("cannot synthesize empty text")
    rate = profile.reference.sample_rate_hz
    clip = backend.speak(profile.reference, text, rate)
    if clip.sample_rate_hz != rate:
        raise BackendError(f"backend returned {clip.sample_rate_hz} Hz, requested {rate} Hz")
    if len(clip) == 0:
        raise BackendError("backend returned an empty clip")
    return clip


def render_script(
    script: ConversationScript,
    profiles: dict[str, VoiceProfile],
    backend: TtsBackend,
) -> list[RenderedSegment]:
    """One rendered segment per turn, in turn order."""
    for turn in script.turns:
        if turn.speaker not in profiles:
            raise MissingProfile(turn.speaker)
    segments: list[RenderedSegment] = []
    for index, turn in enumerate(script.turns):
        try:
            clip = clone_speech(profiles[turn.speaker], turn.text, backend)
        except (BackendError, TransportError) as exc:
            raise type(exc)(f"turn {index} ({turn.speaker}): {exc}") from exc
        segments.append(RenderedSegment(speaker=turn.speaker, clip=clip, turn_index=index))
    return segments
