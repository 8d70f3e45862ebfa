"""Noise mixing at a target SNR, and synthetic reverberation.

Both operations know the true signal/noise decomposition at mix time, so the
scaling is exact; the blind estimator in the metrics module is the one that
has to work without that knowledge.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .audio import AudioClip, read_wav
from .errors import MixedSampleRates, SilentInput

MAX_RT60_S = 3.0  # beyond cathedral scale; anything longer is a config mistake
_IR_DECAY_RATE = 6.91  # ln(1000): amplitude falls 60 dB over one rt60


@dataclass(frozen=True)
class AugmentSpec:
    """What to do to a finished conversation: noise, reverb, or both."""

    noise: str = "white"  # "white", "none" (reverb only), or a path to a WAV file
    target_snr_db: float = 20.0
    rt60_s: float = 0.0  # 0 disables reverb
    seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.target_snr_db):
            raise ValueError("target_snr_db must be finite")
        if not 0.0 <= self.rt60_s <= MAX_RT60_S:
            raise ValueError(f"rt60_s must be in [0, {MAX_RT60_S}]")


def white_noise(n_samples: int, sample_rate: int, seed: int) -> AudioClip:
    """Seeded Gaussian noise, scaled just inside [-1, 1]."""
    rng = np.random.default_rng(seed)
    samples = rng.standard_normal(n_samples)
    samples *= 0.99 / np.max(np.abs(samples))
    return AudioClip(samples, sample_rate)


def _loop_to_length(noise: np.ndarray, n: int) -> np.ndarray:
    if len(noise) >= n:
        return noise[:n]
    reps = -(-n // len(noise))
    return np.tile(noise, reps)[:n]


def mix_noise(clip: AudioClip, noise: AudioClip, target_snr_db: float) -> AudioClip:
    """clip + g·noise with g chosen so mean powers sit at the target ratio.

    If the sum would clip, both components are scaled down together, which
    preserves the ratio. Noise shorter than the clip is looped.
    """
    if clip.sample_rate_hz != noise.sample_rate_hz:
        raise MixedSampleRates(
            f"clip is {clip.sample_rate_hz} Hz but noise is {noise.sample_rate_hz} Hz"
        )
    if not math.isfinite(target_snr_db):
        raise ValueError("target_snr_db must be finite")
    noise_samples = _loop_to_length(noise.samples, len(clip))
    p_signal = float(np.mean(np.square(clip.samples)))
    p_noise = float(np.mean(np.square(noise_samples)))
    if p_signal == 0.0:
        raise SilentInput("signal power is zero")
    if p_noise == 0.0:
        raise SilentInput("noise power is zero")
    gain = math.sqrt(p_signal / (p_noise * 10.0 ** (target_snr_db / 10.0)))
    mixed = clip.samples + gain * noise_samples
    peak = float(np.max(np.abs(mixed)))
    if peak > 1.0:
        mixed /= peak
    return AudioClip(mixed, clip.sample_rate_hz)


def make_impulse_response(rt60_s: float, sample_rate: int, seed: int) -> np.ndarray:
    """Unit direct tap followed by exponentially decaying white reflections."""
    if rt60_s <= 0:
        raise ValueError("rt60_s must be > 0")
    n = round(rt60_s * sample_rate)
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=np.float64) / sample_rate
    ir = rng.standard_normal(n) * np.exp(-_IR_DECAY_RATE * t / rt60_s)
    ir[0] = 1.0
    return ir


def add_reverb(clip: AudioClip, rt60_s: float, seed: int) -> AudioClip:
    """Convolve with a synthetic room response; output grows by the rt60 tail."""
    if not 0.0 < rt60_s <= MAX_RT60_S:
        raise ValueError(f"rt60_s must be in (0, {MAX_RT60_S}]")
    ir = make_impulse_response(rt60_s, clip.sample_rate_hz, seed)
    wet = fftconvolve(clip.samples, ir)
    peak = float(np.max(np.abs(wet)))
    if peak > 1.0:
        wet /= peak
    return AudioClip(wet, clip.sample_rate_hz)


def apply_augment(clip: AudioClip, spec: AugmentSpec, noise: AudioClip | None = None) -> AudioClip:
    """Noise first, then reverb, following whichever AugmentSpec fields are enabled.

    noise overrides spec.noise when provided; otherwise "white" is generated
    from spec.seed, "none" skips mixing, and any other value is read as a
    WAV path.
    """
    out = clip
    if spec.noise != "none":
        if noise is None:
            if spec.noise == "white":
                noise = white_noise(len(clip), clip.sample_rate_hz, spec.seed)
            else:
                noise = read_wav(spec.noise)
        out = mix_noise(out, noise, spec.target_snr_db)
    if spec.rt60_s > 0:
        out = add_reverb(out, spec.rt60_s, spec.seed + 1)
    return out
