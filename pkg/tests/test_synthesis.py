"""Voice synthesis: F0 estimation, mock voices, profiles, script rendering."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convoforge.audio import AudioClip, clip_to_wav_bytes, quantize_clip, wav_bytes_to_clip
from convoforge.errors import (
    BackendError,
    DurationTooShort,
    EmptyText,
    MissingProfile,
    SilentInput,
    TooShort,
    VoiceCollision,
)
from convoforge.parsing import ConversationScript, Turn
from convoforge.personas import Persona, PersonaRegistry
from convoforge.seeding import text_hash64
from convoforge.synthesis import (
    MIN_F0_SEPARATION_HZ,
    MockTtsBackend,
    RenderedSegment,
    build_voice_profiles,
    clone_speech,
    estimate_f0,
    fingerprint_clip,
    make_reference,
    render_script,
)

RATE = 24000

# Formula values for the bundled nine personas at seed 42, pinned so voice
# identity cannot drift silently between releases.
_PINNED_F0 = {
    "Alice": 249.0,
    "Ben": 109.0,
    "Cathy": 232.0,
    "Eva": 242.0,
    "David": 196.0,
    "Henry": 225.0,
    "Isabella": 296.0,
    "Grace": 131.0,
    "Frank": 190.0,
}


def sine(f0, duration_s=1.0, rate=RATE, amplitude=0.6):
    t = np.arange(round(duration_s * rate), dtype=np.float64) / rate
    return AudioClip(amplitude * np.sin(2.0 * np.pi * f0 * t), rate)


def oracle_f0(clip, f_min=80.0, f_max=320.0):
    """Reference estimator: direct time-domain autocorrelation, same rule.

    Computes each lag product with a plain dot product instead of FFTs, so it
    shares no numerics with the implementation under test.
    """
    rate = clip.sample_rate_hz
    lag_min = max(1, math.ceil(rate / f_max))
    lag_max = math.floor(rate / f_min)
    x = clip.samples - clip.samples.mean()
    acf = np.array([float(np.dot(x[: len(x) - k], x[k:])) for k in range(lag_max + 2)])
    window = acf[lag_min : lag_max + 1]
    threshold = 0.95 * float(window.max())
    lag = None
    for k in range(lag_min, lag_max + 1):
        if acf[k] >= threshold and acf[k] >= acf[k - 1] and acf[k] >= acf[k + 1]:
            lag = k
            break
    if lag is None:
        lag = lag_min + int(np.argmax(window))
    y0, y1, y2 = acf[lag - 1], acf[lag], acf[lag + 1]
    denom = y0 - 2.0 * y1 + y2
    delta = 0.0 if denom >= 0.0 else 0.5 * (y0 - y2) / denom
    return rate / (lag + min(0.5, max(-0.5, delta)))


# --- estimate_f0 -------------------------------------------------------------


def test_pure_tone_frequency_recovered():
    assert estimate_f0(sine(220.0)) == pytest.approx(220.0, abs=0.05)


@pytest.mark.parametrize("f0", [85.0, 100.0, 137.5, 212.3, 299.0, 310.0])
def test_tone_sweep_accuracy(f0):
    assert estimate_f0(sine(f0, duration_s=0.5)) == pytest.approx(f0, abs=0.5)


def test_matches_independent_oracle_on_tones():
    for f0 in (91.7, 160.0, 233.3, 305.1):
        clip = sine(f0, duration_s=0.4)
        assert estimate_f0(clip) == pytest.approx(oracle_f0(clip), abs=1e-6)


def test_matches_oracle_on_noisy_harmonic_voice():
    reference = MockTtsBackend().make_reference("a low voice", 3, RATE)
    rng = np.random.default_rng(0)
    noisy = AudioClip(
        np.clip(reference.samples * 0.9 + 0.02 * rng.standard_normal(len(reference)), -1, 1),
        RATE,
    )
    assert estimate_f0(noisy) == pytest.approx(oracle_f0(noisy), abs=1e-6)


def test_fundamental_chosen_over_strong_harmonic():
    # Energy mostly in the second harmonic; the period is still 1/f0.
    f0 = 150.0
    t = np.arange(RATE, dtype=np.float64) / RATE
    wave = 0.2 * np.sin(2 * np.pi * f0 * t) + 0.7 * np.sin(2 * np.pi * 2 * f0 * t)
    assert estimate_f0(AudioClip(wave, RATE)) == pytest.approx(f0, abs=0.5)


@settings(max_examples=30)
@given(st.floats(min_value=85.0, max_value=310.0))
def test_interpolation_never_much_worse_than_integer_lag_grid(f0):
    clip = sine(f0, duration_s=0.5)
    estimate = estimate_f0(clip)
    assert abs(estimate - f0) < 0.5
    # When the true lag is nearly integral the grid is already right and
    # interpolation can lose by a few millihertz; it never loses more.
    grid_error = abs(RATE / round(RATE / f0) - f0)
    assert abs(estimate - f0) <= grid_error + 0.05


def test_interpolation_beats_grid_at_half_integer_lag():
    # True lag 182.5 samples, the worst case for the bare integer grid.
    f0 = RATE / 182.5
    estimate = estimate_f0(sine(f0, duration_s=0.5))
    grid_error = abs(RATE / round(RATE / f0) - f0)
    assert grid_error > 0.3
    assert abs(estimate - f0) < grid_error / 4


def test_too_short_input_rejected():
    with pytest.raises(TooShort):
        estimate_f0(AudioClip(np.zeros(250), RATE))


def test_silent_input_rejected():
    with pytest.raises(SilentInput):
        estimate_f0(AudioClip(np.zeros(RATE), RATE))


def test_low_rate_input_supported():
    assert estimate_f0(sine(140.0, rate=16000)) == pytest.approx(140.0, abs=0.5)


# --- fingerprints ------------------------------------------------------------


def test_fingerprint_survives_wav_round_trip():
    clip = quantize_clip(sine(180.0, duration_s=0.3))
    again = wav_bytes_to_clip(clip_to_wav_bytes(clip))
    assert fingerprint_clip(again) == fingerprint_clip(clip)


def test_fingerprint_ignores_sub_quantization_jitter():
    clip = quantize_clip(sine(180.0, duration_s=0.1))
    jittered = AudioClip(clip.samples + 1e-7, RATE)
    assert fingerprint_clip(jittered) == fingerprint_clip(clip)


def test_fingerprint_detects_sample_change():
    clip = quantize_clip(sine(180.0, duration_s=0.1))
    samples = clip.samples.copy()
    samples[100] = min(1.0, samples[100] + 0.01)
    assert fingerprint_clip(AudioClip(samples, RATE)) != fingerprint_clip(clip)


def test_fingerprint_depends_on_rate():
    samples = np.zeros(1000)
    a = fingerprint_clip(AudioClip(samples, 24000))
    b = fingerprint_clip(AudioClip(samples, 16000))
    assert a != b


# --- mock TTS backend --------------------------------------------------------


def test_voice_f0_formula():
    f0 = MockTtsBackend.voice_f0("some style", 7)
    assert f0 == float(100 + ((text_hash64("some style") ^ 7) % 200))
    assert 100.0 <= f0 <= 299.0


def test_reference_has_designed_pitch(registry):
    backend = MockTtsBackend()
    for persona in registry:
        clip = backend.make_reference(persona.style, 42, RATE)
        assert clip.sample_rate_hz == RATE
        assert clip.duration_s == pytest.approx(3.0)
        assert estimate_f0(clip) == pytest.approx(
            backend.voice_f0(persona.style, 42), abs=0.1
        )


def test_pinned_persona_pitches(registry):
    for persona in registry:
        assert MockTtsBackend.voice_f0(persona.style, 42) == _PINNED_F0[persona.name]


def test_reference_envelope_starts_and_ends_silent():
    clip = MockTtsBackend().make_reference("a voice", 1, RATE)
    assert abs(clip.samples[0]) < 1e-9
    assert abs(clip.samples[-1]) < 1e-3


def test_reference_honors_other_rates():
    clip = MockTtsBackend().make_reference("a voice", 1, 16000)
    assert clip.sample_rate_hz == 16000
    assert len(clip) == 48000


def test_speak_duration_scales_with_word_count():
    backend = MockTtsBackend()
    reference = backend.make_reference("a voice", 5, RATE)
    for words in (1, 4, 10):
        text = " ".join(["word"] * words)
        clip = backend.speak(reference, text, RATE)
        assert len(clip) == round((0.35 * words + 0.25) * RATE)


def test_speak_keeps_reference_pitch():
    backend = MockTtsBackend()
    reference = backend.make_reference("a deep voice", 9, RATE)
    clip = backend.speak(reference, "hello out there in the audience", RATE)
    assert estimate_f0(clip) == pytest.approx(estimate_f0(reference), abs=1.0)


def test_speak_gap_samples_are_digital_zero():
    backend = MockTtsBackend()
    reference = backend.make_reference("a voice", 2, RATE)
    clip = backend.speak(reference, "one two", RATE)
    lead = round(0.125 * RATE)
    assert np.all(clip.samples[: lead - 1] == 0.0)
    assert np.all(clip.samples[-(lead - 1):] == 0.0)
    gap_start = round((0.125 + 0.26) * RATE) + 2
    gap_end = round((0.125 + 0.35) * RATE) - 2
    assert np.all(clip.samples[gap_start:gap_end] == 0.0)
    voiced = clip.samples[lead + 10 : lead + 100]
    assert np.any(voiced != 0.0)


def test_different_texts_same_voice():
    backend = MockTtsBackend()
    reference = backend.make_reference("a voice", 3, RATE)
    a = backend.speak(reference, "the weather is lovely today", RATE)
    b = backend.speak(reference, "entirely different words here now", RATE)
    assert fingerprint_clip(a) != fingerprint_clip(b)
    assert estimate_f0(a) == pytest.approx(estimate_f0(b), abs=0.2)


def test_speak_is_deterministic():
    backend = MockTtsBackend()
    reference = backend.make_reference("a voice", 3, RATE)
    a = backend.speak(reference, "say it again", RATE)
    b = backend.speak(reference, "say it again", RATE)
    assert np.array_equal(a.samples, b.samples)


def test_mock_rejects_empty_inputs():
    backend = MockTtsBackend()
    with pytest.raises(EmptyText):
        backend.make_reference("   ", 0, RATE)
    reference = backend.make_reference("a voice", 0, RATE)
    with pytest.raises(EmptyText):
        backend.speak(reference, " \t ", RATE)


# --- make_reference wrapper --------------------------------------------------


class _WrongRateBackend:
    def make_reference(self, style, seed, sample_rate):
        return sine(150.0, duration_s=2.5, rate=16000)

    def speak(self, reference, text, sample_rate):
        return sine(150.0, duration_s=0.5, rate=16000)


class _ShortReferenceBackend:
    def make_reference(self, style, seed, sample_rate):
        return sine(150.0, duration_s=1.0, rate=sample_rate)

    def speak(self, reference, text, sample_rate):
        return sine(150.0, duration_s=0.5, rate=sample_rate)


def test_make_reference_output_is_quantized():
    clip = make_reference("a voice", 4, MockTtsBackend())
    assert np.array_equal(clip.samples, quantize_clip(clip).samples)


def test_make_reference_rejects_blank_style_before_backend():
    backend = MockTtsBackend()
    with pytest.raises(EmptyText):
        make_reference("  ", 0, backend)
    assert backend.reference_calls == 0


def test_make_reference_rejects_rate_mismatch():
    with pytest.raises(BackendError, match="16000"):
        make_reference("a voice", 0, _WrongRateBackend(), sample_rate=24000)


def test_make_reference_rejects_short_clip():
    with pytest.raises(DurationTooShort):
        make_reference("a voice", 0, _ShortReferenceBackend())


# --- voice profiles ----------------------------------------------------------


def _mini_registry(*names_and_styles):
    personas = tuple(
        Persona(
            name=name,
            characteristics=("Calm",),
            personality=f"{name} stays calm.",
            style=style,
        )
        for name, style in names_and_styles
    )
    return PersonaRegistry(personas=personas)


class _SeedToneBackend:
    """Voice pitch depends only on the seed: every persona collides at first."""

    def __init__(self):
        self.reference_calls = 0

    def make_reference(self, style, seed, sample_rate):
        self.reference_calls += 1
        return sine(120.0 + 7.0 * seed, duration_s=2.5, rate=sample_rate)

    def speak(self, reference, text, sample_rate):
        return sine(estimate_f0(reference), duration_s=0.5, rate=sample_rate)


class _ConstantToneBackend:
    def make_reference(self, style, seed, sample_rate):
        return sine(150.0, duration_s=2.5, rate=sample_rate)

    def speak(self, reference, text, sample_rate):
        return sine(150.0, duration_s=0.5, rate=sample_rate)


def test_profiles_distinct_and_pinned(registry):
    profiles = build_voice_profiles(registry, 42, MockTtsBackend())
    assert set(profiles) == set(registry.names())
    fingerprints = [p.fingerprint for p in profiles.values()]
    assert len(set(fingerprints)) == 9
    f0s = sorted(p.f0_hz for p in profiles.values())
    assert all(b - a >= MIN_F0_SEPARATION_HZ for a, b in zip(f0s, f0s[1:]))
    for name, profile in profiles.items():
        assert profile.f0_hz == pytest.approx(_PINNED_F0[name], abs=0.1)
        assert profile.persona_name == name
        assert profile.seed == 42
        assert profile.effective_seed == 42


def test_warm_cache_costs_zero_backend_calls(registry, tmp_path):
    cache = tmp_path / "voices"
    cold = MockTtsBackend()
    first = build_voice_profiles(registry, 42, cold, cache_dir=cache)
    assert cold.reference_calls == 9
    warm = MockTtsBackend()
    second = build_voice_profiles(registry, 42, warm, cache_dir=cache)
    assert warm.reference_calls == 0
    for name in first:
        assert second[name].fingerprint == first[name].fingerprint
        assert second[name].f0_hz == first[name].f0_hz
        assert second[name].effective_seed == first[name].effective_seed


def test_cache_file_naming(registry, tmp_path):
    cache = tmp_path / "voices"
    build_voice_profiles(registry, 42, MockTtsBackend(), cache_dir=cache)
    alice = next(p for p in registry if p.name == "Alice")
    stem = f"Alice.{text_hash64(alice.style):016x}.42"
    assert (cache / f"{stem}.wav").exists()
    meta = json.loads((cache / f"{stem}.json").read_text())
    assert meta["persona"] == "Alice"
    assert meta["sample_rate_hz"] == RATE
    assert meta["effective_seed"] == 42
    assert meta["f0_hz"] == pytest.approx(_PINNED_F0["Alice"], abs=0.1)


def test_corrupt_cache_entry_is_regenerated(registry, tmp_path):
    cache = tmp_path / "voices"
    build_voice_profiles(registry, 42, MockTtsBackend(), cache_dir=cache)
    victim = next(cache.glob("Alice.*.wav"))
    victim.write_bytes(b"not audio")
    backend = MockTtsBackend()
    profiles = build_voice_profiles(registry, 42, backend, cache_dir=cache)
    assert backend.reference_calls == 1
    assert profiles["Alice"].f0_hz == pytest.approx(_PINNED_F0["Alice"], abs=0.1)


def test_stale_fingerprint_is_regenerated(registry, tmp_path):
    cache = tmp_path / "voices"
    build_voice_profiles(registry, 42, MockTtsBackend(), cache_dir=cache)
    sidecar = next(cache.glob("Ben.*.json"))
    meta = json.loads(sidecar.read_text())
    meta["fingerprint"] = meta["fingerprint"] ^ 1
    sidecar.write_text(json.dumps(meta))
    backend = MockTtsBackend()
    build_voice_profiles(registry, 42, backend, cache_dir=cache)
    assert backend.reference_calls == 1


def test_collision_bumps_seed_until_distinct():
    registry = _mini_registry(
        ("Avery", "a calm voice"), ("Blair", "another calm voice")
    )
    backend = _SeedToneBackend()
    profiles = build_voice_profiles(registry, 5, backend, sample_rate=RATE)
    assert profiles["Avery"].effective_seed == 5
    assert profiles["Blair"].effective_seed == 6
    assert profiles["Blair"].seed == 5
    assert abs(profiles["Avery"].f0_hz - profiles["Blair"].f0_hz) >= MIN_F0_SEPARATION_HZ
    assert backend.reference_calls == 3  # Avery once, Blair twice


def test_collision_gives_up_after_retries():
    registry = _mini_registry(("Avery", "voice one"), ("Blair", "voice two"))
    with pytest.raises(VoiceCollision, match="distinct voice"):
        build_voice_profiles(registry, 0, _ConstantToneBackend())


class _StyleMapBackend:
    """Voice pitch looked up by style text; unknown styles share one pitch."""

    def __init__(self, mapping, default_f0):
        self.mapping = dict(mapping)
        self.default_f0 = default_f0

    def make_reference(self, style, seed, sample_rate):
        return sine(self.mapping.get(style, self.default_f0), duration_s=2.5, rate=sample_rate)

    def speak(self, reference, text, sample_rate):
        return sine(estimate_f0(reference), duration_s=0.5, rate=sample_rate)


def test_cached_collision_asks_for_cache_clear(tmp_path):
    cache = tmp_path / "voices"
    seeding_run = _mini_registry(("Blair", "voice two"), ("Casey", "voice three"))
    build_voice_profiles(
        seeding_run,
        0,
        _StyleMapBackend({"voice two": 150.0, "voice three": 220.0}, 150.0),
        cache_dir=cache,
    )
    # A later run adds Avery, whose fresh voice lands on cached Blair's pitch.
    both = _mini_registry(("Avery", "voice one"), ("Blair", "voice two"))
    with pytest.raises(VoiceCollision, match="clear the voice cache"):
        build_voice_profiles(
            both, 0, _StyleMapBackend({}, 150.3), cache_dir=cache
        )


def test_backend_failure_names_the_persona(registry):
    with pytest.raises(BackendError, match="persona Alice"):
        build_voice_profiles(registry, 0, _WrongRateBackend())


# --- clone_speech / render_script --------------------------------------------


@pytest.fixture(scope="module")
def two_profiles(registry):
    return build_voice_profiles(registry, 42, MockTtsBackend())


def test_clone_speech_rejects_empty_text(two_profiles):
    with pytest.raises(EmptyText):
        clone_speech(two_profiles["Alice"], "   ", MockTtsBackend())


def test_clone_speech_rejects_rate_mismatch(two_profiles):
    with pytest.raises(BackendError):
        clone_speech(two_profiles["Alice"], "hello", _WrongRateBackend())


def test_clone_speech_rejects_empty_clip(two_profiles):
    class _EmptyBackend:
        def speak(self, reference, text, sample_rate):
            return AudioClip(np.zeros(0), sample_rate)

    with pytest.raises(BackendError, match="empty"):
        clone_speech(two_profiles["Alice"], "hello", _EmptyBackend())


def test_render_script_order_and_indices(two_profiles):
    script = ConversationScript(
        id="r",
        roster=("Alice", "Ben"),
        turns=(
            Turn("Alice", "Good morning."),
            Turn("Ben", "Morning! Sleep well?"),
            Turn("Alice", "Better than ever."),
        ),
    )
    segments = render_script(script, two_profiles, MockTtsBackend())
    assert [s.speaker for s in segments] == ["Alice", "Ben", "Alice"]
    assert [s.turn_index for s in segments] == [0, 1, 2]
    for segment, turn in zip(segments, script.turns):
        words = len(turn.text.split())
        assert len(segment.clip) == round((0.35 * words + 0.25) * RATE)
    assert estimate_f0(segments[0].clip) == pytest.approx(
        two_profiles["Alice"].f0_hz, abs=1.0
    )
    assert estimate_f0(segments[1].clip) == pytest.approx(
        two_profiles["Ben"].f0_hz, abs=1.0
    )


def test_render_script_checks_profiles_before_synthesis(two_profiles):
    script = ConversationScript(
        id="r",
        roster=("Alice", "Zed"),
        turns=(Turn("Alice", "Hello."), Turn("Zed", "Hi.")),
    )
    backend = MockTtsBackend()
    with pytest.raises(MissingProfile):
        render_script(script, {"Alice": two_profiles["Alice"]}, backend)
    assert backend.speak_calls == 0


def test_render_script_names_failing_turn(two_profiles):
    class _FlakySpeak:
        def __init__(self):
            self.calls = 0

        def speak(self, reference, text, sample_rate):
            self.calls += 1
            if self.calls == 2:
                raise BackendError("synth fault")
            return MockTtsBackend().speak(reference, text, sample_rate)

    script = ConversationScript(
        id="r",
        roster=("Alice", "Ben"),
        turns=(Turn("Alice", "One."), Turn("Ben", "Two."), Turn("Alice", "Three.")),
    )
    with pytest.raises(BackendError, match=r"turn 1 \(Ben\)"):
        render_script(script, two_profiles, _FlakySpeak())


def test_rendered_segment_invariants(two_profiles):
    clip = sine(150.0, duration_s=0.2)
    with pytest.raises(ValueError):
        RenderedSegment(speaker="A", clip=clip, turn_index=-1)
    with pytest.raises(ValueError):
        RenderedSegment(speaker="A", clip=AudioClip(np.zeros(0), RATE), turn_index=0)
