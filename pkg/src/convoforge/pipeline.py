"""End-to-end dataset generation, validation, and reporting.

Determinism contract: with mock backends, the output directory is a pure
function of (persona file, config), independent of worker count and of
scheduling. Three rules make that hold. Per-conversation seeds are derived
from (master seed, index), never from call order. Backends key their own
randomness on request content. And everything the workers write lands inside
the dataset directory except the run report, which carries wall-clock timings
and therefore lives next to the dataset, not in it.

Crash isolation: each conversation is assembled in a staging directory and
renamed into place only when complete, so an interrupted run leaves no
half-written conversation visible.
"""

import json
import os
import random
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .assembler import (
    GROUND_TRUTH_NAME,
    SEGMENTS_DIR_NAME,
    assemble_conversation,
    check_contiguity,
    read_ground_truth_csv,
    samples_to_seconds,
    segment_filename,
    write_ground_truth_csv,
    write_wav,
)
from .audio import read_wav
from .augment import AugmentSpec, apply_augment
from .errors import ConvoforgeError, EmptyManifest, InvariantViolation
from .llm import (
    BenchmarkReport,
    FailureRecord,
    HttpChatBackend,
    LlmBackendConfig,
    MockLlmBackend,
    benchmark,
    generate_validated,
)
from .metrics import (
    DatasetManifest,
    DatasetReport,
    FailureEntry,
    ManifestEntry,
    ManifestSettings,
    dataset_report,
    load_manifest,
    round_half_up,
    save_manifest,
)
from .personas import load_registry, sample_participants
from .prompting import build_prompt
from .seeding import derive_seed
from .synthesis import (
    DEFAULT_SAMPLE_RATE,
    HttpTtsBackend,
    MockTtsBackend,
    build_voice_profiles,
    fingerprint_clip,
    render_script,
)

STAGING_DIR_NAME = ".staging"
VOICE_CACHE_DIR_NAME = ".voice_cache"

COUNT_ATTEMPTS = "attempts"
COUNT_SUCCESSES = "successes"


@dataclass(frozen=True)
class LlmSettings:
    backend: str = "mock"  # "mock" or "http"
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.7
    timeout_s: float = 120.0
    mock_seed: int = 0
    mock_malform_rate: float = 0.0
    mock_latency_s: float = 0.0

    def __post_init__(self):
        if self.backend not in ("mock", "http"):
            raise ValueError(f"unknown LLM backend {self.backend!r}")
        if self.backend == "http" and not self.endpoint:
            raise ValueError("http LLM backend needs an endpoint")


@dataclass(frozen=True)
class TtsSettings:
    backend: str = "mock"  # "mock" or "http"
    endpoint: str = ""

    def __post_init__(self):
        if self.backend not in ("mock", "http"):
            raise ValueError(f"unknown TTS backend {self.backend!r}")
        if self.backend == "http" and not self.endpoint:
            raise ValueError("http TTS backend needs an endpoint")


@dataclass(frozen=True)
class RunConfig:
    personas: str
    out_dir: str
    count: int = 10
    seed: int = 0
    workers: int = 1
    gap_s: float = 0.0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    max_retries: int = 0
    count_mode: str = COUNT_ATTEMPTS
    cache_dir: str = ""  # empty: {out_dir}/.voice_cache
    report_path: str = ""  # empty: {out_dir}.run_report.json, beside the dataset
    llm: LlmSettings = field(default_factory=LlmSettings)
    tts: TtsSettings = field(default_factory=TtsSettings)
    augment: AugmentSpec | None = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.gap_s < 0:
            raise ValueError("gap_s must be >= 0")
        if self.count_mode not in (COUNT_ATTEMPTS, COUNT_SUCCESSES):
            raise ValueError(f"unknown count_mode {self.count_mode!r}")


def make_llm_backend(settings: LlmSettings):
    if settings.backend == "mock":
        return MockLlmBackend(
            seed=settings.mock_seed,
            malform_rate=settings.mock_malform_rate,
            latency_s=settings.mock_latency_s,
        )
    return HttpChatBackend(
        LlmBackendConfig(
            endpoint=settings.endpoint,
            model=settings.model,
            timeout_s=settings.timeout_s,
            temperature=settings.temperature,
        )
    )


def make_tts_backend(settings: TtsSettings):
    if settings.backend == "mock":
        return MockTtsBackend()
    return HttpTtsBackend(settings.endpoint)


@dataclass
class RunReport:
    attempts: int
    successes: int
    failures: list[FailureEntry]
    text_gen_s: float  # cumulative across conversations; overlaps under workers
    tts_s: float
    wall_s: float
    workers: int
    report: DatasetReport | None

    def __post_init__(self):
        if self.successes + len(self.failures) != self.attempts:
            raise InvariantViolation("successes + failures must equal attempts")

    @property
    def compliance_percent(self) -> float:
        return round_half_up(100.0 * self.successes / self.attempts, 1) if self.attempts else 0.0

    def to_dict(self) -> dict:
        return {
            "attempts": self.attempts,
            "successes": self.successes,
            "compliance_percent": self.compliance_percent,
            "failures": [{"conv_id": f.conv_id, "reason": f.reason} for f in self.failures],
            "text_gen_s": round(self.text_gen_s, 3),
            "tts_s": round(self.tts_s, 3),
            "wall_s": round(self.wall_s, 3),
            "workers": self.workers,
            "dataset": self.report.to_dict() if self.report else None,
        }


@dataclass(frozen=True)
class _ConvOutcome:
    index: int
    entry: ManifestEntry | None
    failure: FailureEntry | None
    text_s: float
    tts_s: float


def _process_conversation(index, config, registry, profiles, llm_backend, tts_backend,
                          out_dir: Path, staging: Path) -> _ConvOutcome:
    conv_id = str(index)
    rng = random.Random(derive_seed(config.seed, index))
    roster_personas = sample_participants(registry, rng)
    roster = [p.name for p in roster_personas]
    prompt = build_prompt(roster_personas)

    t0 = time.perf_counter()
    result = None
    try:
        result = generate_validated(
            prompt, roster, llm_backend, max_retries=config.max_retries, conv_id=conv_id
        )
    except ConvoforgeError as exc:
        failure = FailureEntry(conv_id, f"{type(exc).__name__}: {exc}")
        return _ConvOutcome(index, None, failure, time.perf_counter() - t0, 0.0)
    text_s = time.perf_counter() - t0

    if isinstance(result, FailureRecord):
        return _ConvOutcome(
            index, None, FailureEntry(conv_id, result.error_summary()), text_s, 0.0
        )

    t1 = time.perf_counter()
    stage_dir = staging / conv_id
    try:
        segments = render_script(result, profiles, tts_backend)
        artifact = assemble_conversation(conv_id, segments, stage_dir, config.gap_s)
        duration = artifact.duration_s
        if config.augment is not None:
            # Fresh noise per conversation, derived so scheduling cannot
            # change which noise a conversation gets.
            spec = replace(config.augment, seed=derive_seed(config.augment.seed, conv_id))
            wav_path = stage_dir / f"{conv_id}.wav"
            augmented = apply_augment(read_wav(wav_path), spec)
            write_wav(augmented, wav_path)
            duration = samples_to_seconds(len(augmented), augmented.sample_rate_hz)
        os.replace(stage_dir, out_dir / conv_id)
    except ConvoforgeError as exc:
        shutil.rmtree(stage_dir, ignore_errors=True)
        failure = FailureEntry(conv_id, f"{type(exc).__name__}: {exc}")
        return _ConvOutcome(index, None, failure, text_s, time.perf_counter() - t1)
    tts_s = time.perf_counter() - t1

    entry = ManifestEntry(
        conv_id=conv_id,
        wav=f"{conv_id}/{conv_id}.wav",
        csv=f"{conv_id}/{GROUND_TRUTH_NAME}",
        roster=tuple(result.roster),
        turn_count=len(result.turns),
        duration_s=duration,
        success=True,
    )
    return _ConvOutcome(index, entry, None, text_s, tts_s)


def _run_wave(process, indices, workers: int) -> dict[int, _ConvOutcome]:
    if workers == 1:
        return {i: process(i) for i in indices}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {i: pool.submit(process, i) for i in indices}
        return {i: f.result() for i, f in futures.items()}


def run_generate(config: RunConfig) -> RunReport:
    """Generate a dataset directory per the config; return the run report.

    In "attempts" mode, indices 0..count-1 are attempted and failures are
    dropped. In "successes" mode, attempts continue past count until count
    conversations validate (bounded at count*10+100 attempts); the recorded
    attempt range always ends at the last kept success, so the output is
    still worker-count independent.
    """
    wall_start = time.perf_counter()
    registry = load_registry(config.personas)
    out_dir = Path(config.out_dir)
    if out_dir.exists() and any(out_dir.iterdir()):
        raise FileExistsError(f"output directory {out_dir} is not empty")
    out_dir.mkdir(parents=True, exist_ok=True)

    llm_backend = make_llm_backend(config.llm)
    tts_backend = make_tts_backend(config.tts)
    cache_dir = Path(config.cache_dir) if config.cache_dir else out_dir / VOICE_CACHE_DIR_NAME
    profiles = build_voice_profiles(
        registry, config.seed, tts_backend, cache_dir=cache_dir, sample_rate=config.sample_rate
    )

    staging = out_dir / STAGING_DIR_NAME
    staging.mkdir(exist_ok=True)

    def process(index: int) -> _ConvOutcome:
        return _process_conversation(
            index, config, registry, profiles, llm_backend, tts_backend, out_dir, staging
        )

    outcomes: dict[int, _ConvOutcome] = {}
    if config.count_mode == COUNT_ATTEMPTS:
        outcomes = _run_wave(process, range(config.count), config.workers)
    else:
        cap = config.count * 10 + 100
        cursor = 0
        while cursor < cap:
            successes = sum(1 for o in outcomes.values() if o.entry is not None)
            if successes >= config.count:
                break
            wave = range(cursor, min(cursor + config.workers, cap))
            outcomes.update(_run_wave(process, wave, config.workers))
            cursor = wave.stop
        # Trim to the first `count` successes so the attempt record does not
        # depend on how far a wider wave happened to overshoot.
        success_indices = sorted(i for i, o in outcomes.items() if o.entry is not None)
        kept = success_indices[: config.count]
        boundary = kept[-1] if kept else -1
        for index in sorted(outcomes):
            if index > boundary:
                outcome = outcomes.pop(index)
                if outcome.entry is not None:
                    shutil.rmtree(out_dir / outcome.entry.conv_id, ignore_errors=True)

    shutil.rmtree(staging, ignore_errors=True)

    ordered = [outcomes[i] for i in sorted(outcomes)]
    entries = [o.entry for o in ordered if o.entry is not None]
    failures = [o.failure for o in ordered if o.failure is not None]

    manifest = DatasetManifest(
        settings=ManifestSettings(
            gap_s=config.gap_s,
            sample_rate_hz=config.sample_rate,
            augmented=config.augment is not None,
        ),
        entries=entries,
        failures=failures,
    )
    merged = []
    for entry in entries:
        merged.extend(read_ground_truth_csv(out_dir / entry.csv))
    write_ground_truth_csv(merged, out_dir / GROUND_TRUTH_NAME, config.gap_s)
    save_manifest(manifest, out_dir)

    report = dataset_report(manifest, out_dir) if entries else None
    run_report = RunReport(
        attempts=len(ordered),
        successes=len(entries),
        failures=failures,
        text_gen_s=sum(o.text_s for o in ordered),
        tts_s=sum(o.tts_s for o in ordered),
        wall_s=time.perf_counter() - wall_start,
        workers=config.workers,
        report=report,
    )
    report_path = Path(config.report_path) if config.report_path else Path(
        str(out_dir).rstrip("/") + ".run_report.json"
    )
    report_path.write_text(json.dumps(run_report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return run_report


@dataclass
class ValidationSummary:
    checked_conversations: int
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def run_validate(out_dir) -> ValidationSummary:
    """Re-check every on-disk invariant of a generated dataset."""
    root = Path(out_dir)
    violations: list[str] = []
    try:
        manifest = load_manifest(root)
    except (EmptyManifest, ValueError) as exc:
        return ValidationSummary(0, [f"manifest: {exc}"])

    gap = manifest.settings.gap_s
    merged_expected = []
    for entry in manifest.entries:
        wav_path = root / entry.wav
        csv_path = root / entry.csv
        try:
            clip = read_wav(wav_path)
        except (ConvoforgeError, OSError) as exc:
            violations.append(f"{entry.wav}: unreadable ({exc})")
            continue
        if clip.sample_rate_hz != manifest.settings.sample_rate_hz:
            violations.append(
                f"{entry.wav}: sample rate {clip.sample_rate_hz}, "
                f"manifest says {manifest.settings.sample_rate_hz}"
            )
        duration = samples_to_seconds(len(clip), clip.sample_rate_hz)
        if abs(duration - entry.duration_s) > 0.011:
            violations.append(
                f"{entry.wav}: duration {duration:.2f}s, manifest says {entry.duration_s:.2f}s"
            )
        try:
            records = read_ground_truth_csv(csv_path)
        except (ConvoforgeError, OSError) as exc:
            violations.append(f"{entry.csv}: unreadable ({exc})")
            continue
        try:
            check_contiguity(records, gap)
        except InvariantViolation as exc:
            violations.append(f"{entry.csv}: {exc}")
        if len(records) != entry.turn_count:
            violations.append(
                f"{entry.csv}: {len(records)} rows, manifest says {entry.turn_count} turns"
            )
        for row, record in enumerate(records, start=2):
            if record.speaker not in entry.roster:
                violations.append(
                    f"{entry.csv}:{row}: speaker {record.speaker} not in roster"
                )
        if records:
            last_end = records[-1].end_s
            if manifest.settings.augmented:
                if last_end > duration + 0.011:
                    violations.append(
                        f"{entry.csv}: last record ends {last_end:.2f}s after audio end"
                    )
            elif abs(last_end - duration) > 0.011:
                violations.append(
                    f"{entry.csv}: last record ends at {last_end:.2f}s, audio lasts {duration:.2f}s"
                )
        segments_dir = root / entry.conv_id / SEGMENTS_DIR_NAME
        for index, record in enumerate(records):
            segment = segments_dir / segment_filename(record.speaker, index)
            if not segment.exists():
                violations.append(f"{entry.conv_id}: missing segment {segment.name}")
        merged_expected.extend(records)

    merged_path = root / GROUND_TRUTH_NAME
    if merged_path.exists():
        merged_actual = read_ground_truth_csv(merged_path)
        if merged_actual != merged_expected:
            violations.append(
                f"{GROUND_TRUTH_NAME}: merged rows disagree with per-conversation files"
            )
    elif manifest.entries:
        violations.append(f"{GROUND_TRUTH_NAME}: missing")

    cache_dir = root / VOICE_CACHE_DIR_NAME
    if cache_dir.is_dir():
        for meta_path in sorted(cache_dir.glob("*.json")):
            wav_path = meta_path.with_suffix(".wav")
            try:
                meta = json.loads(meta_path.read_text(encoding="utf-8"))
                cached = read_wav(wav_path)
            except (ConvoforgeError, OSError, ValueError) as exc:
                violations.append(f"voice cache {meta_path.name}: unreadable ({exc})")
                continue
            if fingerprint_clip(cached) != meta.get("fingerprint"):
                violations.append(f"voice cache {wav_path.name}: fingerprint mismatch")

    return ValidationSummary(len(manifest.entries), violations)


def run_stats(out_dir) -> DatasetReport:
    root = Path(out_dir)
    return dataset_report(load_manifest(root), root)


def run_bench_llm(settings: LlmSettings, personas_path: str, n: int, seed: int = 0) -> BenchmarkReport:
    registry = load_registry(personas_path)
    return benchmark(make_llm_backend(settings), registry, n, seed)


def run_augment_dataset(in_dir, out_dir, spec: AugmentSpec) -> DatasetManifest:
    """Re-process an existing dataset into a parallel augmented copy.

    Conversation WAVs are augmented; segment files and ground-truth CSVs are
    copied verbatim (the diarization labels still describe who speaks when;
    reverb tails extend past the last label, which the validator tolerates
    for augmented datasets).
    """
    src = Path(in_dir)
    dst = Path(out_dir)
    manifest = load_manifest(src)
    if dst.exists() and any(dst.iterdir()):
        raise FileExistsError(f"output directory {dst} is not empty")
    dst.mkdir(parents=True, exist_ok=True)

    new_entries = []
    for entry in manifest.entries:
        conv_src = src / entry.conv_id
        conv_dst = dst / entry.conv_id
        shutil.copytree(conv_src / SEGMENTS_DIR_NAME, conv_dst / SEGMENTS_DIR_NAME)
        shutil.copyfile(src / entry.csv, dst / entry.csv)
        per_conv = replace(spec, seed=derive_seed(spec.seed, entry.conv_id))
        augmented = apply_augment(read_wav(src / entry.wav), per_conv)
        write_wav(augmented, dst / entry.wav)
        new_entries.append(
            replace(entry, duration_s=samples_to_seconds(len(augmented), augmented.sample_rate_hz))
        )

    if (src / GROUND_TRUTH_NAME).exists():
        shutil.copyfile(src / GROUND_TRUTH_NAME, dst / GROUND_TRUTH_NAME)
    new_manifest = DatasetManifest(
        settings=replace(manifest.settings, augmented=True),
        entries=new_entries,
        failures=list(manifest.failures),
    )
    save_manifest(new_manifest, dst)
    return new_manifest
