"""Synthetic multi-speaker conversation audio datasets.

Personas talk via a language model, a two-stage voice pipeline gives each
persona a fixed voice and renders every turn in it, and the assembler
concatenates turns into conversation WAVs with diarization ground truth.
"""

from .audio import AudioClip, read_wav, write_wav
from .assembler import (
    ConversationArtifact,
    GroundTruthRecord,
    assemble_conversation,
    concatenate,
    read_ground_truth_csv,
    segment_filename,
    write_ground_truth_csv,
)
from .augment import AugmentSpec, add_reverb, mix_noise, white_noise
from .errors import ConvoforgeError
from .llm import (
    BenchmarkReport,
    FailureRecord,
    HttpChatBackend,
    LlmBackendConfig,
    MockLlmBackend,
    benchmark,
    generate_raw,
    generate_validated,
)
from .metrics import (
    DatasetManifest,
    DatasetReport,
    dataset_report,
    estimate_snr,
    load_manifest,
    speaker_appearances,
    speaker_count_distribution,
)
from .parsing import (
    ConversationScript,
    Turn,
    parse,
    serialize,
    strip_stage_directions,
    validate_format,
)
from .personas import Persona, PersonaRegistry, load_registry, sample_participants
from .pipeline import (
    LlmSettings,
    RunConfig,
    RunReport,
    TtsSettings,
    run_augment_dataset,
    run_generate,
    run_stats,
    run_validate,
)
from .prompting import PromptText, build_prompt
from .synthesis import (
    HttpTtsBackend,
    MockTtsBackend,
    RenderedSegment,
    VoiceProfile,
    build_voice_profiles,
    clone_speech,
    estimate_f0,
    make_reference,
    render_script,
)

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "AugmentSpec",
    "BenchmarkReport",
    "ConversationArtifact",
    "ConversationScript",
    "ConvoforgeError",
    "DatasetManifest",
    "DatasetReport",
    "FailureRecord",
    "GroundTruthRecord",
    "HttpChatBackend",
    "HttpTtsBackend",
    "LlmBackendConfig",
    "LlmSettings",
    "MockLlmBackend",
    "MockTtsBackend",
    "Persona",
    "PersonaRegistry",
    "PromptText",
    "RenderedSegment",
    "RunConfig",
    "RunReport",
    "TtsSettings",
    "Turn",
    "VoiceProfile",
    "add_reverb",
    "assemble_conversation",
    "benchmark",
    "build_prompt",
    "build_voice_profiles",
    "clone_speech",
    "concatenate",
    "dataset_report",
    "estimate_f0",
    "estimate_snr",
    "generate_raw",
    "generate_validated",
    "load_manifest",
    "load_registry",
    "make_reference",
    "mix_noise",
    "parse",
    "read_ground_truth_csv",
    "read_wav",
    "render_script",
    "run_augment_dataset",
    "run_generate",
    "run_stats",
    "run_validate",
    "sample_participants",
    "segment_filename",
    "serialize",
    "speaker_appearances",
    "speaker_count_distribution",
    "strip_stage_directions",
    "validate_format",
    "white_noise",
    "write_ground_truth_csv",
    "write_wav",
]
