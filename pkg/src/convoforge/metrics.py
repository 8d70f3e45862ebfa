"""Dataset accounting: manifest, exploratory statistics, blind SNR.

Everything here is recomputable from the files on disk. The manifest is an
index, not a cache of derived numbers, so a report built from the manifest
and a report built by rescanning the directory agree by construction.
"""

import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .assembler import read_ground_truth_csv
from .audio import AudioClip, read_wav
from .errors import CsvError, EmptyManifest, InvariantViolation, TooShort

MANIFEST_NAME = "manifest.json"
SNR_CAP_DB = 100.0

_FRAME_WINDOW_S = 0.025
_FRAME_HOP_S = 0.010
_MIN_SNR_INPUT_S = 0.1


def round_half_up(value: float, places: int) -> float:
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(str(value)).quantize(quantum, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ManifestEntry:
    conv_id: str
    wav: str  # path relative to the dataset root
    csv: str
    roster: tuple[str, ...]
    turn_count: int
    duration_s: float
    success: bool = True


@dataclass(frozen=True)
class FailureEntry:
    conv_id: str
    reason: str


@dataclass(frozen=True)
class ManifestSettings:
    gap_s: float = 0.0
    sample_rate_hz: int = 24000
    augmented: bool = False


@dataclass
class DatasetManifest:
    settings: ManifestSettings = field(default_factory=ManifestSettings)
    entries: list[ManifestEntry] = field(default_factory=list)
    failures: list[FailureEntry] = field(default_factory=list)

    def __post_init__(self):
        ids = [e.conv_id for e in self.entries] + [f.conv_id for f in self.failures]
        if len(ids) != len(set(ids)):
            raise InvariantViolation("duplicate conversation ids in manifest")
        for entry in self.entries:
            if entry.success and entry.duration_s <= 0:
                raise InvariantViolation(f"{entry.conv_id}: non-positive duration")

    @property
    def attempts(self) -> int:
        return len(self.entries) + len(self.failures)

    def to_dict(self) -> dict:
        return {
            "settings": {
                "gap_s": self.settings.gap_s,
                "sample_rate_hz": self.settings.sample_rate_hz,
                "augmented": self.settings.augmented,
            },
            "entries": [
                {
                    "conv_id": e.conv_id,
                    "wav": e.wav,
                    "csv": e.csv,
                    "roster": list(e.roster),
                    "turn_count": e.turn_count,
                    "duration_s": e.duration_s,
                    "success": e.success,
                }
                for e in self.entries
            ],
            "failures": [{"conv_id": f.conv_id, "reason": f.reason} for f in self.failures],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetManifest":
        settings = data.get("settings", {})
        return cls(
            settings=ManifestSettings(
                gap_s=float(settings.get("gap_s", 0.0)),
                sample_rate_hz=int(settings.get("sample_rate_hz", 24000)),
                augmented=bool(settings.get("augmented", False)),
            ),
            entries=[
                ManifestEntry(
                    conv_id=e["conv_id"],
                    wav=e["wav"],
                    csv=e["csv"],
                    roster=tuple(e["roster"]),
                    turn_count=int(e["turn_count"]),
                    duration_s=float(e["duration_s"]),
                    success=bool(e.get("success", True)),
                )
                for e in data.get("entries", [])
            ],
            failures=[
                FailureEntry(conv_id=f["conv_id"], reason=f["reason"])
                for f in data.get("failures", [])
            ],
        )


def save_manifest(manifest: DatasetManifest, root) -> Path:
    path = Path(root) / MANIFEST_NAME
    path.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path


def load_manifest(root) -> DatasetManifest:
    path = Path(root) / MANIFEST_NAME
    if not path.exists():
        raise EmptyManifest(f"no {MANIFEST_NAME} under {root}")
    return DatasetManifest.from_dict(json.loads(path.read_text(encoding="utf-8")))


def speaker_count_distribution(manifest: DatasetManifest) -> dict[int, float]:
    """Percent of conversations having k participants, 1-decimal values."""
    if not manifest.entries:
        raise EmptyManifest("no successful conversations to summarize")
    counts: dict[int, int] = {}
    for entry in manifest.entries:
        k = len(entry.roster)
        counts[k] = counts.get(k, 0) + 1
    total = len(manifest.entries)
    return {k: round_half_up(100.0 * counts[k] / total, 1) for k in sorted(counts)}


def speaker_appearances(manifest: DatasetManifest, root) -> dict[str, int]:
    """Spoken turns per persona, counted from the ground-truth CSVs."""
    root = Path(root)
    appearances: dict[str, int] = {}
    for entry in manifest.entries:
        try:
            records = read_ground_truth_csv(root / entry.csv)
        except OSError as exc:
            raise CsvError(f"{entry.csv}: {exc}") from exc
        for record in records:
            appearances[record.speaker] = appearances.get(record.speaker, 0) + 1
    return dict(sorted(appearances.items()))


def _frame_energies(samples: np.ndarray, rate: int) -> np.ndarray:
    window = round(_FRAME_WINDOW_S * rate)
    hop = round(_FRAME_HOP_S * rate)
    n_frames = 1 + (len(samples) - window) // hop
    starts = hop * np.arange(n_frames)
    frames = samples[starts[:, None] + np.arange(window)]
    return np.mean(np.square(frames), axis=1)


def estimate_snr(clip: AudioClip) -> float:
    """Blind SNR in dB from frame-energy statistics, capped at 100 dB.

    The noise floor is the mean energy of the quietest decile of 25 ms
    frames (10 ms hop); the signal level is the mean of frames above the
    20th percentile. Clean synthetic audio has digitally silent gaps, a
    zero floor, and therefore reports the cap.
    """
    if clip.duration_s < _MIN_SNR_INPUT_S:
        raise TooShort(f"need >= {_MIN_SNR_INPUT_S} s of audio, got {clip.duration_s:.3f} s")
    energies = _frame_energies(clip.samples, clip.sample_rate_hz)
    order = np.sort(energies)
    decile = max(1, len(order) // 10)
    p_noise = float(np.mean(order[:decile]))
    threshold = float(np.percentile(energies, 20))
    loud = energies[energies > threshold]
    # A perfectly uniform clip has nothing above its 20th percentile; fall
    # back to the overall mean rather than failing.
    p_signal = float(np.mean(loud)) if len(loud) else float(np.mean(energies))
    if p_noise == 0.0:
        return SNR_CAP_DB
    return min(10.0 * math.log10(p_signal / p_noise), SNR_CAP_DB)


@dataclass(frozen=True)
class DatasetReport:
    conversation_count: int
    attempts: int
    compliance_percent: float
    total_hours: float
    total_turns: int
    speaker_count_distribution: dict[int, float]
    appearance_counts: dict[str, int]
    snr_mean_db: float
    snr_min_db: float
    snr_max_db: float

    def to_dict(self) -> dict:
        return {
            "conversation_count": self.conversation_count,
            "attempts": self.attempts,
            "compliance_percent": self.compliance_percent,
            "total_hours": self.total_hours,
            "total_turns": self.total_turns,
            "speaker_count_distribution": {
                str(k): v for k, v in self.speaker_count_distribution.items()
            },
            "appearance_counts": dict(self.appearance_counts),
            "snr_mean_db": self.snr_mean_db,
            "snr_min_db": self.snr_min_db,
            "snr_max_db": self.snr_max_db,
        }

    def to_table(self) -> str:
        lines = [
            f"conversations        {self.conversation_count}",
            f"attempts             {self.attempts}",
            f"compliance           {self.compliance_percent}%",
            f"total hours          {self.total_hours}",
            f"total turns          {self.total_turns}",
            f"SNR dB               mean {self.snr_mean_db}  "
            f"min {self.snr_min_db}  max {self.snr_max_db}",
            "speakers per conversation:",
        ]
        for k, percent in self.speaker_count_distribution.items():
            lines.append(f"  {k}  {percent}%")
        lines.append("turns per persona:")
        for name, count in self.appearance_counts.items():
            lines.append(f"  {name}  {count}")
        return "\n".join(lines) + "\n"


def dataset_report(manifest: DatasetManifest, root) -> DatasetReport:
    """Aggregate statistics over one generated dataset directory."""
    if manifest.attempts == 0:
        raise EmptyManifest("manifest lists no generation attempts")
    if not manifest.entries:
        raise EmptyManifest("manifest lists no successful conversations")
    root = Path(root)
    appearances = speaker_appearances(manifest, root)
    total_turns = sum(entry.turn_count for entry in manifest.entries)
    if sum(appearances.values()) != total_turns:
        raise InvariantViolation(
            f"ground truth rows ({sum(appearances.values())}) disagree with "
            f"manifest turn counts ({total_turns})"
        )
    snrs = [estimate_snr(read_wav(root / entry.wav)) for entry in manifest.entries]
    return DatasetReport(
        conversation_count=len(manifest.entries),
        attempts=manifest.attempts,
        compliance_percent=round_half_up(100.0 * len(manifest.entries) / manifest.attempts, 1),
        total_hours=round_half_up(sum(e.duration_s for e in manifest.entries) / 3600.0, 2),
        total_turns=total_turns,
        speaker_count_distribution=speaker_count_distribution(manifest),
        appearance_counts=appearances,
        snr_mean_db=round_half_up(sum(snrs) / len(snrs), 2),
        snr_min_db=round_half_up(min(snrs), 2),
        snr_max_db=round_half_up(max(snrs), 2),
    )
