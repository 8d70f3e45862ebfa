"""Segment concatenation, diarization ground truth, and dataset file layout.

All timing arithmetic happens in integer samples; seconds only appear at the
last moment, rounded half-up to 2 decimals. That is what keeps the CSV rows
contiguous no matter how many segments a conversation has: the boundary
sample index is shared by one row's end and the next row's start, so both
round to the same string.
"""

import csv
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .audio import AudioClip, write_wav
from .errors import CsvError, EmptySegmentList, InvariantViolation, MixedSampleRates
from .synthesis import RenderedSegment

GROUND_TRUTH_HEADER = ("filename", "start", "end", "speaker")
GROUND_TRUTH_NAME = "ground_truth.csv"
SEGMENTS_DIR_NAME = "segments"

# Rounded 2-decimal timestamps can disagree with exact arithmetic by one
# rounding step on each operand.
_TIMESTAMP_TOLERANCE_S = 0.011


def samples_to_seconds(n_samples: int, rate: int) -> float:
    """Sample count to seconds, rounded half-up to 2 decimals."""
    exact = Decimal(n_samples) / Decimal(rate)
    return float(exact.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def segment_filename(speaker: str, turn_index: int) -> str:
    if turn_index < 0:
        raise ValueError("turn_index must be >= 0")
    return f"{speaker}_{turn_index}.wav"


@dataclass(frozen=True)
class GroundTruthRecord:
    filename: str
    start_s: float
    end_s: float
    speaker: str

    def __post_init__(self):
        if self.start_s < 0:
            raise InvariantViolation(f"{self.filename}: negative start {self.start_s}")
        if self.end_s <= self.start_s:
            raise InvariantViolation(
                f"{self.filename}: end {self.end_s:.2f} not after start {self.start_s:.2f}"
            )

    def as_row(self) -> tuple[str, str, str, str]:
        return (self.filename, f"{self.start_s:.2f}", f"{self.end_s:.2f}", self.speaker)


@dataclass(frozen=True)
class ConversationArtifact:
    conversation_id: str
    wav_path: Path
    records: tuple[GroundTruthRecord, ...]
    duration_s: float


def concatenate(
    segments: list[RenderedSegment],
    gap_s: float,
    filename: str,
) -> tuple[AudioClip, list[GroundTruthRecord]]:
    """Join segments with a fixed silence gap; report each true extent.

    Gaps belong to no speaker, so with gap_s > 0 the records are spaced, not
    contiguous. Record boundaries come from cumulative sample counts.
    """
    if not segments:
        raise EmptySegmentList("cannot concatenate zero segments")
    if gap_s < 0:
        raise ValueError("gap_s must be >= 0")
    rate = segments[0].clip.sample_rate_hz
    for segment in segments:
        if segment.clip.sample_rate_hz != rate:
            raise MixedSampleRates(
                f"segment {segment.turn_index} is {segment.clip.sample_rate_hz} Hz, "
                f"expected {rate} Hz"
            )
    gap_samples = round(gap_s * rate)

    pieces: list[np.ndarray] = []
    records: list[GroundTruthRecord] = []
    cursor = 0
    silence = np.zeros(gap_samples, dtype=np.float64)
    for i, segment in enumerate(segments):
        if i > 0 and gap_samples > 0:
            pieces.append(silence)
            cursor += gap_samples
        start = cursor
        cursor += len(segment.clip)
        pieces.append(segment.clip.samples)
        records.append(
            GroundTruthRecord(
                filename=filename,
                start_s=samples_to_seconds(start, rate),
                end_s=samples_to_seconds(cursor, rate),
                speaker=segment.speaker,
            )
        )
    return AudioClip(np.concatenate(pieces), rate), records


def check_contiguity(records: list[GroundTruthRecord], gap_s: float = 0.0) -> None:
    """Raise InvariantViolation unless records tile each file correctly.

    Records are grouped by filename in order of appearance. With gap_s = 0
    each end must equal the next start exactly (they came from the same
    sample index); with a gap, spacing must match within rounding tolerance.
    """
    groups: dict[str, list[GroundTruthRecord]] = {}
    for record in records:
        groups.setdefault(record.filename, []).append(record)
    for filename, group in groups.items():
        if group[0].start_s != 0.0:
            raise InvariantViolation(f"{filename}: first record starts at {group[0].start_s:.2f}")
        for prev, cur in zip(group, group[1:]):
            spacing = cur.start_s - prev.end_s
            if gap_s == 0.0:
                if spacing != 0.0:
                    raise InvariantViolation(
                        f"{filename}: gap of {spacing:.2f}s between {prev.end_s:.2f} "
                        f"and {cur.start_s:.2f}"
                    )
            elif abs(spacing - gap_s) > _TIMESTAMP_TOLERANCE_S:
                raise InvariantViolation(
                    f"{filename}: spacing {spacing:.3f}s between records, expected {gap_s}s"
                )


def write_ground_truth_csv(
    records: list[GroundTruthRecord],
    path,
    gap_s: float = 0.0,
) -> None:
    """UTF-8 CSV, LF endings, times with exactly 2 decimals."""
    check_contiguity(records, gap_s)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(GROUND_TRUTH_HEADER)
        for record in records:
            writer.writerow(record.as_row())


def read_ground_truth_csv(path) -> list[GroundTruthRecord]:
    with open(path, encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows or tuple(rows[0]) != GROUND_TRUTH_HEADER:
        raise CsvError(f"{path}: missing or wrong header")
    records = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise CsvError(f"{path}:{i}: expected 4 fields, got {len(row)}")
        try:
            records.append(
                GroundTruthRecord(row[0], float(row[1]), float(row[2]), row[3])
            )
        except (ValueError, InvariantViolation) as exc:
            raise CsvError(f"{path}:{i}: {exc}") from exc
    return records


def assemble_conversation(
    conversation_id: str,
    segments: list[RenderedSegment],
    conversation_dir,
    gap_s: float = 0.0,
) -> ConversationArtifact:
    """Write one conversation's directory: segments, full WAV, ground truth.

    Layout under conversation_dir:
        segments/{Speaker}_{i}.wav   one per turn
        {conversation_id}.wav        the concatenated conversation
        ground_truth.csv             who speaks when
    """
    conversation_dir = Path(conversation_dir)
    wav_name = f"{conversation_id}.wav"
    full_clip, records = concatenate(segments, gap_s, wav_name)

    segments_dir = conversation_dir / SEGMENTS_DIR_NAME
    segments_dir.mkdir(parents=True, exist_ok=True)
    for segment in segments:
        write_wav(segment.clip, segments_dir / segment_filename(segment.speaker, segment.turn_index))

    wav_path = conversation_dir / wav_name
    write_wav(full_clip, wav_path)
    write_ground_truth_csv(records, conversation_dir / GROUND_TRUTH_NAME, gap_s)

    duration = samples_to_seconds(len(full_clip), full_clip.sample_rate_hz)
    if abs(records[-1].end_s - duration) > _TIMESTAMP_TOLERANCE_S + gap_s:
        raise InvariantViolation(
            f"{wav_name}: last record ends at {records[-1].end_s:.2f} "
            f"but audio lasts {duration:.2f}"
        )
    return ConversationArtifact(
        conversation_id=conversation_id,
        wav_path=wav_path,
        records=tuple(records),
        duration_s=duration,
    )
