"""Marker-format conversation parsing, validation, and serialization.

Raw model output is expected to carry exactly one ``[CONV_BEGIN]`` followed
by exactly one ``[CONV_END]``; everything outside that pair is ignored
because models like to add preambles. Between the markers, each non-blank
line must be ``[Name] text`` with a known speaker. Stage directions such as
``(laughs)``, ``\\(squinting\\)`` or ``*nods*`` are stripped from dialogue
before it reaches the TTS stage, since a speech model would read them aloud.
"""

import json
import re
from dataclasses import dataclass
from typing import NamedTuple

from .errors import FormatError

CONV_BEGIN = "[CONV_BEGIN]"
CONV_END = "[CONV_END]"

# Validation error codes, in check order.
MISSING_BEGIN_MARKER = "MissingBeginMarker"
MISSING_END_MARKER = "MissingEndMarker"
MARKERS_OUT_OF_ORDER = "MarkersOutOfOrder"
UNKNOWN_SPEAKER = "UnknownSpeaker"
MALFORMED_TURN_LINE = "MalformedTurnLine"
EMPTY_CONVERSATION = "EmptyConversation"

_TURN_RE = re.compile(r"^\[([A-Za-z0-9]+)\]\s*(.*)$")

# Escaped parentheses must be tried before plain ones so "\(x\)" is consumed
# whole instead of leaving the backslashes behind. All spans are non-greedy
# (non-nested, shortest match).
_STAGE_DIRECTION_RE = re.compile(r"\\\(.*?\\\)|\(.*?\)|\*[^*]*?\*")

_MULTISPACE_RE = re.compile(r" {2,}")


class FormatIssue(NamedTuple):
    code: str
    message: str
    line: int


@dataclass(frozen=True)
class ValidationResult:
    errors: tuple[FormatIssue, ...]

    @property
    def valid(self) -> bool:
        return not self.errors


@dataclass(frozen=True)
class Turn:
    speaker: str
    text: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("turn text must be non-empty")
        if "\n" in self.text:
            raise ValueError("turn text must not contain newlines")
        if CONV_BEGIN in self.text or CONV_END in self.text:
            raise ValueError("turn text must not contain conversation markers")
        if strip_stage_directions(self.text) != self.text:
            raise ValueError("turn text must not contain stage-direction spans")


@dataclass(frozen=True)
class ConversationScript:
    id: str
    roster: tuple[str, ...]
    turns: tuple[Turn, ...]

    def __post_init__(self):
        if not self.id:
            raise ValueError("script id must be non-empty")
        if not self.turns:
            raise ValueError("script must have at least one turn")
        roster = set(self.roster)
        for turn in self.turns:
            if turn.speaker not in roster:
                raise ValueError(f"turn speaker {turn.speaker!r} not in roster")

    def speakers_present(self) -> set[str]:
        return {t.speaker for t in self.turns}

    def silent_participants(self) -> list[str]:
        present = self.speakers_present()
        return [name for name in self.roster if name not in present]


def strip_stage_directions(text: str) -> str:
    """Drop (…), \\(…\\) and *…* spans, collapse doubled spaces, trim."""
    cleaned = _STAGE_DIRECTION_RE.sub("", text)
    return _MULTISPACE_RE.sub(" ", cleaned).strip()


def _normalize(text: str) -> str:
    return _MULTISPACE_RE.sub(" ", text).strip()


def _body_span(raw: str) -> tuple[int, int]:
    """(start, end) offsets of the text strictly between the two markers."""
    begin = raw.index(CONV_BEGIN) + len(CONV_BEGIN)
    end = raw.index(CONV_END)
    return begin, end


def validate_format(raw: str, roster: list[str] | tuple[str, ...]) -> ValidationResult:
    """Check marker structure, then every turn line, then non-emptiness.

    Marker problems short-circuit (the body cannot be located); line-level
    problems accumulate so a report can name every bad line at once.
    """
    n_begin = raw.count(CONV_BEGIN)
    n_end = raw.count(CONV_END)
    if n_begin == 0:
        return ValidationResult((FormatIssue(MISSING_BEGIN_MARKER, "no [CONV_BEGIN] marker", 0),))
    if n_end == 0:
        return ValidationResult((FormatIssue(MISSING_END_MARKER, "no [CONV_END] marker", 0),))
    if n_begin > 1 or n_end > 1:
        return ValidationResult(
            (FormatIssue(MARKERS_OUT_OF_ORDER, "markers must appear exactly once each", 0),)
        )
    body_start, body_end = _body_span(raw)
    if body_end < body_start:
        return ValidationResult(
            (FormatIssue(MARKERS_OUT_OF_ORDER, "[CONV_END] precedes [CONV_BEGIN]", 0),)
        )

    errors: list[FormatIssue] = []
    turns = 0
    line_no = raw.count("\n", 0, body_start) + 1
    for line in raw[body_start:body_end].split("\n"):
        stripped = line.strip()
        if stripped:
            match = _TURN_RE.match(stripped)
            if not match:
                errors.append(
                    FormatIssue(MALFORMED_TURN_LINE, f"not a '[Name] text' line: {stripped[:60]!r}", line_no)
                )
            else:
                speaker, text = match.group(1), match.group(2)
                if speaker not in roster:
                    errors.append(
                        FormatIssue(UNKNOWN_SPEAKER, f"speaker {speaker!r} is not in the roster", line_no)
                    )
                elif not strip_stage_directions(text):
                    errors.append(
                        FormatIssue(MALFORMED_TURN_LINE, "turn is empty once stage directions are removed", line_no)
                    )
                else:
                    turns += 1
        line_no += 1
    if turns == 0 and not errors:
        errors.append(FormatIssue(EMPTY_CONVERSATION, "no turns between the markers", 0))
    return ValidationResult(tuple(errors))


def parse(raw: str, roster: list[str] | tuple[str, ...], id: str) -> ConversationScript:
    """Parse validated raw text into a script; FormatError otherwise."""
    result = validate_format(raw, roster)
    if not result.valid:
        raise FormatError(result)
    body_start, body_end = _body_span(raw)
    turns = []
    for line in raw[body_start:body_end].split("\n"):
        stripped = line.strip()
        if not stripped:
            continue
        match = _TURN_RE.match(stripped)
        speaker, text = match.group(1), match.group(2)
        turns.append(Turn(speaker, _normalize(strip_stage_directions(text))))
    return ConversationScript(id=id, roster=tuple(roster), turns=tuple(turns))


def serialize(script: ConversationScript) -> str:
    """Canonical emitter; its output always re-validates and re-parses."""
    lines = [CONV_BEGIN, ""]
    lines.extend(f"[{turn.speaker}] {turn.text}" for turn in script.turns)
    lines.extend(["", CONV_END])
    return "\n".join(lines) + "\n"


def to_json_records(script: ConversationScript) -> list[str]:
    """One ``{"name": ..., "dialogue": ...}`` JSON object per turn."""
    return [
        json.dumps({"name": turn.speaker, "dialogue": turn.text}, ensure_ascii=False)
        for turn in script.turns
    ]
