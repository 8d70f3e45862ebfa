"""Exception taxonomy shared across the pipeline stages."""


class ConvoforgeError(Exception):
    """Base class for every error raised by this package."""


# --- persona registry ---

class ParseError(ConvoforgeError):
    """Persona config file could not be parsed."""


class ValidationError(ConvoforgeError):
    """A persona violates a registry rule."""

    def __init__(self, persona: str, rule: str, message: str):
        super().__init__(f"persona {persona!r}: {rule}: {message}")
        self.persona = persona
        self.rule = rule


class TooFewPersonas(ConvoforgeError):
    """Registry holds fewer than two personas."""


# --- prompt building ---

class RosterTooSmall(ConvoforgeError):
    """A conversation roster needs at least two personas."""


# --- network backends (LLM and TTS) ---

class TransportError(ConvoforgeError):
    """Request never produced a response (network failure, timeout)."""


class BackendError(ConvoforgeError):
    """Backend answered, but with an error or an unusable payload."""


# --- script parsing ---

class FormatError(ConvoforgeError):
    """Raw text failed marker-format validation; carries the result."""

    def __init__(self, result):
        codes = ", ".join(issue.code for issue in result.errors)
        super().__init__(f"raw text is not a valid conversation: {codes}")
        self.result = result


# --- voice synthesis ---

class DurationTooShort(ConvoforgeError):
    """Reference clip is shorter than the cloning floor."""


class EmptyText(ConvoforgeError):
    """Cannot synthesize speech for empty text."""


class MissingProfile(ConvoforgeError):
    """A script speaker has no voice profile."""

    def __init__(self, speaker: str):
        super().__init__(f"no voice profile for speaker {speaker!r}")
        self.speaker = speaker


class VoiceCollision(ConvoforgeError):
    """Could not obtain pairwise-distinct reference voices within the retry budget."""


# --- audio assembly ---

class MixedSampleRates(ConvoforgeError):
    """Segments to concatenate do not share one sample rate."""


class EmptySegmentList(ConvoforgeError):
    """Nothing to concatenate."""


class UnsupportedWavEncoding(ConvoforgeError):
    """WAV file is not in the supported 16-bit PCM mono profile."""


class InvariantViolation(ConvoforgeError):
    """Ground-truth records violate a timing invariant."""


# --- augmentation ---

class SilentInput(ConvoforgeError):
    """Signal or noise has zero power; SNR scaling is undefined."""


# --- dataset metrics ---

class EmptyManifest(ConvoforgeError):
    """No dataset entries to aggregate."""


class CsvError(ConvoforgeError):
    """A ground-truth CSV could not be read or understood."""


class TooShort(ConvoforgeError):
    """Clip is too short for the frame-based estimator."""
