"""Persona registry: the cast of characters that seeds prompts and voices.

Personas live in one TOML file, one ``[[persona]]`` table each, so a dataset
is reproducible from config alone. Names double as speaker markers inside
generated scripts and as voice-cache keys, hence the strict name alphabet.
"""

import random
import re
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ParseError, TooFewPersonas, ValidationError

REQUIRED_STYLE_PHRASE = "very clear audio"

MIN_SPEAKERS = 2
MAX_SPEAKERS = 5

_NAME_RE = re.compile(r"^[A-Za-z0-9]+$")


@dataclass(frozen=True)
class Persona:
    """One synthetic character: dialogue identity plus voice identity."""

    name: str
    characteristics: tuple[str, ...]
    personality: str
    style: str

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise ValidationError(
                self.name or "<empty>",
                "illegal-name",
                "name must be non-empty letters/digits with no whitespace or brackets",
            )


@dataclass(frozen=True)
class PersonaRegistry:
    """Ordered, immutable set of at least two uniquely-named personas."""

    personas: tuple[Persona, ...]

    def __post_init__(self):
        if len(self.personas) < MIN_SPEAKERS:
            raise TooFewPersonas(
                f"registry needs at least {MIN_SPEAKERS} personas, got {len(self.personas)}"
            )
        seen = set()
        for p in self.personas:
            if p.name in seen:
                raise ValidationError(p.name, "duplicate-name", "persona name is not unique")
            seen.add(p.name)

    def __len__(self) -> int:
        return len(self.personas)

    def __iter__(self):
        return iter(self.personas)

    def names(self) -> list[str]:
        return [p.name for p in self.personas]


@dataclass(frozen=True)
class LintFinding:
    code: str
    message: str


def lint_style(persona: Persona) -> list[LintFinding]:
    """Empty iff the style keeps generated audio undistorted-friendly."""
    if REQUIRED_STYLE_PHRASE in persona.style:
        return []
    return [
        LintFinding(
            "missing-clear-audio",
            f"style of {persona.name!r} lacks the exact phrase {REQUIRED_STYLE_PHRASE!r}",
        )
    ]


def load_registry(path) -> PersonaRegistry:
    """Load and validate a persona TOML file.

    Raises ParseError for malformed files and ValidationError naming the
    persona and rule for semantic problems. The ``very clear audio`` phrase
    is enforced at load time; experimental styles can still be linted
    separately via :func:`lint_style`.
    """
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read persona file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"persona file {path} is not valid TOML: {exc}") from exc

    tables = doc.get("persona")
    if not isinstance(tables, list) or not tables:
        raise ParseError(f"persona file {path} defines no [[persona]] tables")

    personas = []
    for i, table in enumerate(tables):
        if not isinstance(table, dict):
            raise ParseError(f"persona entry #{i} is not a table")
        try:
            name = table["name"]
            characteristics = table["characteristics"]
            personality = table["personality"]
            style = table["style"]
        except KeyError as exc:
            raise ParseError(f"persona entry #{i} is missing key {exc}") from exc
        if (
            not isinstance(name, str)
            or not isinstance(personality, str)
            or not isinstance(style, str)
            or not isinstance(characteristics, list)
            or not all(isinstance(c, str) for c in characteristics)
        ):
            raise ParseError(f"persona entry #{i} has a wrongly-typed field")
        persona = Persona(name, tuple(characteristics), personality, style)
        for finding in lint_style(persona):
            raise ValidationError(persona.name, finding.code, finding.message)
        personas.append(persona)

    return PersonaRegistry(tuple(personas))


def sample_participants(registry: PersonaRegistry, rng: random.Random) -> list[Persona]:
    """Draw a conversation roster: size uniform over {2..5}, order randomized.

    Pure in (registry, rng state): the caller owns seeding, so concurrent
    pipelines stay deterministic by handing each conversation its own rng.
    """
    if len(registry) < MIN_SPEAKERS:
        raise TooFewPersonas(f"cannot sample a roster from {len(registry)} personas")
    upper = min(MAX_SPEAKERS, len(registry))
    count = rng.randint(MIN_SPEAKERS, upper)
    return rng.sample(list(registry.personas), count)
