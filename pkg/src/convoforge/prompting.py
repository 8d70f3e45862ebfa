"""Few-shot prompt construction for the conversation marker format.

The prompt has three parts: a persona preamble (name, characteristics,
personality; the voice style is TTS-only and never shown to the language
model), a fixed instruction block stating the marker rules, and two worked
examples using the first two roster names so the model imitates the format.
"""

from dataclasses import dataclass

from .errors import RosterTooSmall
from .personas import Persona

CONV_BEGIN = "[CONV_BEGIN]"
CONV_END = "[CONV_END]"

_INSTRUCTIONS = (
    "They are all sitting around a table, having a lively and engaging "
    "conversation. Always place the whole story inside [CONV_BEGIN] and "
    "[CONV_END]. The order of the personas doesn't have to be in sequential "
    "order; it could be random. When referring to each character, please put "
    "their name in square brackets. Follow the format of the following example:"
)

_EXAMPLE_1 = (
    "Example 1:\n"
    "[CONV_BEGIN]\n"
    "\n"
    "[{a}] I believe there's a lot to be discussed.\n"
    "[{b}] I agree!\n"
    "\n"
    "[CONV_END]"
)

_EXAMPLE_2 = (
    "Example 2:\n"
    "[CONV_BEGIN]\n"
    "\n"
    "[{a}] Sometimes, I think about my life being good.\n"
    "[{b}] That's great! I envy you.\n"
    "\n"
    "[CONV_END]"
)


@dataclass(frozen=True)
class PromptText:
    text: str
    roster: tuple[str, ...]


def describe_persona(persona: Persona) -> str:
    """One preamble line: name, characteristics, personality."""
    return f"{persona.name}, {', '.join(persona.characteristics)}, {persona.personality}"


def build_prompt(roster: list[Persona]) -> PromptText:
    """Render the generation prompt for a sampled roster. Deterministic."""
    if len(roster) < 2:
        raise RosterTooSmall(f"prompt needs at least 2 personas, got {len(roster)}")
    names = [p.name for p in roster]
    assert len(set(names)) == len(names), "roster names must be distinct"
    a, b = names[0], names[1]
    parts = [describe_persona(p) for p in roster]
    parts.append(_INSTRUCTIONS)
    parts.append(_EXAMPLE_1.format(a=a, b=b))
    parts.append(_EXAMPLE_2.format(a=a, b=b))
    return PromptText(text="\n".join(parts) + "\n", roster=tuple(names))
