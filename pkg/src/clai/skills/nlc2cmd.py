"""Natural-language to shell command translation via a keyword-and-slot grammar.

A template matches when all keywords of one of its intent patterns survive
tokenization of the input. Slots are then filled from the raw token stream:

* archive    - token ending in one of the template's archive suffixes
* file       - token containing "." or "/" (that is not the pattern or a flag)
* pattern    - quoted span, else the token after "containing"/"matching"
* directory  - token after "in"/"into"/"directory"/"folder"

Translation confidence is 0.9 with every slot filled from the input, 0.5 when
an optional slot fell back to its default. A missing required slot means the
template does not apply at all.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..events import Action, ActionSequence, Phase, TerminalState
from ..retrieval import tokenize
from ..runtime import Skill

CONFIDENCE_FULL = 0.9
CONFIDENCE_DEFAULTED = 0.5

_PUNCT = "?!.,;:"
_QUOTED_RE = re.compile(r"""['"]([^'"]+)['"]""")
_DIRECTORY_ANCHORS = ("in", "into", "directory", "folder")


@dataclass(frozen=True)
class SlotSpec:
    name: str
    kind: str  # file | directory | pattern | archive
    required: bool = True
    suffixes: tuple[str, ...] = ()
    default: str | None = None


@dataclass(frozen=True)
class CommandTemplate:
    name: str
    utility: str
    intent_patterns: tuple[tuple[str, ...], ...]
    slots: tuple[SlotSpec, ...]
    command: str

    def __post_init__(self) -> None:
        declared = {s.name for s in self.slots}
        referenced = set(re.findall(r"{(\w+)}", self.command))
        if not referenced <= declared:
            raise ValueError(f"template {self.name} renders undeclared slots {referenced - declared}")

    def matches(self, tokens: set[str]) -> bool:
        return any(all(k in tokens for k in pattern) for pattern in self.intent_patterns)


def load_templates(path: str | Path | None = None) -> list[CommandTemplate]:
    if path is None:
        text = resources.files("clai.data").joinpath("templates.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    templates = []
    for raw in json.loads(text)["templates"]:
        templates.append(
            CommandTemplate(
                name=raw["name"],
                utility=raw["utility"],
                intent_patterns=tuple(tuple(p) for p in raw["patterns"]),
                slots=tuple(
                    SlotSpec(
                        name=s["name"],
                        kind=s["kind"],
                        required=s.get("required", True),
                        suffixes=tuple(s.get("suffixes", ())),
                        default=s.get("default"),
                    )
                    for s in raw["slots"]
                ),
                command=raw["command"],
            )
        )
    return templates


def _clean(token: str) -> str:
    return token.strip(_PUNCT)


def _raw_tokens(line: str) -> list[str]:
    return [_clean(t) for t in line.split() if _clean(t)]


def _find_archive(tokens: list[str], suffixes: tuple[str, ...]) -> str | None:
    for token in tokens:
        low = token.lower()
        if any(low.endswith(s) for s in suffixes):
            return token
    return None


def _find_pattern(line: str, tokens: list[str]) -> str | None:
    quoted = _QUOTED_RE.search(line)
    if quoted:
        return quoted.group(1)
    lowered = [t.lower() for t in tokens]
    for anchor in ("containing", "matching"):
        if anchor in lowered:
            idx = lowered.index(anchor)
            if idx + 1 < len(tokens):
                return tokens[idx + 1]
    return None


def _find_file(tokens: list[str], taken: set[str]) -> str | None:
    for token in tokens:
        if token.startswith("-") or token in taken:
            continue
        if "." in token or "/" in token:
            return token
    return None


def _find_directory(tokens: list[str], keywords: set[str], taken: set[str]) -> str | None:
    lowered = [t.lower() for t in tokens]
    for i, low in enumerate(lowered):
        if low in _DIRECTORY_ANCHORS and i + 1 < len(tokens):
            candidate = tokens[i + 1]
            low_candidate = lowered[i + 1]
            if low_candidate in keywords or low_candidate in _DIRECTORY_ANCHORS:
                continue
            if candidate.startswith("-") or candidate in taken:
                continue
            return candidate
    return None


def _shell_quote_pattern(value: str) -> str:
    return value.replace("\\", "\\\\").replace('"', '\\"').replace("$", "\\$").replace("`", "\\`")


class Nlc2CmdSkill(Skill):
    name = "nlc2cmd"

    def __init__(self, templates_path: str | Path | None = None):
        self._templates_path = templates_path
        self.templates: list[CommandTemplate] = []

    def activate(self) -> None:
        self.templates = load_templates(self._templates_path)

    def on_event(self, state: TerminalState) -> ActionSequence | None:
        if state.phase is not Phase.PRE_EXECUTION:
            return None
        line = state.user_input
        token_set = set(tokenize(line))
        if not token_set:
            return None
        raw = _raw_tokens(line)
        for template in self.templates:
            if not template.matches(token_set):
                continue
            translated = self._fill(template, line, raw)
            if translated is not None:
                command, defaulted = translated
                return self._suggest(template, command, defaulted)
        return None

    def _fill(self, template: CommandTemplate, line: str, raw: list[str]) -> tuple[str, bool] | None:
        values: dict[str, str] = {}
        taken: set[str] = set()
        keywords = {k for pattern in template.intent_patterns for k in pattern}
        defaulted = False
        deferred: list[SlotSpec] = []
        for slot in template.slots:
            value: str | None = None
            if slot.kind == "archive":
                value = _find_archive(raw, slot.suffixes)
            elif slot.kind == "pattern":
                value = _find_pattern(line, raw)
            elif slot.kind == "file":
                value = _find_file(raw, taken)
            elif slot.kind == "directory":
                value = _find_directory(raw, keywords, taken)
            if value is None:
                if slot.required:
                    return None
                deferred.append(slot)
                continue
            values[slot.name] = _shell_quote_pattern(value) if slot.kind == "pattern" else value
            taken.add(value)
        for slot in deferred:
            if slot.default is None:
                continue
            values[slot.name] = slot.default.format(**values)
            defaulted = True
        try:
            return template.command.format(**values), defaulted
        except KeyError:
            return None

    def _suggest(self, template: CommandTemplate, command: str, defaulted: bool) -> ActionSequence:
        confidence = CONFIDENCE_DEFAULTED if defaulted else CONFIDENCE_FULL
        note = " (with a defaulted slot)" if defaulted else ""
        return ActionSequence(
            (
                Action(
                    suggested_command=command,
                    description=command,
                    explanation=f"matched the '{template.name}' intent for {template.utility}{note}",
                    confidence=confidence,
                    origin_skill=self.name,
                ),
            )
        )
