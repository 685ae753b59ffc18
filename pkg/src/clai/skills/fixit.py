"""Error-correction skill: typo repair before execution, fixes after errors.

Three rule families, in priority order:

1. unknown-command typo: the first token is not a known command but sits
   within Levenshtein distance 2 of one (0.8 confidence at distance 1,
   0.6 at distance 2);
2. permission denied: the last command failed with "Permission denied",
   so suggest a sudo prefix (0.7);
3. per-utility argument typos from a small shipped table for git/tar/grep
   (0.8), extensible via JSON.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .. import kernels
from ..events import Action, ActionSequence, Phase, TerminalState
from ..retrieval import STOPWORDS
from ..runtime import Skill
from .known import KnownCommands

CONFIDENCE_DISTANCE_1 = 0.8
CONFIDENCE_DISTANCE_2 = 0.6
CONFIDENCE_PERMISSION = 0.7
CONFIDENCE_FLAG_TYPO = 0.8
MAX_TYPO_DISTANCE = 2


def load_flag_table(path: str | Path | None = None) -> dict[str, dict[str, str]]:
    if path is None:
        text = resources.files("clai.data").joinpath("fix_rules.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return json.loads(text)["flag_typos"]


def _shared_chars(a: str, b: str) -> int:
    counts: dict[str, int] = {}
    for ch in a:
        counts[ch] = counts.get(ch, 0) + 1
    shared = 0
    for ch in b:
        if counts.get(ch, 0) > 0:
            counts[ch] -= 1
            shared += 1
    return shared


def nearest_command(token: str, candidates: list[str]) -> tuple[str, int] | None:
    """Closest known command within the typo budget.

    Equidistant candidates are ranked by shared-character overlap first (a
    transposed token like "gti" should resolve to "git", not "g++"), then
    lexicographically.
    """
    pool = [c for c in candidates if abs(len(c) - len(token)) <= MAX_TYPO_DISTANCE]
    if not pool:
        return None
    distances = kernels.levenshtein_batch(token, pool)
    best_distance = int(distances.min())
    if best_distance > MAX_TYPO_DISTANCE:
        return None
    ties = [pool[i] for i in range(len(pool)) if distances[i] == best_distance]
    ties.sort(key=lambda c: (-_shared_chars(token, c), c))
    return ties[0], best_distance


class FixitSkill(Skill):
    name = "fixit"

    def __init__(self, known: KnownCommands | None = None, flag_table_path: str | Path | None = None):
        self.known = known or KnownCommands()
        self._flag_table_path = flag_table_path
        self.flag_typos: dict[str, dict[str, str]] = {}

    def activate(self) -> None:
        self.flag_typos = load_flag_table(self._flag_table_path)
        self.known.all()  # force the PATH scan outside the event path

    def on_event(self, state: TerminalState) -> ActionSequence | None:
        if state.phase is Phase.PRE_EXECUTION:
            return self._typo_rules(state.user_input)
        return self._error_rules(state)

    def _typo_rules(self, line: str) -> ActionSequence | None:
        tokens = line.split()
        if not tokens:
            return None
        head = tokens[0]
        if head.lower() in STOPWORDS:
            return None  # "how do I ..." is a question, not a mistyped command
        if head not in self.known:
            hit = nearest_command(head, self.known.all())
            if hit is None:
                return None
            replacement, distance = hit
            fixed = " ".join([replacement] + tokens[1:])
            if fixed == line:
                return None
            confidence = CONFIDENCE_DISTANCE_1 if distance == 1 else CONFIDENCE_DISTANCE_2
            return self._suggest(
                fixed,
                confidence,
                f"'{head}' is not a known command; '{replacement}' is "
                f"{distance} edit{'s' if distance > 1 else ''} away",
            )
        table = self.flag_typos.get(head)
        if table:
            for i, token in enumerate(tokens[1:], start=1):
                if token in table:
                    fixed_tokens = list(tokens)
                    fixed_tokens[i] = table[token]
                    fixed = " ".join(fixed_tokens)
                    if fixed == line:
                        return None
                    return self._suggest(
                        fixed,
                        CONFIDENCE_FLAG_TYPO,
                        f"'{token}' looks like a typo of '{table[token]}' for {head}",
                    )
        return None

    def _error_rules(self, state: TerminalState) -> ActionSequence | None:
        exit_code = state.previous_exit_code
        if not exit_code:
            return None
        line = state.user_input.strip()
        if "Permission denied" in state.stderr_tail and line and not line.startswith("sudo "):
            return self._suggest(
                f"sudo {line}",
                CONFIDENCE_PERMISSION,
                "the command was denied permission; retrying with elevated rights may help",
            )
        return None

    def _suggest(self, command: str, confidence: float, explanation: str) -> ActionSequence:
        return ActionSequence(
            (
                Action(
                    suggested_command=command,
                    description=command,
                    explanation=explanation,
                    confidence=confidence,
                    origin_skill=self.name,
                ),
            )
        )
