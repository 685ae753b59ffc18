"""Datatypes flowing between the terminal, skills, orchestrator, and persistence.

Everything here is an immutable value object with a stable one-line JSON wire
form. The same JSON schema is used verbatim by the out-of-process skill
protocol and by the feedback journal, so round-trip fidelity is load-bearing:
``deserialize_state(serialize_state(s)) == s`` must hold bit-exactly.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field, replace

logger = logging.getLogger(__name__)

# Output tails are bounded so a chatty command cannot bloat every event.
TAIL_LIMIT_BYTES = 8192


class Phase(str, enum.Enum):
    """Where in the command lifecycle an event was emitted."""

    PRE_EXECUTION = "pre_execution"
    POST_EXECUTION = "post_execution"


class UserResponse(str, enum.Enum):
    """How the user reacted to a suggestion (or to its absence)."""

    ACCEPTED = "accepted"
    REJECTED = "rejected"
    EXPLAINED = "explained"
    IGNORED = "ignored"


def clamp_confidence(value: float, origin: str = "") -> float:
    """Clamp a confidence into [0, 1], warning when the input was out of range.

    A buggy skill reporting 1.7 or -3 must not break the session; the value is
    clamped and the anomaly logged.
    """
    try:
        value = float(value)
    except (TypeError, ValueError):
        logger.warning("non-numeric confidence %r from %s; using 0.0", value, origin)
        return 0.0
    if value != value:  # NaN
        logger.warning("NaN confidence from %s; using 0.0", origin)
        return 0.0
    if value < 0.0 or value > 1.0:
        clamped = min(1.0, max(0.0, value))
        logger.warning("confidence %g from %s out of [0,1]; clamped to %g", value, origin, clamped)
        return clamped
    return value


def truncate_tail(text: str, limit: int = TAIL_LIMIT_BYTES) -> str:
    """Keep the most recent ``limit`` bytes of ``text`` (UTF-8 measured).

    Truncation is from the front: skills care about the latest error text.
    A multi-byte character straddling the cut is dropped entirely so the
    result is valid UTF-8 and never exceeds the byte budget.
    """
    raw = text.encode("utf-8")
    if len(raw) <= limit:
        return text
    cut = raw[-limit:]
    # Skip UTF-8 continuation bytes (0b10xxxxxx) left dangling at the front.
    start = 0
    while start < len(cut) and (cut[start] & 0xC0) == 0x80:
        start += 1
    return cut[start:].decode("utf-8")


@dataclass(frozen=True)
class TerminalState:
    """The percept a skill receives: one snapshot of the shell session.

    In ``pre_execution`` phase the tails and exit code describe the *previous*
    command; the user has just hit return on ``user_input`` and nothing has
    run yet.
    """

    session_id: str
    command_id: int
    user_input: str
    cwd: str
    phase: Phase
    timestamp: int
    previous_exit_code: int | None = None
    stdout_tail: str = ""
    stderr_tail: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "stdout_tail", truncate_tail(self.stdout_tail))
        object.__setattr__(self, "stderr_tail", truncate_tail(self.stderr_tail))
        if isinstance(self.phase, str):
            object.__setattr__(self, "phase", Phase(self.phase))


@dataclass(frozen=True)
class Action:
    """A skill's directive back to the terminal.

    ``suggested_command`` is what would run on acceptance; ``description`` is
    shown to the user; ``explanation`` is revealed on an "e" response.
    ``execute`` asks for auto-execution without confirmation (honored only
    when the session allows it).
    """

    suggested_command: str | None = None
    description: str | None = None
    explanation: str | None = None
    confidence: float = 0.0
    execute: bool = False
    origin_skill: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "confidence", clamp_confidence(self.confidence, self.origin_skill or "action")
        )
        if self.confidence > 0 and self.suggested_command is None and self.description is None:
            raise ValueError("a confident action must carry a command or a description")


@dataclass(frozen=True)
class ActionSequence:
    """An ordered, non-empty run of actions from one skill.

    When executed, the sequence aborts at the first non-zero exit.
    """

    actions: tuple[Action, ...]

    def __post_init__(self) -> None:
        actions = tuple(self.actions)
        if not actions:
            raise ValueError("an action sequence cannot be empty")
        origins = {a.origin_skill for a in actions}
        if len(origins) > 1:
            raise ValueError(f"actions in one sequence must share an origin skill, got {origins}")
        object.__setattr__(self, "actions", actions)

    @property
    def origin_skill(self) -> str:
        return self.actions[0].origin_skill

    @property
    def confidence(self) -> float:
        return max(a.confidence for a in self.actions)

    @property
    def head(self) -> Action:
        return self.actions[0]


@dataclass(frozen=True)
class SkillResponse:
    """One skill's answer to one event, as collected by fan-out dispatch."""

    skill: str
    result: ActionSequence | None = None
    confidence: float = 0.0
    latency_ms: int = 0
    failed: bool = False

    def __post_init__(self) -> None:
        if self.failed and (self.result is not None or self.confidence != 0.0):
            raise ValueError("a failed response carries no result and zero confidence")
        object.__setattr__(self, "confidence", clamp_confidence(self.confidence, self.skill))
        object.__setattr__(self, "latency_ms", max(0, int(self.latency_ms)))

    @classmethod
    def from_result(cls, skill: str, result: ActionSequence | None, latency_ms: int) -> SkillResponse:
        conf = result.confidence if result is not None else 0.0
        return cls(skill=skill, result=result, confidence=conf, latency_ms=latency_ms)

    @classmethod
    def failure(cls, skill: str, latency_ms: int) -> SkillResponse:
        return cls(skill=skill, result=None, confidence=0.0, latency_ms=latency_ms, failed=True)


NOOP_SKILL = "noop"


@dataclass(frozen=True)
class FeedbackEvent:
    """Outcome of one orchestration round, journaled for learning and replay.

    An ``ignored`` event is not finalized until the user's next command is
    known; ``indirect_similarity`` then captures how close that command came
    to the suggestion.
    """

    command_id: int
    chosen_skill: str = NOOP_SKILL
    user_response: UserResponse = UserResponse.IGNORED
    next_command: str | None = None
    indirect_similarity: float | None = None

    def __post_init__(self) -> None:
        if isinstance(self.user_response, str):
            object.__setattr__(self, "user_response", UserResponse(self.user_response))
        if self.indirect_similarity is not None:
            object.__setattr__(
                self,
                "indirect_similarity",
                clamp_confidence(self.indirect_similarity, "indirect_similarity"),
            )

    def finalized(self) -> bool:
        if self.user_response is UserResponse.IGNORED:
            return self.next_command is not None
        return True


@dataclass(frozen=True)
class SkillDescriptor:
    """Registry entry for a skill: identity, kind, and runtime limits."""

    name: str
    kind: str = "in_process"  # or "external"
    active: bool = False
    timeout_ms: int = 1500
    entry: str | None = None

    def __post_init__(self) -> None:
        if not self.name or self.name != self.name.lower():
            raise ValueError(f"skill names are non-empty lowercase identifiers, got {self.name!r}")
        if self.kind not in ("in_process", "external"):
            raise ValueError(f"unknown skill kind {self.kind!r}")
        if self.timeout_ms < 50:
            raise ValueError("timeout_ms must be >= 50")
        if self.kind == "external" and not self.entry:
            raise ValueError("external skills need an entry executable")

    def activated(self, active: bool = True) -> SkillDescriptor:
        return replace(self, active=active)


# --- JSON wire forms ---------------------------------------------------------
#
# One JSON object per line, UTF-8, keys in snake_case, no embedded newlines.
# Optional fields are omitted when absent so that presence is meaningful.


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def serialize_state(state: TerminalState) -> str:
    payload = {
        "session_id": state.session_id,
        "command_id": state.command_id,
        "user_input": state.user_input,
        "cwd": state.cwd,
        "phase": state.phase.value,
        "timestamp": state.timestamp,
        "stdout_tail": state.stdout_tail,
        "stderr_tail": state.stderr_tail,
    }
    if state.previous_exit_code is not None:
        payload["previous_exit_code"] = state.previous_exit_code
    return _dumps(payload)


def deserialize_state(line: str) -> TerminalState:
    data = json.loads(line)
    return TerminalState(
        session_id=data["session_id"],
        command_id=data["command_id"],
        user_input=data["user_input"],
        cwd=data["cwd"],
        phase=Phase(data["phase"]),
        timestamp=data["timestamp"],
        previous_exit_code=data.get("previous_exit_code"),
        stdout_tail=data.get("stdout_tail", ""),
        stderr_tail=data.get("stderr_tail", ""),
    )


def serialize_action(action: Action) -> dict:
    return {
        "suggested_command": action.suggested_command,
        "description": action.description,
        "explanation": action.explanation,
        "confidence": action.confidence,
        "execute": action.execute,
    }


def deserialize_action(data: dict, origin_skill: str = "") -> Action:
    return Action(
        suggested_command=data.get("suggested_command"),
        description=data.get("description"),
        explanation=data.get("explanation"),
        confidence=clamp_confidence(data.get("confidence", 0.0), origin_skill),
        execute=bool(data.get("execute", False)),
        origin_skill=origin_skill,
    )


def serialize_feedback(event: FeedbackEvent) -> str:
    payload: dict = {
        "command_id": event.command_id,
        "chosen_skill": event.chosen_skill,
        "user_response": event.user_response.value,
    }
    if event.next_command is not None:
        payload["next_command"] = event.next_command
    if event.indirect_similarity is not None:
        payload["indirect_similarity"] = event.indirect_similarity
    return _dumps(payload)


def deserialize_feedback(line: str) -> FeedbackEvent:
    data = json.loads(line)
    return FeedbackEvent(
        command_id=data["command_id"],
        chosen_skill=data["chosen_skill"],
        user_response=UserResponse(data["user_response"]),
        next_command=data.get("next_command"),
        indirect_similarity=data.get("indirect_similarity"),
    )
