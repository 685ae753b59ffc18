import io
import random
import sys
from pathlib import Path

import pytest

from clai.config import Config
from clai.events import Action, ActionSequence, Phase, SkillResponse, TerminalState
from clai.runtime import Skill, SkillRegistry
from clai.skills.known import KnownCommands
from clai.terminal import Session

FIXTURES = Path(__file__).parent / "fixtures"

KNOWN_SEED = {
    "git", "ls", "tar", "grep", "echo", "true", "false", "cat", "printf",
    "sleep", "head", "tail", "sort", "wc", "find", "sed", "awk",
}


def make_state(
    user_input: str = "ls",
    phase: Phase = Phase.PRE_EXECUTION,
    command_id: int = 1,
    exit_code: int | None = 0,
    stdout_tail: str = "",
    stderr_tail: str = "",
    cwd: str = "/tmp",
) -> TerminalState:
    return TerminalState(
        session_id="s-test",
        command_id=command_id,
        user_input=user_input,
        cwd=cwd,
        phase=phase,
        timestamp=1_700_000_000_000,
        previous_exit_code=exit_code,
        stdout_tail=stdout_tail,
        stderr_tail=stderr_tail,
    )


def random_state(rng: random.Random) -> TerminalState:
    def text(max_len=40):
        alphabet = "abcdefghij /.-_0123456789é中"
        return "".join(rng.choice(alphabet) for _ in range(rng.randrange(max_len)))

    return TerminalState(
        session_id=f"s{rng.randrange(10**6)}",
        command_id=rng.randrange(1, 10**6),
        user_input=text(),
        cwd="/" + text(20).replace(" ", ""),
        phase=rng.choice([Phase.PRE_EXECUTION, Phase.POST_EXECUTION]),
        timestamp=rng.randrange(10**13),
        previous_exit_code=rng.choice([None, 0, 1, 2, 127]),
        stdout_tail=text(200),
        stderr_tail=text(200),
    )


class StaticSkill(Skill):
    """Responds to every pre-execution event with a fixed suggestion."""

    def __init__(self, name, confidence, command=None, description=None,
                 explanation=None, execute=False, phase=Phase.PRE_EXECUTION):
        self.name = name
        self.confidence = confidence
        self.command = command
        self.description = description or command
        self.explanation = explanation
        self.execute = execute
        self.phase = phase
        self.events_seen = 0

    def on_event(self, state):
        self.events_seen += 1
        if self.phase is not None and state.phase is not self.phase:
            return None
        if self.confidence <= 0 and self.command is None and self.description is None:
            return None
        return ActionSequence((
            Action(
                suggested_command=self.command,
                description=self.description,
                explanation=self.explanation,
                confidence=self.confidence,
                execute=self.execute,
                origin_skill=self.name,
            ),
        ))


class CrashSkill(Skill):
    def __init__(self, name="crashy"):
        self.name = name

    def on_event(self, state):
        raise RuntimeError("boom")


def make_response(skill: str, confidence: float, command: str | None = None) -> SkillResponse:
    seq = ActionSequence((
        Action(
            suggested_command=command or f"{skill}-cmd",
            description=f"{skill} suggestion",
            confidence=confidence,
            origin_skill=skill,
        ),
    ))
    return SkillResponse(skill=skill, result=seq, confidence=confidence, latency_ms=1)


@pytest.fixture()
def known_commands():
    return KnownCommands(seed=set(KNOWN_SEED), scan=False)


@pytest.fixture()
def echo_entry():
    return f"{sys.executable} {FIXTURES / 'echo_skill.py'}"


def make_session(registry=None, answers="", home=None, orchestrator=None, config=None):
    """A Session writing to an in-memory transcript."""
    registry = registry or SkillRegistry()
    stdin = io.StringIO(answers)
    stdout = io.StringIO()
    session = Session(
        registry,
        config=config or Config(active_skills=[]),
        home=home,
        stdin=stdin,
        stdout=stdout,
        orchestrator=orchestrator,
    )
    return session, stdout


@pytest.fixture(scope="session")
def builtin_registry(tmp_path_factory):
    """All five built-in skills, activated once, with a seeded command set."""
    from clai.skills import builtin_skills

    known = KnownCommands(seed=set(KNOWN_SEED), scan=False)
    registry = SkillRegistry()
    cache = tmp_path_factory.mktemp("model-cache")
    for skill in builtin_skills(cache_dir=cache, known=known):
        registry.register(skill)
    for name in registry.names():
        registry.activate(name)
    return registry
