"""Interactive REPL: intercepts input, routes it through skills and the
orchestrator, runs the y/n/e confirmation flow, and executes commands.

The contract that everything else hangs off: a command that triggers no meta
syntax and no above-threshold skill is executed byte-for-byte as typed, with
the exact exit status the plain platform shell would give. Assistance renders
in a visually distinct block prefixed ``clai:`` and never silently changes
what runs.
"""

from __future__ import annotations

import enum
import os
import shutil
import subprocess
import sys
import threading
import time
import uuid
from dataclasses import dataclass

from .config import Config, cache_dir, journal_path, orchestrator_state_path
from .events import (
    Action,
    ActionSequence,
    FeedbackEvent,
    NOOP_SKILL,
    Phase,
    SkillResponse,
    TerminalState,
    UserResponse,
)
from .journal import FeedbackJournal
from .orchestration import (
    BanditOrchestrator,
    BanditState,
    Orchestrator,
    OrchestratorChoice,
    build_orchestrator,
    indirect_similarity,
)
from .runtime import SkillError, SkillRegistry

META_VERBS = ("skills", "activate", "deactivate", "orchestrate", "manual", "auto")

PROMPT = ">> "
CONFIRM_PROMPT = "y/n/e? "


class DirectiveKind(enum.Enum):
    PASS_THROUGH = "pass_through"
    META_COMMAND = "meta_command"
    EXPLICIT_CLAI = "explicit_clai"
    FORCED_SKILL = "forced_skill"


@dataclass(frozen=True)
class Directive:
    kind: DirectiveKind
    payload: str
    skill: str | None = None


@dataclass(frozen=True)
class ExecutionOutcome:
    executed_command: str
    exit_code: int
    stdout: bytes = b""
    stderr: bytes = b""
    wall_ms: int = 0


class SkillNotActiveError(SkillError):
    pass


class SessionExit(Exception):
    def __init__(self, code: int = 0):
        super().__init__(code)
        self.code = code


def intercept(raw_line: str, registry: SkillRegistry) -> Directive:
    """Classify one input line. Meta verbs outrank same-named skills."""
    stripped = raw_line.strip()
    if not stripped:
        raise ValueError("empty input line")
    parts = stripped.split()
    if parts[0].lower() != "clai":
        return Directive(DirectiveKind.PASS_THROUGH, raw_line)
    after_clai = stripped.split(None, 1)[1] if len(parts) > 1 else ""
    if len(parts) == 1:
        return Directive(DirectiveKind.EXPLICIT_CLAI, "")
    second = parts[1].lower()
    if second in META_VERBS:
        rest = after_clai.split(None, 1)
        return Directive(DirectiveKind.META_COMMAND, rest[1] if len(rest) > 1 else "", skill=second)
    if registry.is_registered(second):
        if not registry.is_active(second):
            raise SkillNotActiveError("skill not active")
        rest = after_clai.split(None, 1)
        return Directive(DirectiveKind.FORCED_SKILL, rest[1] if len(rest) > 1 else "", skill=second)
    return Directive(DirectiveKind.EXPLICIT_CLAI, after_clai)


def default_shell() -> str:
    for candidate in ("/bin/bash", "/usr/bin/bash", "/bin/sh"):
        if os.path.exists(candidate):
            return candidate
    return shutil.which("sh") or "/bin/sh"


class ShellExecutor:
    """Runs command strings through the platform shell, streaming output to
    the user's terminal while capturing it for tails and purity checks."""

    def __init__(self, shell: str | None = None, stdout=None, stderr=None):
        self.shell = shell or default_shell()
        self.stdout = stdout if stdout is not None else sys.stdout
        self.stderr = stderr if stderr is not None else sys.stderr
        self.spawned: list[str] = []  # the session's process table

    def run(self, command: str, cwd: str, env: dict[str, str]) -> ExecutionOutcome:
        started = time.monotonic()
        try:
            proc = subprocess.Popen(
                [self.shell, "-c", command],
                cwd=cwd,
                env=env,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
            )
        except OSError as exc:
            return ExecutionOutcome(
                executed_command=command,
                exit_code=127,
                stderr=f"clai: failed to spawn {self.shell}: {exc}\n".encode(),
            )
        self.spawned.append(command)
        out_buf = bytearray()
        err_buf = bytearray()

        def pump(pipe, buf, sink):
            for chunk in iter(lambda: pipe.read(8192), b""):
                buf.extend(chunk)
                sink.write(chunk.decode("utf-8", errors="replace"))
                sink.flush()

        readers = [
            threading.Thread(target=pump, args=(proc.stdout, out_buf, self.stdout)),
            threading.Thread(target=pump, args=(proc.stderr, err_buf, self.stderr)),
        ]
        for r in readers:
            r.start()
        exit_code = proc.wait()
        for r in readers:
            r.join()
        return ExecutionOutcome(
            executed_command=command,
            exit_code=exit_code,
            stdout=bytes(out_buf),
            stderr=bytes(err_buf),
            wall_ms=int((time.monotonic() - started) * 1000),
        )


@dataclass
class _PendingFeedback:
    """An ignored-suggestion event waiting for the user's next command."""

    command_id: int
    chosen_skill: str
    suggested_command: str | None


class Session:
    """One interactive session: registry, orchestrator, journal, shell state."""

    def __init__(
        self,
        registry: SkillRegistry,
        config: Config | None = None,
        home=None,
        stdin=None,
        stdout=None,
        stderr=None,
        executor: ShellExecutor | None = None,
        orchestrator: Orchestrator | None = None,
        clock=None,
    ):
        self.registry = registry
        self.config = config or Config()
        self.home = home
        self.stdin = stdin if stdin is not None else sys.stdin
        self.stdout = stdout if stdout is not None else sys.stdout
        self.stderr = stderr if stderr is not None else (self.stdout if stdout is not None else sys.stderr)
        self.executor = executor or ShellExecutor(stdout=self.stdout, stderr=self.stderr)
        self.clock = clock or (lambda: int(time.time() * 1000))
        self.session_id = uuid.uuid4().hex[:12]
        self.command_id = 0
        self.cwd = os.getcwd()
        self.env = dict(os.environ)
        self.journal = FeedbackJournal(journal_path(home)) if home else None
        self.orchestrator = orchestrator or self._initial_orchestrator()
        self.last_outcome: ExecutionOutcome | None = None
        self._pending: _PendingFeedback | None = None

    # -- construction helpers --

    def _initial_orchestrator(self) -> Orchestrator:
        bandit_state = None
        if self.home is not None and self.config.orchestrator == "bandit":
            path = orchestrator_state_path(self.home)
            if path.exists():
                try:
                    bandit_state = BanditState.from_json(path.read_text(encoding="utf-8"))
                except (ValueError, KeyError):
                    bandit_state = None
        return build_orchestrator(
            self.config.orchestrator,
            self.registry.names(),
            threshold=self.config.threshold,
            preference_pairs=[tuple(p) for p in self.config.preference],
            warm_start_spec=self.config.warm_start,
            bandit_state=bandit_state,
        )

    def save_state(self) -> None:
        if self.home is None:
            return
        if isinstance(self.orchestrator, BanditOrchestrator):
            path = orchestrator_state_path(self.home)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.orchestrator.state_json(), encoding="utf-8")

    # -- terminal state ----------------------------------------------------

    def make_state(self, user_input: str, phase: Phase) -> TerminalState:
        last = self.last_outcome
        return TerminalState(
            session_id=self.session_id,
            command_id=self.command_id,
            user_input=user_input,
            cwd=self.cwd,
            phase=phase,
            timestamp=self.clock(),
            previous_exit_code=last.exit_code if last else None,
            stdout_tail=last.stdout.decode("utf-8", errors="replace") if last else "",
            stderr_tail=last.stderr.decode("utf-8", errors="replace") if last else "",
        )

    # -- rendering ----------------------------------------------------------

    def _say(self, text: str) -> None:
        for line in text.splitlines() or [""]:
            self.stdout.write(f"clai: {line}\n")
        self.stdout.flush()

    def _render_action(self, action: Action) -> None:
        if action.suggested_command:
            self._say(f"try: {action.suggested_command}")
        if action.description and action.description != action.suggested_command:
            self._say(action.description)

    # -- feedback plumbing ----------------------------------------------------

    def _record(self, event: FeedbackEvent) -> None:
        if self.journal is not None:
            self.journal.append(event)
        self.orchestrator.observe(event)

    def _finalize_pending(self, next_command: str) -> None:
        pending, self._pending = self._pending, None
        if pending is None:
            return
        similarity = None
        if pending.suggested_command and next_command:
            similarity = indirect_similarity(pending.suggested_command, next_command)
        self._record(
            FeedbackEvent(
                command_id=pending.command_id,
                chosen_skill=pending.chosen_skill,
                user_response=UserResponse.IGNORED,
                next_command=next_command,
                indirect_similarity=similarity,
            )
        )

    # -- the confirmation flow ---------------------------------------------------

    def confirm(self, action: Action) -> UserResponse:
        """y/n/e prompt; 'e' prints the explanation and re-asks."""
        self._render_action(action)
        while True:
            self.stdout.write(f"clai: {CONFIRM_PROMPT}")
            self.stdout.flush()
            line = self.stdin.readline()
            if line == "":  # EOF counts as a refusal
                return UserResponse.REJECTED
            answer = line.strip().lower()
            if answer == "y":
                return UserResponse.ACCEPTED
            if answer == "n":
                return UserResponse.REJECTED
            if answer == "e":
                self._say(action.explanation or "no explanation available")
                self._record(
                    FeedbackEvent(
                        command_id=self.command_id,
                        chosen_skill=action.origin_skill,
                        user_response=UserResponse.EXPLAINED,
                    )
                )
            # anything else (including empty input) re-prompts

    # -- execution ---------------------------------------------------------------

    def execute(self, command: str) -> ExecutionOutcome:
        """Run one command string; cd/export/exit mutate the wrapper itself."""
        builtin = self._try_builtin(command)
        if builtin is not None:
            return builtin
        outcome = self.executor.run(command, self.cwd, self.env)
        return outcome

    _METACHARS = set("|&;<>()`$\n")

    def _try_builtin(self, command: str) -> ExecutionOutcome | None:
        stripped = command.strip()
        if not stripped or (set(stripped) & self._METACHARS):
            return None
        tokens = stripped.split()
        head = tokens[0]
        if head == "cd":
            target = tokens[1] if len(tokens) > 1 else self.env.get("HOME", os.path.expanduser("~"))
            target = os.path.expanduser(target)
            resolved = os.path.abspath(os.path.join(self.cwd, target))
            if not os.path.isdir(resolved):
                self.stdout.write(f"cd: no such directory: {target}\n")
                return ExecutionOutcome(executed_command=command, exit_code=1)
            self.cwd = resolved
            self.env["PWD"] = resolved
            return ExecutionOutcome(executed_command=command, exit_code=0)
        if head == "export":
            for assignment in tokens[1:]:
                if "=" in assignment:
                    key, _, value = assignment.partition("=")
                    if key:
                        self.env[key] = value
            return ExecutionOutcome(executed_command=command, exit_code=0)
        if head == "exit":
            code = 0
            if len(tokens) > 1:
                try:
                    code = int(tokens[1])
                except ValueError:
                    code = 2
            raise SessionExit(code)
        return None

    def _execute_sequence(self, sequence: ActionSequence) -> ExecutionOutcome:
        outcome = ExecutionOutcome(executed_command="", exit_code=0)
        for action in sequence.actions:
            if not action.suggested_command:
                continue
            outcome = self.execute(action.suggested_command)
            if outcome.exit_code != 0:
                break  # the sequence aborts on the first failure
        return outcome

    # -- the pipeline ---------------------------------------------------------------

    def handle_line(self, raw_line: str) -> ExecutionOutcome | None:
        """Process one input line end to end; None for meta/suppressed rounds."""
        if not raw_line.strip():
            return None
        self.command_id += 1
        directive = intercept(raw_line, self.registry)
        if directive.kind is DirectiveKind.META_COMMAND:
            self._handle_meta(directive)  # meta rounds are not executed commands
            return None
        self._finalize_pending(raw_line.strip())
        return self.run_pipeline(directive)

    def run_pipeline(self, directive: Directive) -> ExecutionOutcome | None:
        pre_state = self.make_state(directive.payload, Phase.PRE_EXECUTION)
        responses = self.registry.dispatch(pre_state)
        choice = self._choose(directive, responses)
        outcome = self._act_on_choice(directive, choice)
        if outcome is not None:
            self.last_outcome = outcome
            post_state = self.make_state(outcome.executed_command, Phase.POST_EXECUTION)
            post_responses = self.registry.dispatch(post_state)
            post_choice = self.orchestrator.select(post_responses, self.command_id)
            self._show_post_choice(choice, post_choice)
        for notice in self.registry.notices:
            self._say(notice)
        self.registry.notices.clear()
        return outcome

    def _choose(self, directive: Directive, responses: list[SkillResponse]) -> OrchestratorChoice:
        actionable = [r for r in responses if r.result is not None and not r.failed]
        if directive.kind is DirectiveKind.FORCED_SKILL:
            forced = next((r for r in responses if r.skill == directive.skill), None)
            return OrchestratorChoice(
                chosen=forced if forced and forced.result else None,
                mode="forced",
                rationale=f"forced invocation of {directive.skill}",
                confidence=forced.confidence if forced else None,
            )
        if directive.kind is DirectiveKind.EXPLICIT_CLAI:
            best = None
            for r in actionable:  # most relevant skill, relevance threshold bypassed
                if best is None or r.confidence > best.confidence or (
                    r.confidence == best.confidence and r.skill < best.skill
                ):
                    best = r
            return OrchestratorChoice(
                chosen=best,
                mode="explicit",
                rationale="explicit invocation bypasses the relevance threshold",
                confidence=best.confidence if best else None,
            )
        return self.orchestrator.select(responses, self.command_id)

    def _act_on_choice(
        self, directive: Directive, choice: OrchestratorChoice
    ) -> ExecutionOutcome | None:
        interactive = directive.kind is DirectiveKind.PASS_THROUGH
        if choice.chosen is None or choice.chosen.result is None:
            if directive.kind is DirectiveKind.FORCED_SKILL:
                self._say(f"skill {directive.skill} had no response")
                return None
            if directive.kind is DirectiveKind.EXPLICIT_CLAI:
                self._say("no skill had a response")
                return None
            self._note_noop_round()
            return self.execute(directive.payload)

        sequence = choice.chosen.result
        head = sequence.head
        skill = choice.chosen.skill

        if head.suggested_command is None:
            # Information-only response: print it; a typed command still runs.
            self._render_action(head)
            self._pending = _PendingFeedback(self.command_id, skill, None)
            return self.execute(directive.payload) if interactive else None

        if head.execute and self.config.auto_execute:
            self._say(f"auto-executing: {head.suggested_command}")
            self._record(
                FeedbackEvent(
                    command_id=self.command_id,
                    chosen_skill=skill,
                    user_response=UserResponse.ACCEPTED,
                )
            )
            return self._execute_sequence(sequence)

        verdict = self.confirm(head)
        self._record(
            FeedbackEvent(
                command_id=self.command_id,
                chosen_skill=skill,
                user_response=verdict,
            )
        )
        if verdict is UserResponse.ACCEPTED:
            return self._execute_sequence(sequence)
        # Rejected: normal life continues; the raw command runs as typed.
        return self.execute(directive.payload) if interactive else None

    def _note_noop_round(self) -> None:
        self._record(
            FeedbackEvent(
                command_id=self.command_id,
                chosen_skill=NOOP_SKILL,
                user_response=UserResponse.IGNORED,
                next_command="",
            )
        )

    def _show_post_choice(self, pre_choice: OrchestratorChoice, post_choice: OrchestratorChoice) -> None:
        if post_choice.chosen is None or post_choice.chosen.result is None:
            return
        head = post_choice.chosen.result.head
        self._render_action(head)  # printed, never executed
        if pre_choice.chosen is None:
            # This round's journal entry becomes "did they follow the advice?"
            self._pending = _PendingFeedback(
                self.command_id, post_choice.chosen.skill, head.suggested_command
            )

    # -- meta commands -----------------------------------------------------------------

    def _handle_meta(self, directive: Directive) -> None:
        verb = directive.skill
        argument = directive.payload.strip()
        if verb == "skills":
            for descriptor in self.registry.descriptors():
                marker = "*" if descriptor.active else " "
                self._say(f"{marker} {descriptor.name} ({descriptor.kind})")
            if not self.registry.descriptors():
                self._say("no skills registered")
        elif verb in ("activate", "deactivate"):
            if not argument:
                self._say(f"usage: clai {verb} <skill>")
                return
            try:
                getattr(self.registry, verb)(argument)
                self._say(f"{argument} {verb}d")
            except SkillError as exc:
                self._say(str(exc))
        elif verb == "orchestrate":
            try:
                self.switch_orchestrator(argument)
                self._say(f"orchestrator: {argument}")
            except ValueError as exc:
                self._say(str(exc))
        elif verb == "manual":
            self.config.auto_execute = False
            self._say("auto-execution off")
        elif verb == "auto":
            self.config.auto_execute = True
            self._say("auto-execution on")

    def switch_orchestrator(self, mode: str) -> None:
        carried_threshold = getattr(self.orchestrator, "threshold", self.config.threshold)
        self.orchestrator = build_orchestrator(
            mode,
            self.registry.names(),
            threshold=carried_threshold,
            preference_pairs=[tuple(p) for p in self.config.preference],
            warm_start_spec=self.config.warm_start,
        )

    # -- the REPL -------------------------------------------------------------------------

    def run(self) -> int:
        code = 0
        while True:
            self.stdout.write(PROMPT)
            self.stdout.flush()
            line = self.stdin.readline()
            if line == "":
                break
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                self.handle_line(line)
            except SessionExit as exit_request:
                code = exit_request.code
                break
            except SkillNotActiveError as exc:
                self._say(str(exc))
        self.save_state()
        self.registry.shutdown()
        return code
