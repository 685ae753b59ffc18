"""Skill abstraction, registry lifecycle, fan-out dispatch, and the wire protocol.

Dispatch fans out to one worker per active skill, so end-to-end latency tracks
the slowest skill rather than the sum. A skill that hangs, crashes, or writes
garbage is reported as a failed response and never disturbs its neighbors.

Out-of-process skills speak newline-delimited JSON over stdio:

    -> {"type":"hello","protocol":1}
    <- {"type":"ready","name":"<skill>"}
    -> {"type":"event","state":{...}}
    <- {"type":"response","confidence":0.8,"actions":[{...}]}

One object per line, UTF-8, no embedded newlines.
"""

from __future__ import annotations

import json
import logging
import queue
import shlex
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FutureTimeout

from .events import (
    Action,
    ActionSequence,
    SkillDescriptor,
    SkillResponse,
    TerminalState,
    deserialize_action,
    serialize_action,
    serialize_state,
)

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
HANDSHAKE_TIMEOUT_MS = 1000
ACTIVATION_TIMEOUT_MS = 1000
DEFAULT_TIMEOUT_MS = 1500
MIN_DEADLINE_MS = 50


class SkillError(Exception):
    pass


class RegistrationError(SkillError):
    pass


class ActivationError(SkillError):
    pass


class Skill:
    """In-process skill contract: receive every event, optionally respond.

    Returning None means "do nothing and let normal life follow"; the skill
    may still use the event to track state.
    """

    name: str = ""
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    def on_event(self, state: TerminalState) -> ActionSequence | None:
        raise NotImplementedError

    def activate(self) -> None:  # model builds, corpus loads
        return None

    def deactivate(self) -> None:
        return None


# --- wire protocol ---------------------------------------------------------------


def hello_line() -> str:
    return json.dumps({"type": "hello", "protocol": PROTOCOL_VERSION})


def event_line(state: TerminalState) -> str:
    return '{"type":"event","state":' + serialize_state(state) + "}"


def response_line(actions: list[Action], confidence: float) -> str:
    return json.dumps(
        {
            "type": "response",
            "confidence": confidence,
            "actions": [serialize_action(a) for a in actions],
        },
        ensure_ascii=False,
    )


def parse_response(line: str, skill: str) -> ActionSequence | None:
    """Decode one response line; raises SkillError on malformed input."""
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SkillError(f"malformed JSON from {skill}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("type") != "response":
        raise SkillError(f"unexpected message type from {skill}: {payload!r}")
    raw_actions = payload.get("actions") or []
    actions = [deserialize_action(a, origin_skill=skill) for a in raw_actions]
    actions = [a for a in actions if a.suggested_command or a.description or a.confidence > 0]
    if not actions:
        return None
    return ActionSequence(tuple(actions))


class ExternalSkillProcess:
    """One live out-of-process skill: spawn, handshake, line-based roundtrips.

    A dedicated reader thread drains stdout into a queue so that a response
    arriving after its deadline is discarded instead of poisoning the next
    roundtrip.
    """

    def __init__(self, name: str, entry: str):
        self.name = name
        self.entry = entry
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue[str] = queue.Queue()

    def start(self, handshake_timeout_ms: int = HANDSHAKE_TIMEOUT_MS) -> None:
        try:
            self._proc = subprocess.Popen(
                shlex.split(self.entry),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ActivationError(f"cannot spawn skill {self.name}: {exc}") from exc
        self._lines = queue.Queue()
        threading.Thread(target=self._read_stdout, daemon=True).start()
        threading.Thread(target=self._drain_stderr, daemon=True).start()
        try:
            self._send(hello_line())
            line = self._lines.get(timeout=handshake_timeout_ms / 1000.0)
            if line is None:
                raise SkillError("skill exited before the handshake")
            ready = json.loads(line)
        except (queue.Empty, json.JSONDecodeError, SkillError) as exc:
            self.stop()
            raise ActivationError(f"handshake failed for skill {self.name}") from exc
        if ready.get("type") != "ready":
            self.stop()
            raise ActivationError(f"handshake failed for skill {self.name}: {line!r}")

    def alive(self) -> bool:
        return self._proc is not None and self._proc.poll() is None

    def _read_stdout(self) -> None:
        proc = self._proc
        if proc is None or proc.stdout is None:
            return
        sink = self._lines
        for line in proc.stdout:
            sink.put(line.rstrip("\n"))
        sink.put(None)  # EOF sentinel: lets a waiting roundtrip fail fast

    def _drain_stderr(self) -> None:
        proc = self._proc
        if proc is None or proc.stderr is None:
            return
        for line in proc.stderr:
            logger.debug("skill %s stderr: %s", self.name, line.rstrip())

    def _send(self, line: str) -> None:
        if self._proc is None or self._proc.stdin is None:
            raise SkillError(f"skill {self.name} is not running")
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise SkillError(f"broken pipe to skill {self.name}") from exc

    def roundtrip(self, state: TerminalState, timeout_ms: int) -> ActionSequence | None:
        """Write one event line, read one response line within the deadline."""
        if not self.alive():
            raise SkillError(f"skill {self.name} process is dead")
        while not self._lines.empty():  # responses from timed-out past events
            stale = self._lines.get_nowait()
            if stale is not None:
                logger.debug("discarding stale line from %s: %.80s", self.name, stale)
        self._send(event_line(state))
        try:
            line = self._lines.get(timeout=timeout_ms / 1000.0)
        except queue.Empty:
            if not self.alive():
                raise SkillError(f"skill {self.name} died mid-event") from None
            raise TimeoutError(f"skill {self.name} silent past {timeout_ms} ms") from None
        if line is None:  # EOF sentinel from the reader thread
            raise SkillError(f"skill {self.name} died mid-event")
        return parse_response(line, self.name)

    def stop(self) -> None:
        proc = self._proc
        self._proc = None
        if proc is None or proc.poll() is not None:
            return
        proc.terminate()
        try:
            proc.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            proc.kill()


# --- registry and dispatch ---------------------------------------------------------


class _Entry:
    def __init__(self, descriptor: SkillDescriptor, skill: Skill | None):
        self.descriptor = descriptor
        self.skill = skill
        self.process: ExternalSkillProcess | None = None
        self.restarts_used = 0


class SkillRegistry:
    """Registered skills in registration order, with activation lifecycle."""

    def __init__(self):
        self._entries: dict[str, _Entry] = {}
        self.notices: list[str] = []

    # -- registration --

    def register(self, skill: Skill, timeout_ms: int | None = None) -> SkillDescriptor:
        descriptor = SkillDescriptor(
            name=skill.name,
            kind="in_process",
            timeout_ms=timeout_ms or skill.timeout_ms,
        )
        self._add(descriptor, skill)
        return descriptor

    def register_external(self, name: str, entry: str, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> SkillDescriptor:
        descriptor = SkillDescriptor(name=name, kind="external", timeout_ms=timeout_ms, entry=entry)
        self._add(descriptor, None)
        return descriptor

    def _add(self, descriptor: SkillDescriptor, skill: Skill | None) -> None:
        if descriptor.name in self._entries:
            raise RegistrationError(f"duplicate skill {descriptor.name!r}")
        self._entries[descriptor.name] = _Entry(descriptor, skill)

    # -- introspection --

    def names(self) -> list[str]:
        return list(self._entries)

    def descriptors(self) -> list[SkillDescriptor]:
        return [e.descriptor for e in self._entries.values()]

    def is_registered(self, name: str) -> bool:
        return name in self._entries

    def is_active(self, name: str) -> bool:
        entry = self._entries.get(name)
        return entry is not None and entry.descriptor.active

    def active_names(self) -> list[str]:
        return [n for n, e in self._entries.items() if e.descriptor.active]

    def get_skill(self, name: str) -> Skill | None:
        entry = self._entries.get(name)
        return entry.skill if entry else None

    # -- lifecycle --

    def activate(self, name: str) -> None:
        entry = self._require(name)
        if entry.descriptor.active:
            return
        if entry.descriptor.kind == "external":
            process = ExternalSkillProcess(name, entry.descriptor.entry)
            process.start()
            entry.process = process
        else:
            self._activate_in_process(entry)
        entry.descriptor = entry.descriptor.activated(True)

    def _activate_in_process(self, entry: _Entry) -> None:
        failure: list[BaseException] = []

        def run() -> None:
            try:
                entry.skill.activate()
            except BaseException as exc:  # reported, not raised, in the worker
                failure.append(exc)

        worker = threading.Thread(target=run, daemon=True)
        worker.start()
        worker.join(ACTIVATION_TIMEOUT_MS / 1000.0)
        if worker.is_alive():
            raise ActivationError(f"skill {entry.descriptor.name} activation exceeded "
                                  f"{ACTIVATION_TIMEOUT_MS} ms")
        if failure:
            raise ActivationError(f"skill {entry.descriptor.name} activation failed: {failure[0]}")

    def deactivate(self, name: str) -> None:
        entry = self._require(name)
        if not entry.descriptor.active:
            return
        if entry.process is not None:
            entry.process.stop()
            entry.process = None
        elif entry.skill is not None:
            entry.skill.deactivate()
        entry.descriptor = entry.descriptor.activated(False)

    def shutdown(self) -> None:
        for name in self.active_names():
            self.deactivate(name)

    def _require(self, name: str) -> _Entry:
        entry = self._entries.get(name)
        if entry is None:
            raise SkillError(f"unknown skill {name!r}")
        return entry

    # -- dispatch --

    def dispatch(self, state: TerminalState, deadline_ms: int | None = None) -> list[SkillResponse]:
        """Broadcast one event to every active skill concurrently.

        Result order is registry order. A skill that exceeds its own timeout
        or the global deadline contributes a failed response; the others are
        unaffected.
        """
        active = [self._entries[n] for n in self.active_names()]
        if not active:
            return []
        if deadline_ms is None:
            deadline_ms = max(e.descriptor.timeout_ms for e in active)
        if deadline_ms < MIN_DEADLINE_MS:
            raise ValueError(f"deadline must be >= {MIN_DEADLINE_MS} ms")

        started = time.monotonic()
        # No context manager: its implicit shutdown(wait=True) would block on a
        # hanging skill until the worker thread finally returned.
        pool = ThreadPoolExecutor(max_workers=len(active))
        try:
            futures = [(entry, pool.submit(self._ask, entry, state, deadline_ms)) for entry in active]
            responses = []
            for entry, future in futures:
                limit_ms = min(entry.descriptor.timeout_ms, deadline_ms)
                remaining = started + limit_ms / 1000.0 - time.monotonic()
                try:
                    responses.append(future.result(timeout=max(0.0, remaining)))
                except FutureTimeout:
                    future.cancel()
                    responses.append(SkillResponse.failure(entry.descriptor.name, limit_ms))
        finally:
            pool.shutdown(wait=False)
        return responses

    def _ask(self, entry: _Entry, state: TerminalState, deadline_ms: int) -> SkillResponse:
        name = entry.descriptor.name
        limit_ms = min(entry.descriptor.timeout_ms, deadline_ms)
        started = time.monotonic()

        def elapsed() -> int:
            return int((time.monotonic() - started) * 1000)

        try:
            if entry.process is not None:
                result = self._external_roundtrip(entry, state, limit_ms)
            else:
                result = entry.skill.on_event(state)
            return SkillResponse.from_result(name, result, elapsed())
        except TimeoutError:
            return SkillResponse.failure(name, limit_ms)
        except Exception as exc:
            logger.debug("skill %s failed on event: %s", name, exc)
            return SkillResponse.failure(name, elapsed())

    def _external_roundtrip(self, entry: _Entry, state: TerminalState, limit_ms: int) -> ActionSequence | None:
        try:
            return entry.process.roundtrip(state, limit_ms)
        except SkillError:
            if entry.restarts_used >= 1:
                self._abandon(entry)
                raise
            entry.restarts_used += 1
            logger.warning("skill %s crashed; restarting once", entry.descriptor.name)
            entry.process.stop()
            process = ExternalSkillProcess(entry.descriptor.name, entry.descriptor.entry)
            try:
                process.start()
            except ActivationError:
                entry.process = None
                self._abandon(entry)
                raise
            entry.process = process
            return entry.process.roundtrip(state, limit_ms)

    def _abandon(self, entry: _Entry) -> None:
        name = entry.descriptor.name
        notice = f"skill {name} keeps crashing and was deactivated"
        self.notices.append(notice)
        logger.warning(notice)
        if entry.process is not None:
            entry.process.stop()
            entry.process = None
        entry.descriptor = entry.descriptor.activated(False)
