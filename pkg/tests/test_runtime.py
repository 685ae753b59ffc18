import json
import sys
import time

import pytest

from clai.events import Phase
from clai.runtime import (
    ActivationError,
    RegistrationError,
    Skill,
    SkillError,
    SkillRegistry,
    event_line,
    hello_line,
    parse_response,
)
from clai.profiler import SyntheticSkill

from conftest import FIXTURES, StaticSkill, CrashSkill, make_state


def fixture_entry(mode=None):
    base = f"{sys.executable} {FIXTURES / 'echo_skill.py'}"
    return f"{base} {mode}" if mode else base


class TestRegistry:
    def test_register_starts_inactive(self):
        registry = SkillRegistry()
        registry.register(StaticSkill("fixit", 0.5, command="x"))
        assert registry.names() == ["fixit"]
        assert not registry.is_active("fixit")

    def test_duplicate_registration_rejected(self):
        registry = SkillRegistry()
        registry.register(StaticSkill("fixit", 0.5, command="x"))
        with pytest.raises(RegistrationError, match="duplicate"):
            registry.register(StaticSkill("fixit", 0.1, command="y"))

    def test_missing_executable_errors_at_activation_not_registration(self):
        registry = SkillRegistry()
        registry.register_external("ghost", "/no/such/binary-xyz")
        assert registry.is_registered("ghost")  # registration was lazy
        with pytest.raises(ActivationError):
            registry.activate("ghost")
        assert not registry.is_active("ghost")

    def test_activation_makes_skill_receive_events(self):
        registry = SkillRegistry()
        skill = StaticSkill("watcher", 0.0)
        registry.register(skill)
        registry.dispatch(make_state())
        assert skill.events_seen == 0
        registry.activate("watcher")
        registry.dispatch(make_state())
        assert skill.events_seen == 1
        registry.deactivate("watcher")
        registry.dispatch(make_state())
        assert skill.events_seen == 1

    def test_unknown_name_rejected(self):
        registry = SkillRegistry()
        with pytest.raises(SkillError):
            registry.activate("nobody")

    def test_builtin_activation_stays_below_a_second(self, builtin_registry):
        started = time.perf_counter()
        builtin_registry.deactivate("manx")
        builtin_registry.activate("manx")
        assert (time.perf_counter() - started) * 1000 <= 1000

    def test_sluggish_activation_fails(self):
        class Slow(Skill):
            name = "slow"

            def activate(self):
                time.sleep(1.6)

        registry = SkillRegistry()
        registry.register(Slow())
        with pytest.raises(ActivationError, match="exceeded"):
            registry.activate("slow")
        assert not registry.is_active("slow")


class TestDispatch:
    def _sleepers(self, k, ms=300):
        registry = SkillRegistry()
        for i in range(k):
            registry.register(SyntheticSkill(f"mock{i}", ms), timeout_ms=2000)
            registry.activate(f"mock{i}")
        return registry

    def test_zero_active_skills_is_instant(self):
        registry = SkillRegistry()
        started = time.perf_counter()
        assert registry.dispatch(make_state()) == []
        assert (time.perf_counter() - started) * 1000 < 5

    def test_four_sleeping_skills_fan_out_in_parallel(self):
        registry = self._sleepers(4)
        started = time.perf_counter()
        responses = registry.dispatch(make_state(), deadline_ms=1500)
        wall = (time.perf_counter() - started) * 1000
        assert len(responses) == 4
        assert wall <= 400, f"fan-out took {wall:.0f} ms"

    @pytest.mark.parametrize("k", [1, 2, 4, 8])
    def test_latency_tracks_slowest_skill_not_the_sum(self, k):
        registry = self._sleepers(k)
        started = time.perf_counter()
        responses = registry.dispatch(make_state())
        wall = (time.perf_counter() - started) * 1000
        assert len(responses) == k
        assert 300 <= wall <= 450, f"k={k}: {wall:.0f} ms"

    def test_result_order_is_registry_order(self):
        registry = SkillRegistry()
        for name in ("zeta", "alpha", "mid"):
            registry.register(StaticSkill(name, 0.5, command=f"{name}-cmd"))
            registry.activate(name)
        responses = registry.dispatch(make_state())
        assert [r.skill for r in responses] == ["zeta", "alpha", "mid"]

    def test_throwing_skill_is_isolated(self):
        registry = SkillRegistry()
        registry.register(CrashSkill("crashy"))
        registry.register(StaticSkill("steady", 0.7, command="ok"))
        registry.activate("crashy")
        registry.activate("steady")
        responses = registry.dispatch(make_state())
        by_name = {r.skill: r for r in responses}
        assert by_name["crashy"].failed and by_name["crashy"].confidence == 0.0
        assert not by_name["steady"].failed and by_name["steady"].confidence == 0.7

    def test_hanging_skill_times_out_others_unaffected(self):
        registry = SkillRegistry()
        registry.register(SyntheticSkill("hangs", 1200), timeout_ms=300)
        registry.register(StaticSkill("steady", 0.6, command="ok"), timeout_ms=2000)
        registry.activate("hangs")
        registry.activate("steady")
        started = time.perf_counter()
        responses = registry.dispatch(make_state())
        wall = (time.perf_counter() - started) * 1000
        by_name = {r.skill: r for r in responses}
        assert by_name["hangs"].failed
        assert 250 <= by_name["hangs"].latency_ms <= 450
        assert not by_name["steady"].failed
        assert wall < 600

    def test_deadline_below_minimum_rejected(self):
        registry = self._sleepers(1)
        with pytest.raises(ValueError):
            registry.dispatch(make_state(), deadline_ms=10)


class TestWireProtocol:
    def test_event_line_embeds_state_json(self):
        line = event_line(make_state(user_input="ls"))
        payload = json.loads(line)
        assert payload["type"] == "event"
        assert payload["state"]["user_input"] == "ls"
        assert "\n" not in line

    def test_hello_line(self):
        assert json.loads(hello_line()) == {"type": "hello", "protocol": 1}

    def test_parse_response_roundtrip(self):
        line = json.dumps({
            "type": "response", "confidence": 0.8,
            "actions": [{"suggested_command": "ls", "description": "list",
                         "explanation": None, "confidence": 0.8, "execute": False}],
        })
        seq = parse_response(line, "remote")
        assert seq.head.suggested_command == "ls"
        assert seq.origin_skill == "remote"

    def test_parse_rejects_garbage_and_wrong_types(self):
        with pytest.raises(SkillError):
            parse_response("not json", "s")
        with pytest.raises(SkillError):
            parse_response(json.dumps({"type": "event"}), "s")

    def test_empty_actions_mean_no_response(self):
        line = json.dumps({"type": "response", "confidence": 0.0, "actions": []})
        assert parse_response(line, "s") is None


class TestExternalSkills:
    def _registry(self, mode=None, timeout_ms=1500):
        registry = SkillRegistry()
        registry.register_external("echo-ai", fixture_entry(mode), timeout_ms=timeout_ms)
        return registry

    def test_handshake_and_roundtrip(self):
        registry = self._registry()
        registry.activate("echo-ai")
        try:
            responses = registry.dispatch(make_state(user_input="echo-ai hello world"))
            assert len(responses) == 1
            assert responses[0].confidence == 1.0
            assert responses[0].result.head.suggested_command == "echo hello world"
            quiet = registry.dispatch(make_state(user_input="ls"))
            assert quiet[0].confidence == 0.0 and quiet[0].result is None
        finally:
            registry.deactivate("echo-ai")

    def test_process_that_exits_immediately_fails_handshake(self):
        registry = self._registry("crash")
        with pytest.raises(ActivationError, match="handshake"):
            registry.activate("echo-ai")

    def test_no_handshake_times_out(self):
        registry = self._registry("no-handshake")
        with pytest.raises(ActivationError, match="handshake"):
            registry.activate("echo-ai")

    def test_garbage_response_reported_as_failure(self):
        registry = self._registry("garbage")
        registry.activate("echo-ai")
        try:
            responses = registry.dispatch(make_state())
            assert responses[0].failed
        finally:
            registry.deactivate("echo-ai")

    def test_silent_skill_fails_at_its_timeout(self):
        registry = self._registry("silent", timeout_ms=400)
        registry.activate("echo-ai")
        try:
            responses = registry.dispatch(make_state())
            assert responses[0].failed
            assert 350 <= responses[0].latency_ms <= 550
        finally:
            registry.deactivate("echo-ai")

    def test_crash_restarts_once_then_deactivates(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TMPDIR", str(tmp_path))  # fresh crash-once marker
        registry = self._registry("crash-once")
        registry.activate("echo-ai")
        responses = registry.dispatch(make_state(user_input="echo-ai hi"))
        # first event crashed the process; the runtime restarted it and retried
        assert responses[0].confidence == 1.0
        assert registry.is_active("echo-ai")
        registry.deactivate("echo-ai")


class InProcessEcho(Skill):
    """The same echo contract, implemented in process."""

    name = "echo-ai"

    def on_event(self, state):
        return parse_response(_echo_response(state.user_input), self.name)


def _echo_response(user_input: str) -> str:
    if user_input.startswith("echo-ai "):
        rest = user_input[len("echo-ai "):]
        return json.dumps({
            "type": "response", "confidence": 1.0,
            "actions": [{"suggested_command": f"echo {rest}", "description": f"echo {rest}",
                         "explanation": "echoes the text back through the shell",
                         "confidence": 1.0, "execute": False}],
        })
    return json.dumps({"type": "response", "confidence": 0.0, "actions": []})


@pytest.fixture(params=["in_process", "external"])
def echo_registry(request):
    """The observational-equivalence harness: one logical skill, two homes."""
    registry = SkillRegistry()
    if request.param == "in_process":
        registry.register(InProcessEcho())
    else:
        registry.register_external("echo-ai", fixture_entry())
    registry.activate("echo-ai")
    yield registry
    registry.deactivate("echo-ai")


class TestObservationalEquivalence:
    def test_suggests_echo_for_prefixed_input(self, echo_registry):
        responses = echo_registry.dispatch(make_state(user_input="echo-ai ping"))
        assert responses[0].confidence == 1.0
        assert responses[0].result.head.suggested_command == "echo ping"
        assert responses[0].result.head.execute is False

    def test_zero_confidence_otherwise(self, echo_registry):
        responses = echo_registry.dispatch(make_state(user_input="ls -la"))
        assert responses[0].confidence == 0.0
        assert responses[0].result is None
        assert not responses[0].failed

    def test_answers_every_phase(self, echo_registry):
        for phase in (Phase.PRE_EXECUTION, Phase.POST_EXECUTION):
            responses = echo_registry.dispatch(make_state(user_input="echo-ai x", phase=phase))
            assert responses[0].confidence == 1.0
