import logging
import random

import pytest
from hypothesis import given, strategies as st

from clai.events import (
    Action,
    ActionSequence,
    FeedbackEvent,
    Phase,
    SkillDescriptor,
    SkillResponse,
    TAIL_LIMIT_BYTES,
    TerminalState,
    UserResponse,
    clamp_confidence,
    deserialize_feedback,
    deserialize_state,
    serialize_feedback,
    serialize_state,
    truncate_tail,
)

from conftest import make_state, random_state


class TestSerializeState:
    def test_single_line_json_with_snake_case_fields(self):
        line = serialize_state(make_state(user_input="ls"))
        assert "\n" not in line
        assert '"user_input":"ls"' in line
        assert '"phase":"pre_execution"' in line

    def test_round_trip_examples(self):
        state = make_state(user_input="echo hi", stderr_tail="oops", exit_code=None)
        assert deserialize_state(serialize_state(state)) == state

    def test_round_trip_1000_randomized_states(self):
        rng = random.Random(1234)
        for _ in range(1000):
            state = random_state(rng)
            assert deserialize_state(serialize_state(state)) == state

    def test_absent_exit_code_is_omitted(self):
        line = serialize_state(make_state(exit_code=None))
        assert "previous_exit_code" not in line


class TestTailTruncation:
    def test_tail_of_10000_bytes_keeps_last_8192(self):
        text = "".join(chr(ord("a") + i % 26) for i in range(10000))
        state = make_state(stderr_tail=text)
        assert state.stderr_tail == text[-TAIL_LIMIT_BYTES:]
        assert len(state.stderr_tail.encode()) == TAIL_LIMIT_BYTES

    def test_truncation_keeps_most_recent_output(self):
        text = "old " * 4000 + "THE-END"
        assert truncate_tail(text).endswith("THE-END")

    def test_multibyte_boundary_stays_valid_utf8(self):
        text = "中" * 4000  # 3 bytes each; 12000 bytes total
        cut = truncate_tail(text)
        raw = cut.encode("utf-8")
        assert len(raw) <= TAIL_LIMIT_BYTES
        assert cut == text[-(len(raw) // 3):]

    def test_short_tail_untouched(self):
        assert truncate_tail("short") == "short"


class TestConfidenceClamping:
    def test_out_of_range_is_clamped_with_warning(self, caplog):
        with caplog.at_level(logging.WARNING):
            action = Action(description="x", confidence=1.7, origin_skill="bad")
        assert action.confidence == 1.0
        assert any("clamped" in r.message for r in caplog.records)

    def test_negative_clamped_to_zero(self):
        assert clamp_confidence(-3.0) == 0.0

    def test_nan_becomes_zero(self):
        assert clamp_confidence(float("nan")) == 0.0

    @given(st.floats(allow_nan=False, allow_infinity=False, width=32))
    def test_always_lands_in_unit_interval(self, value):
        assert 0.0 <= clamp_confidence(value) <= 1.0


class TestActionInvariants:
    def test_confident_action_needs_content(self):
        with pytest.raises(ValueError):
            Action(confidence=0.5)

    def test_zero_confidence_empty_action_is_fine(self):
        assert Action().confidence == 0.0


class TestActionSequence:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            ActionSequence(())

    def test_rejects_mixed_origins(self):
        a = Action(description="a", confidence=0.5, origin_skill="one")
        b = Action(description="b", confidence=0.5, origin_skill="two")
        with pytest.raises(ValueError):
            ActionSequence((a, b))

    def test_confidence_is_max_over_actions(self):
        seq = ActionSequence((
            Action(description="a", confidence=0.2, origin_skill="s"),
            Action(description="b", confidence=0.9, origin_skill="s"),
        ))
        assert seq.confidence == 0.9


class TestSkillResponse:
    def test_failed_forces_no_result_and_zero_confidence(self):
        with pytest.raises(ValueError):
            SkillResponse(skill="s", result=None, confidence=0.4, failed=True)

    def test_from_result_takes_sequence_confidence(self):
        seq = ActionSequence((Action(description="d", confidence=0.7, origin_skill="s"),))
        resp = SkillResponse.from_result("s", seq, latency_ms=12)
        assert resp.confidence == 0.7 and not resp.failed

    def test_from_no_result(self):
        resp = SkillResponse.from_result("s", None, latency_ms=3)
        assert resp.confidence == 0.0 and resp.result is None


class TestFeedbackEvent:
    def test_ignored_without_next_command_is_not_finalized(self):
        event = FeedbackEvent(command_id=1, user_response=UserResponse.IGNORED)
        assert not event.finalized()
        assert FeedbackEvent(command_id=1, user_response=UserResponse.IGNORED,
                             next_command="ls").finalized()

    def test_serde_round_trip(self):
        event = FeedbackEvent(
            command_id=7,
            chosen_skill="fixit",
            user_response=UserResponse.IGNORED,
            next_command="git status",
            indirect_similarity=0.8,
        )
        assert deserialize_feedback(serialize_feedback(event)) == event

    def test_optional_fields_omitted(self):
        line = serialize_feedback(FeedbackEvent(command_id=1, chosen_skill="noop",
                                                user_response=UserResponse.ACCEPTED))
        assert "next_command" not in line and "indirect_similarity" not in line


class TestSkillDescriptor:
    def test_requires_lowercase_name(self):
        with pytest.raises(ValueError):
            SkillDescriptor(name="Fixit")

    def test_minimum_timeout(self):
        with pytest.raises(ValueError):
            SkillDescriptor(name="slow", timeout_ms=10)

    def test_external_needs_entry(self):
        with pytest.raises(ValueError):
            SkillDescriptor(name="ext", kind="external")
