import json
import random

import numpy as np
import pytest

from clai.orchestration import (
    BanditOrchestrator,
    BanditState,
    WarmStartSpec,
    bandit_select,
    bandit_update,
    make_context,
    warm_start,
)
from clai.events import FeedbackEvent, UserResponse

from conftest import make_response

SKILLS = ["fixit", "manx", "nlc2cmd"]


# --- the independent oracle: naive Gaussian elimination ----------------------------


def oracle_solve(A, b):
    """Solve A x = b by Gaussian elimination with partial pivoting, pure Python."""
    n = len(b)
    M = [[float(A[i][j]) for j in range(n)] + [float(b[i])] for i in range(n)]
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(M[r][col]))
        M[col], M[pivot] = M[pivot], M[col]
        div = M[col][col]
        for j in range(col, n + 1):
            M[col][j] /= div
        for r in range(n):
            if r != col and M[r][col] != 0.0:
                factor = M[r][col]
                for j in range(col, n + 1):
                    M[r][j] -= factor * M[col][j]
    return [M[i][n] for i in range(n)]


def oracle_cholesky_ok(A):
    """Cholesky by hand; returns False when A is not positive definite."""
    n = len(A)
    L = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1):
            acc = sum(L[i][k] * L[j][k] for k in range(j))
            if i == j:
                value = A[i][i] - acc
                if value <= 0:
                    return False
                L[i][j] = value ** 0.5
            else:
                L[i][j] = (A[i][j] - acc) / L[j][j]
    return True


class TestBanditBasics:
    def test_fresh_state_has_identity_design_matrices(self):
        state = BanditState.fresh(SKILLS)
        assert state.d == 3 and len(state.arm_names) == 4
        for arm in range(4):
            assert np.array_equal(state.A[arm], np.eye(3))
            assert np.array_equal(state.b[arm], np.zeros(3))

    def test_fresh_state_ties_break_to_noop(self):
        state = BanditState.fresh(["a", "b"], alpha=0.5)
        assert bandit_select(np.array([0.7, 0.4]), state) == 0

    def test_dimension_mismatch_rejected(self):
        state = BanditState.fresh(SKILLS)
        with pytest.raises(ValueError):
            bandit_select(np.array([0.5, 0.5]), state)

    def test_update_touches_only_the_chosen_arm(self):
        state = BanditState.fresh(SKILLS)
        x = np.array([0.5, 0.1, 0.9])
        new = bandit_update(state, x, arm=2, reward=0.7)
        assert np.array_equal(new.A[1], np.eye(3))
        assert np.array_equal(new.A[2], np.eye(3) + np.outer(x, x))
        assert np.allclose(new.b[2], 0.7 * x)
        # the original state is untouched
        assert np.array_equal(state.A[2], np.eye(3))

    def test_zero_reward_leaves_b_unchanged(self):
        state = BanditState.fresh(SKILLS)
        x = np.array([0.2, 0.3, 0.4])
        new = bandit_update(state, x, arm=1, reward=0.0)
        assert np.array_equal(new.b[1], np.zeros(3))
        assert not np.array_equal(new.A[1], np.eye(3))

    def test_reward_outside_unit_interval_rejected(self):
        state = BanditState.fresh(SKILLS)
        with pytest.raises(ValueError):
            bandit_update(state, np.zeros(3), 0, 1.5)


class TestBanditNumerics:
    def test_design_matrices_stay_spd_after_arbitrary_updates(self):
        rng = random.Random(31)
        state = BanditState.fresh(SKILLS)
        for _ in range(200):
            x = np.array([rng.random() for _ in range(3)])
            state = bandit_update(state, x, rng.randrange(4), rng.random())
        for arm in range(4):
            assert oracle_cholesky_ok(state.A[arm].tolist())

    def test_theta_matches_gaussian_elimination_oracle_after_50_updates(self):
        rng = random.Random(1312)
        state = BanditState.fresh(SKILLS)
        for _ in range(50):
            x = np.array([rng.random() for _ in range(3)])
            state = bandit_update(state, x, rng.randrange(4), rng.random())
        for arm in range(4):
            theta = state.theta(arm)
            expected = oracle_solve(state.A[arm].tolist(), state.b[arm].tolist())
            assert np.max(np.abs(theta - np.array(expected))) < 1e-9


class TestWarmStartProfiles:
    def _contexts(self, d, n=100, seed=77):
        rng = random.Random(seed)
        return [np.array([rng.random() for _ in range(d)]) for _ in range(n)]

    def test_ignore_clai_always_noop(self):
        state = warm_start("ignore-clai", SKILLS, alpha=0.0)
        for x in self._contexts(3):
            assert bandit_select(x, state) == 0
        assert bandit_select(np.zeros(3), state) == 0

    def test_max_orchestrator_tracks_argmax_confidence(self):
        state = warm_start("max-orchestrator", SKILLS, alpha=0.0)
        for x in self._contexts(3):
            assert bandit_select(x, state) == int(np.argmax(x)) + 1
        assert bandit_select(np.array([0.2, 0.9, 0.0]), state) == 2
        assert bandit_select(np.zeros(3), state) == 0  # nothing confident: noop

    def test_ignore_skill_never_wins_max_otherwise(self):
        state = warm_start({"profile": "ignore-skill", "skill": "manx"}, SKILLS, alpha=0.0)
        manx_arm = state.arm_index("manx")
        for x in self._contexts(3):
            arm = bandit_select(x, state)
            assert arm != manx_arm
            others = [i for i in range(3) if i != 1]
            expected_slot = max(others, key=lambda i: x[i])
            assert arm == expected_slot + 1
        # even when the ignored skill is by far the most confident
        assert bandit_select(np.array([0.01, 0.99, 0.02]), state) != manx_arm

    def test_prefer_skill_wins_despite_lower_confidence(self):
        # two-skill registry, demoted skill more confident: preferred still wins
        state = warm_start("prefer-skill:manx:nlc2cmd", ["manx", "nlc2cmd"], alpha=0.0)
        assert state.arm_names[bandit_select(np.array([0.6, 0.9]), state)] == "manx"

    def test_prefer_skill_wins_whenever_at_least_as_confident(self):
        state = warm_start("prefer-skill:manx:nlc2cmd", ["manx", "nlc2cmd"], alpha=0.0)
        for x in self._contexts(2):
            if x[0] >= x[1] and x[0] > 0:
                assert state.arm_names[bandit_select(x, state)] == "manx", x

    def test_prefer_skill_demoted_can_win_when_preferred_is_silent(self):
        state = warm_start("prefer-skill:manx:nlc2cmd", ["manx", "nlc2cmd"], alpha=0.0)
        assert state.arm_names[bandit_select(np.array([0.0, 0.8]), state)] == "nlc2cmd"

    def test_prefer_skill_stays_max_confidence_for_third_parties(self):
        state = warm_start("prefer-skill:manx:nlc2cmd", SKILLS + ["howdoi"], alpha=0.0)
        # fixit slot 0, manx slot 1 (preferred), nlc2cmd slot 2 (demoted), howdoi 3
        x = np.array([0.95, 0.5, 0.4, 0.2])
        assert state.arm_names[bandit_select(x, state)] == "fixit"

    def test_unknown_profile_or_skill_rejected(self):
        with pytest.raises(ValueError):
            warm_start("be-nice", SKILLS)
        with pytest.raises(ValueError):
            warm_start({"profile": "ignore-skill", "skill": "nope"}, SKILLS)
        with pytest.raises(ValueError):
            warm_start("prefer-skill:manx:manx", SKILLS)

    def test_spec_parsing_forms(self):
        assert WarmStartSpec.parse("ignore-clai") == WarmStartSpec("ignore-clai")
        assert WarmStartSpec.parse("ignore-skill:manx") == WarmStartSpec("ignore-skill", "manx")
        assert WarmStartSpec.parse({"profile": "prefer-skill", "skill": "a", "over": "b"}) == \
            WarmStartSpec("prefer-skill", "a", "b")


class TestConvergence:
    def test_simulated_user_accepting_only_fixit(self):
        """Seed-fixed simulation: a user who accepts fixit's suggestions and is
        dissatisfied with everything else, silence included (reward 0 for any
        other arm, the noop arm too; without that signal a fresh state would
        tie on every context forever and never surface a suggestion)."""
        rng = random.Random(4242)
        state = BanditState.fresh(SKILLS, alpha=0.5)
        fixit_arm = state.arm_index("fixit")
        picks = []
        for _ in range(200):
            x = np.array([rng.random() for _ in range(3)])
            arm = bandit_select(x, state)
            picks.append(arm)
            state = bandit_update(state, x, arm, 1.0 if arm == fixit_arm else 0.0)
        last_50 = picks[-50:]
        rate = sum(1 for arm in last_50 if arm == fixit_arm) / len(last_50)
        assert rate >= 0.9, f"fixit selection rate over last 50 rounds: {rate:.2f}"


class TestPersistence:
    def test_json_round_trip_is_exact(self):
        rng = random.Random(9)
        state = warm_start("max-orchestrator", SKILLS)
        for _ in range(20):
            x = np.array([rng.random() for _ in range(3)])
            state = bandit_update(state, x, rng.randrange(4), rng.random())
        loaded = BanditState.from_json(state.to_json())
        assert loaded.arm_names == state.arm_names
        assert loaded.alpha == state.alpha
        assert np.array_equal(loaded.A, state.A)
        assert np.array_equal(loaded.b, state.b)

    def test_grown_state_keeps_statistics_and_zero_fills_new_slots(self):
        state = warm_start("max-orchestrator", ["a", "b"])
        grown = state.grown(["a", "b", "c"])
        assert grown.d == 3
        assert grown.arm_names == ["noop", "a", "b", "c"]
        assert np.array_equal(grown.A[1][:2, :2], state.A[1])
        assert np.array_equal(grown.A[3], np.eye(3))
        with pytest.raises(ValueError):
            state.grown(["b", "a", "c"])


class TestBanditOrchestrator:
    def test_select_then_feedback_updates_state(self):
        orch = BanditOrchestrator(warm_start("max-orchestrator", SKILLS, alpha=0.0))
        responses = [make_response("manx", 0.9), make_response("fixit", 0.2)]
        choice = orch.select(responses, command_id=1)
        assert choice.chosen.skill == "manx"
        before = orch.state.b.copy()
        orch.observe(FeedbackEvent(command_id=1, chosen_skill="manx",
                                   user_response=UserResponse.ACCEPTED))
        assert not np.array_equal(orch.state.b, before)

    def test_explained_feedback_changes_nothing(self):
        orch = BanditOrchestrator(warm_start("max-orchestrator", SKILLS, alpha=0.0))
        orch.select([make_response("manx", 0.9)], command_id=5)
        before = orch.state.b.copy()
        orch.observe(FeedbackEvent(command_id=5, chosen_skill="manx",
                                   user_response=UserResponse.EXPLAINED))
        assert np.array_equal(orch.state.b, before)

    def test_context_is_built_in_slot_order(self):
        responses = [make_response("nlc2cmd", 0.4), make_response("fixit", 0.9)]
        context = make_context(responses, SKILLS)
        assert context.tolist() == [0.9, 0.0, 0.4]
