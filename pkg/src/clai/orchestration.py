"""Arbitration layer: picks at most one skill response per terminal event.

Four interchangeable patterns:

* ``max``        - highest confidence above a threshold
* ``threshold``  - max, with the threshold nudged by user feedback
* ``preference`` - max, after discarding responses dominated by a partial order
* ``bandit``     - LinUCB contextual bandit over the skill-confidence vector,
                   with a distinguished noop arm and warm-start profiles

The bandit uses disjoint per-arm linear models: for arm ``a`` with design
matrix ``A_a`` (ridge-initialized to the identity) and reward vector ``b_a``,
``theta_a = A_a^-1 b_a`` and the score of context ``x`` is
``theta_a . x + alpha * sqrt(x^T A_a^-1 x)``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .events import NOOP_SKILL, FeedbackEvent, SkillResponse, UserResponse

logger = logging.getLogger(__name__)

THRESHOLD_DELTA = 0.05
THRESHOLD_MIN = 0.1
THRESHOLD_MAX = 0.95
DEFAULT_THRESHOLD = 0.3
DEFAULT_ALPHA = 0.5
WARM_START_SAMPLES = 100

ORCHESTRATOR_MODES = ("max", "threshold", "preference", "bandit")


@dataclass(frozen=True)
class OrchestratorChoice:
    """Outcome of one arbitration round. ``chosen is None`` means noop."""

    chosen: SkillResponse | None
    mode: str
    rationale: str = ""
    confidence: float | None = None

    def record(self) -> str:
        """Canonical one-line JSON form, used for replay comparison."""
        return json.dumps(
            {
                "skill": self.chosen.skill if self.chosen else NOOP_SKILL,
                "confidence": self.confidence,
                "mode": self.mode,
            },
            sort_keys=True,
            separators=(",", ":"),
        )


def max_select(responses: list[SkillResponse], threshold: float) -> SkillResponse | None:
    """Highest-confidence response at or above ``threshold``; lexicographic
    skill name breaks ties; None when everything is below."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    best: SkillResponse | None = None
    for resp in responses:
        if resp.confidence < threshold:
            continue
        if best is None or resp.confidence > best.confidence or (
            resp.confidence == best.confidence and resp.skill < best.skill
        ):
            best = resp
    return best


def threshold_update(threshold: float, feedback: FeedbackEvent) -> float:
    """Bump the relevance threshold on rejection, relax it on acceptance."""
    if feedback.user_response is UserResponse.REJECTED:
        return min(threshold + THRESHOLD_DELTA, THRESHOLD_MAX)
    if feedback.user_response is UserResponse.ACCEPTED:
        return max(threshold - THRESHOLD_DELTA, THRESHOLD_MIN)
    return threshold


class PreferenceOrder:
    """A partial order over skills; must be acyclic."""

    def __init__(self, pairs: list[tuple[str, str]]):
        self.pairs = [(a, b) for a, b in pairs]
        self._succ: dict[str, set[str]] = {}
        for preferred, dispreferred in self.pairs:
            self._succ.setdefault(preferred, set()).add(dispreferred)
        self._check_acyclic()

    def _check_acyclic(self) -> None:
        visiting: set[str] = set()
        done: set[str] = set()

        def visit(node: str) -> None:
            if node in done:
                return
            if node in visiting:
                raise ValueError("preference order contains a cycle")
            visiting.add(node)
            for nxt in self._succ.get(node, ()):
                visit(nxt)
            visiting.discard(node)
            done.add(node)

        for node in list(self._succ):
            visit(node)

    def dominates(self, preferred: str, other: str) -> bool:
        """True when ``preferred`` precedes ``other`` in the transitive closure."""
        stack = [preferred]
        seen: set[str] = set()
        while stack:
            node = stack.pop()
            for nxt in self._succ.get(node, ()):
                if nxt == other:
                    return True
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return False


def preference_select(
    responses: list[SkillResponse], order: PreferenceOrder, threshold: float
) -> SkillResponse | None:
    """max_select after dropping responses dominated by another above-threshold
    response. Domination requires the dominator to actually be present."""
    above = [r for r in responses if r.confidence >= threshold]
    kept = [
        r
        for r in above
        if not any(q.skill != r.skill and order.dominates(q.skill, r.skill) for q in above)
    ]
    return max_select(kept, threshold)


# --- contextual bandit ---------------------------------------------------------


@dataclass
class BanditState:
    """Per-arm linear-payoff statistics over the skill-confidence context.

    Arm 0 is the noop arm. Context dimension ``d`` equals the number of
    registered skill slots and stays fixed for a session; skills registered
    later occupy fresh zero-initialized slots via ``grown``.
    """

    arm_names: list[str]
    slot_names: list[str]
    A: np.ndarray  # (n_arms, d, d)
    b: np.ndarray  # (n_arms, d)
    alpha: float = DEFAULT_ALPHA

    @classmethod
    def fresh(cls, skills: list[str], alpha: float = DEFAULT_ALPHA) -> BanditState:
        d = len(skills)
        n_arms = d + 1
        A = np.broadcast_to(np.eye(d), (n_arms, d, d)).copy()
        return cls(
            arm_names=[NOOP_SKILL] + list(skills),
            slot_names=list(skills),
            A=A,
            b=np.zeros((n_arms, d)),
            alpha=alpha,
        )

    @property
    def d(self) -> int:
        return len(self.slot_names)

    def arm_index(self, skill: str) -> int:
        return self.arm_names.index(skill)

    def theta(self, arm: int) -> np.ndarray:
        return np.linalg.solve(self.A[arm], self.b[arm])

    def copy(self) -> BanditState:
        return BanditState(
            arm_names=list(self.arm_names),
            slot_names=list(self.slot_names),
            A=self.A.copy(),
            b=self.b.copy(),
            alpha=self.alpha,
        )

    def grown(self, skills: list[str]) -> BanditState:
        """Re-dimension for a larger registry; existing statistics are kept in
        their original slots, new slots start zeroed (identity ridge)."""
        if skills[: self.d] != self.slot_names:
            raise ValueError("existing skill slots cannot be reordered")
        new = BanditState.fresh(skills, alpha=self.alpha)
        old_d = self.d
        for i, name in enumerate(self.arm_names):
            j = new.arm_index(name)
            new.A[j, :old_d, :old_d] = self.A[i]
            new.b[j, :old_d] = self.b[i]
        return new

    def to_json(self) -> str:
        return json.dumps(
            {
                "alpha": self.alpha,
                "d": self.d,
                "slots": self.slot_names,
                "arms": {
                    name: {"A": self.A[i].ravel().tolist(), "b": self.b[i].tolist()}
                    for i, name in enumerate(self.arm_names)
                },
                "arm_order": self.arm_names,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> BanditState:
        payload = json.loads(text)
        d = payload["d"]
        arm_names = payload["arm_order"]
        A = np.empty((len(arm_names), d, d))
        b = np.empty((len(arm_names), d))
        for i, name in enumerate(arm_names):
            A[i] = np.asarray(payload["arms"][name]["A"], dtype=np.float64).reshape(d, d)
            b[i] = np.asarray(payload["arms"][name]["b"], dtype=np.float64)
        return cls(arm_names=arm_names, slot_names=payload["slots"], A=A, b=b, alpha=payload["alpha"])


def bandit_select(context: np.ndarray, state: BanditState) -> int:
    """LinUCB arm choice; ties go to the lowest arm index (noop is 0)."""
    x = np.asarray(context, dtype=np.float64)
    if x.shape != (state.d,):
        raise ValueError(f"context must have dimension {state.d}, got {x.shape}")
    best_arm = 0
    best_score = -np.inf
    for arm in range(len(state.arm_names)):
        theta = np.linalg.solve(state.A[arm], state.b[arm])
        spread = float(x @ np.linalg.solve(state.A[arm], x))
        score = float(theta @ x) + state.alpha * np.sqrt(max(spread, 0.0))
        if score > best_score:
            best_score = score
            best_arm = arm
    return best_arm


def bandit_update(state: BanditState, context: np.ndarray, arm: int, reward: float) -> BanditState:
    """Rank-1 update of the chosen arm; other arms untouched."""
    if not 0.0 <= reward <= 1.0:
        raise ValueError("reward must lie in [0, 1]")
    x = np.asarray(context, dtype=np.float64)
    if x.shape != (state.d,):
        raise ValueError(f"context must have dimension {state.d}, got {x.shape}")
    new = state.copy()
    new.A[arm] += np.outer(x, x)
    new.b[arm] += reward * x
    return new


def indirect_similarity(a: str, b: str) -> float:
    """Normalized Levenshtein similarity: 1 - distance / max length."""
    if not a or not b:
        raise ValueError("similarity is defined for non-empty strings")
    return 1.0 - kernels.levenshtein(a, b) / max(len(a), len(b))


def reward_from_feedback(feedback: FeedbackEvent) -> float | None:
    """Map user feedback to a bandit reward; None means no update."""
    if feedback.user_response is UserResponse.ACCEPTED:
        return 1.0
    if feedback.user_response is UserResponse.REJECTED:
        return 0.0
    if feedback.user_response is UserResponse.EXPLAINED:
        return None
    return feedback.indirect_similarity


# --- warm-start profiles ---------------------------------------------------------

WARM_START_PROFILES = ("ignore-clai", "max-orchestrator", "ignore-skill", "prefer-skill")


@dataclass(frozen=True)
class WarmStartSpec:
    profile: str
    skill: str | None = None
    over: str | None = None

    @classmethod
    def parse(cls, value) -> WarmStartSpec:
        if isinstance(value, WarmStartSpec):
            return value
        if isinstance(value, str):
            parts = value.split(":")
            return cls(
                parts[0],
                parts[1] if len(parts) > 1 else None,
                parts[2] if len(parts) > 2 else None,
            )
        if isinstance(value, dict):
            return cls(value["profile"], value.get("skill"), value.get("over"))
        raise ValueError(f"cannot parse warm-start spec from {value!r}")


def _one_hot(d: int, slot: int) -> np.ndarray:
    x = np.zeros(d)
    x[slot] = 1.0
    return x


def warm_start(spec, skills: list[str], alpha: float = DEFAULT_ALPHA,
               samples: int = WARM_START_SAMPLES) -> BanditState:
    """Pre-train a bandit so it exhibits a named behavior before any feedback.

    All pre-training flows through ``bandit_update`` with one-hot (and, for
    prefer-skill, two-hot) contexts and rewards in [0, 1]. The per-slot sample
    counts are chosen so that every plain arm ends up with theta exactly
    ``n/(n+1) * e_slot``; uniform shrinkage keeps cross-arm comparisons exact.
    """
    spec = WarmStartSpec.parse(spec)
    if spec.profile not in WARM_START_PROFILES:
        raise ValueError(f"unknown warm-start profile {spec.profile!r}")
    for name in (spec.skill, spec.over):
        if name is not None and name not in skills:
            raise ValueError(f"warm-start names unregistered skill {name!r}")

    state = BanditState.fresh(skills, alpha=alpha)
    d = state.d
    if d == 0:
        return state
    n = max(1, samples // d)
    if spec.profile == "prefer-skill":
        # The demoted arm consumes 3n-2 samples; keep every arm within budget.
        n = min(n, max(1, (samples + 2) // 3))

    def train(arm: int, context: np.ndarray, reward: float, times: int) -> None:
        nonlocal state
        for _ in range(times):
            state = bandit_update(state, context, arm, reward)

    if spec.profile == "ignore-clai":
        for slot in range(d):
            train(0, _one_hot(d, slot), 1.0, n)
            for arm in range(1, d + 1):
                train(arm, _one_hot(d, slot), 0.0, n)
        return state

    if spec.profile in ("max-orchestrator", "ignore-skill"):
        if spec.profile == "ignore-skill" and spec.skill is None:
            raise ValueError("ignore-skill needs a skill name")
        ignored = state.arm_index(spec.skill) if spec.profile == "ignore-skill" else None
        for slot in range(d):
            train(0, _one_hot(d, slot), 0.0, n)
            for arm in range(1, d + 1):
                hit = (arm - 1 == slot) and arm != ignored
                train(arm, _one_hot(d, slot), 1.0 if hit else 0.0, n)
        return state

    # prefer-skill: the preferred skill s1 keeps a plain arm; the demoted
    # skill s2 is trained so theta_s2 = n/(n+1)*e_s2 - (n-1)/(n+1)*e_s1,
    # i.e. s2 must out-confidence s1 by roughly a 2x margin to be chosen.
    if spec.skill is None or spec.over is None:
        raise ValueError("prefer-skill needs both a preferred and a demoted skill")
    if spec.skill == spec.over:
        raise ValueError("prefer-skill needs two distinct skills")
    s1_slot = skills.index(spec.skill)
    s2_slot = skills.index(spec.over)
    s2_arm = state.arm_index(spec.over)
    for slot in range(d):
        train(0, _one_hot(d, slot), 0.0, n)
        for arm in range(1, d + 1):
            if arm == s2_arm:
                continue
            train(arm, _one_hot(d, slot), 1.0 if arm - 1 == slot else 0.0, n)
    train(s2_arm, _one_hot(d, s2_slot), 1.0, 2 * n - 1)
    train(s2_arm, _one_hot(d, s1_slot) + _one_hot(d, s2_slot), 0.0, n - 1)
    return state


# --- orchestrator front-ends ------------------------------------------------------


def make_context(responses: list[SkillResponse], slot_names: list[str]) -> np.ndarray:
    by_skill = {r.skill: r.confidence for r in responses}
    return np.array([by_skill.get(name, 0.0) for name in slot_names])


def _actionable(responses: list[SkillResponse]) -> list[SkillResponse]:
    return [r for r in responses if r.result is not None and not r.failed]


class Orchestrator:
    """Base arbitration interface; subclasses adapt on ``observe``."""

    mode = "base"

    def select(self, responses: list[SkillResponse], command_id: int = 0) -> OrchestratorChoice:
        raise NotImplementedError

    def observe(self, feedback: FeedbackEvent) -> None:
        return None

    def state_json(self) -> str:
        return "{}"

    def _choice(self, chosen: SkillResponse | None, rationale: str) -> OrchestratorChoice:
        return OrchestratorChoice(
            chosen=chosen,
            mode=self.mode,
            rationale=rationale,
            confidence=chosen.confidence if chosen else None,
        )


class MaxOrchestrator(Orchestrator):
    mode = "max"

    def __init__(self, threshold: float = DEFAULT_THRESHOLD):
        self.threshold = threshold

    def select(self, responses, command_id=0):
        chosen = max_select(_actionable(responses), self.threshold)
        return self._choice(chosen, f"max over threshold {self.threshold:.2f}")

    def state_json(self) -> str:
        return json.dumps({"threshold": self.threshold})


class ThresholdOrchestrator(MaxOrchestrator):
    mode = "threshold"

    def observe(self, feedback: FeedbackEvent) -> None:
        before = self.threshold
        self.threshold = threshold_update(self.threshold, feedback)
        if self.threshold != before:
            logger.debug("threshold %0.2f -> %0.2f", before, self.threshold)


class PreferenceOrchestrator(Orchestrator):
    mode = "preference"

    def __init__(self, order: PreferenceOrder, threshold: float = DEFAULT_THRESHOLD):
        self.order = order
        self.threshold = threshold

    def select(self, responses, command_id=0):
        chosen = preference_select(_actionable(responses), self.order, self.threshold)
        return self._choice(chosen, "preference-filtered max")

    def state_json(self) -> str:
        return json.dumps({"threshold": self.threshold, "pairs": self.order.pairs})


class BanditOrchestrator(Orchestrator):
    mode = "bandit"

    def __init__(self, state: BanditState):
        self.state = state
        self._pending: dict[int, tuple[np.ndarray, int]] = {}

    def select(self, responses, command_id=0):
        context = make_context(responses, self.state.slot_names)
        arm = bandit_select(context, self.state)
        self._pending[command_id] = (context, arm)
        while len(self._pending) > 128:  # decisions that never got feedback
            self._pending.pop(next(iter(self._pending)))
        name = self.state.arm_names[arm]
        if arm == 0:
            return self._choice(None, "bandit chose noop")
        chosen = next((r for r in _actionable(responses) if r.skill == name), None)
        if chosen is None:
            return self._choice(None, f"bandit arm {name} had no response")
        return self._choice(chosen, f"bandit arm {name}")

    def observe(self, feedback: FeedbackEvent) -> None:
        pending = self._pending.pop(feedback.command_id, None)
        if pending is None:
            return
        reward = reward_from_feedback(feedback)
        if reward is None:
            return
        context, arm = pending
        self.state = bandit_update(self.state, context, arm, reward)

    def state_json(self) -> str:
        return self.state.to_json()


def build_orchestrator(
    mode: str,
    skills: list[str],
    threshold: float = DEFAULT_THRESHOLD,
    preference_pairs: list[tuple[str, str]] | None = None,
    warm_start_spec=None,
    alpha: float = DEFAULT_ALPHA,
    bandit_state: BanditState | None = None,
) -> Orchestrator:
    if mode == "max":
        return MaxOrchestrator(threshold)
    if mode == "threshold":
        return ThresholdOrchestrator(threshold)
    if mode == "preference":
        return PreferenceOrchestrator(PreferenceOrder(preference_pairs or []), threshold)
    if mode == "bandit":
        if bandit_state is not None:
            state = bandit_state if bandit_state.slot_names == skills else bandit_state.grown(skills)
        elif warm_start_spec is not None:
            state = warm_start(warm_start_spec, skills, alpha=alpha)
        else:
            state = BanditState.fresh(skills, alpha=alpha)
        return BanditOrchestrator(state)
    raise ValueError(f"unknown orchestrator mode {mode!r}; expected one of {ORCHESTRATOR_MODES}")
