"""System-footprint harness: latency of core paths versus number of skills.

Three measured scenarios mirror the platform's cost structure:

* ``core_list``            - the ``clai skills`` meta command, core only
* ``activate``             - activating a built-in skill (model builds included)
* ``dispatch_with_skills`` - event fan-out to n synthetic skills
* ``attribution``          - a full command pipeline with one slow skill,
                             for skill-versus-platform attribution

Wall-clock percentiles over >= 10 runs with 2 discarded warmups; memory is
the resident set size read from /proc (no profiler dependencies).
"""

from __future__ import annotations

import argparse
import io
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Config
from .events import ActionSequence, Phase, TerminalState
from .runtime import Skill, SkillRegistry
from .terminal import Directive, DirectiveKind, Session

WARMUP_RUNS = 2
DEFAULT_COMPUTE_MS = 300
ATTRIBUTION_SKILL_MS = 1600
ATTRIBUTION_COMMAND = "sleep 0.4"

SCENARIOS = ("core_list", "activate", "dispatch_with_skills", "attribution")


class SyntheticSkill(Skill):
    """A mock skill that burns a configurable amount of time per event."""

    def __init__(self, name: str, compute_ms: int, phase: Phase | None = Phase.PRE_EXECUTION):
        self.name = name
        self.compute_ms = compute_ms
        self.phase = phase
        self.last_elapsed_ms = 0.0

    def on_event(self, state: TerminalState) -> ActionSequence | None:
        if self.phase is None or state.phase is self.phase:
            started = time.perf_counter()
            time.sleep(self.compute_ms / 1000.0)
            self.last_elapsed_ms = (time.perf_counter() - started) * 1000
        return None


@dataclass
class LatencySample:
    scenario: str
    n_skills: int
    wall_ms: list[float]
    rss_kib: int
    skill_ms: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.wall_ms:
            raise ValueError("a sample needs at least one measurement")
        if any(w < 0 for w in self.wall_ms):
            raise ValueError("wall times cannot be negative")

    def p50(self) -> float:
        return float(np.percentile(self.wall_ms, 50))

    def p95(self) -> float:
        return float(np.percentile(self.wall_ms, 95))


def rss_kib() -> int:
    try:
        for line in Path("/proc/self/status").read_text().splitlines():
            if line.startswith("VmRSS:"):
                return int(line.split()[1])
    except OSError:
        pass
    import resource

    return int(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss)


def _mock_registry(n_skills: int, compute_ms: int, activate: bool = True) -> SkillRegistry:
    registry = SkillRegistry()
    for i in range(n_skills):
        registry.register(SyntheticSkill(f"mock{i}", compute_ms), timeout_ms=max(2000, compute_ms * 3))
    if activate:
        for i in range(n_skills):
            registry.activate(f"mock{i}")
    return registry


def _null_session(registry: SkillRegistry) -> Session:
    return Session(
        registry,
        config=Config(active_skills=[]),
        stdin=io.StringIO(),
        stdout=io.StringIO(),
    )


def _probe_state(session: Session) -> TerminalState:
    return session.make_state("clai-profile probe", Phase.PRE_EXECUTION)


def time_scenario(
    scenario: str,
    n_skills: int,
    runs: int,
    compute_ms: int = DEFAULT_COMPUTE_MS,
    command: str = ATTRIBUTION_COMMAND,
) -> LatencySample:
    if runs < 10:
        raise ValueError("need at least 10 measured runs")
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")

    wall: list[float] = []
    skill_ms: list[float] = []

    if scenario == "core_list":
        registry = _mock_registry(n_skills, compute_ms, activate=False)
        session = _null_session(registry)
        for i in range(runs + WARMUP_RUNS):
            started = time.perf_counter()
            session.handle_line("clai skills")
            wall.append((time.perf_counter() - started) * 1000)
    elif scenario == "activate":
        from .skills import builtin_skills

        registry = SkillRegistry()
        for skill in builtin_skills():
            registry.register(skill)
        target = "manx"  # heaviest built-in activation: corpus ingest + model build
        for i in range(runs + WARMUP_RUNS):
            started = time.perf_counter()
            registry.activate(target)
            wall.append((time.perf_counter() - started) * 1000)
            registry.deactivate(target)
    elif scenario == "dispatch_with_skills":
        registry = _mock_registry(max(1, n_skills), compute_ms)
        session = _null_session(registry)
        state = _probe_state(session)
        for i in range(runs + WARMUP_RUNS):
            started = time.perf_counter()
            responses = registry.dispatch(state)
            wall.append((time.perf_counter() - started) * 1000)
            skill_ms.append(max((r.latency_ms for r in responses), default=0))
    else:  # attribution: one slow skill + a real command through the pipeline
        registry = _mock_registry(max(1, n_skills), compute_ms or ATTRIBUTION_SKILL_MS)
        mocks = [registry.get_skill(name) for name in registry.names()]
        session = _null_session(registry)
        directive = Directive(DirectiveKind.PASS_THROUGH, command)
        for i in range(runs + WARMUP_RUNS):
            started = time.perf_counter()
            session.run_pipeline(directive)
            wall.append((time.perf_counter() - started) * 1000)
            skill_ms.append(max(m.last_elapsed_ms for m in mocks))

    return LatencySample(
        scenario=scenario,
        n_skills=n_skills,
        wall_ms=wall[WARMUP_RUNS:],
        rss_kib=rss_kib(),
        skill_ms=skill_ms[WARMUP_RUNS:] if skill_ms else [],
    )


def attribute(sample: LatencySample, skill_timings: list[float] | None = None) -> dict[str, float]:
    """Fraction of end-to-end time spent inside skills versus the platform.

    Skills run in parallel, so the skill share is measured against the
    slowest skill, not the sum.
    """
    timings = skill_timings if skill_timings is not None else sample.skill_ms
    total = sample.p50()
    slowest = max(timings, default=0.0)
    skill_fraction = min(1.0, slowest / total) if total > 0 else 0.0
    return {
        "scenario": sample.scenario,
        "total_p50_ms": total,
        "skill_ms": slowest,
        "skill_fraction": skill_fraction,
        "platform_fraction": 1.0 - skill_fraction,
    }


def emit_report(samples: list[LatencySample]) -> str:
    if not samples:
        raise ValueError("nothing to report")
    lines = ["scenario,n_skills,p50_ms,p95_ms,rss_kib"]
    for sample in sorted(samples, key=lambda s: (s.scenario, s.n_skills)):
        lines.append(
            f"{sample.scenario},{sample.n_skills},{sample.p50():.3f},{sample.p95():.3f},{sample.rss_kib}"
        )
    return "\n".join(lines) + "\n"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="clai-profile", description="latency/memory footprint harness")
    parser.add_argument("--scenario", choices=SCENARIOS, required=True)
    parser.add_argument("--skills", type=int, default=0, help="number of synthetic skills")
    parser.add_argument("--runs", type=int, default=20)
    parser.add_argument("--compute-ms", type=int, default=DEFAULT_COMPUTE_MS,
                        help="synthetic per-skill compute time")
    parser.add_argument("--command", default=ATTRIBUTION_COMMAND,
                        help="command executed by the attribution scenario")
    parser.add_argument("--csv", type=Path, default=None, help="write the CSV report here")
    args = parser.parse_args(argv)

    sample = time_scenario(args.scenario, args.skills, args.runs,
                           compute_ms=args.compute_ms, command=args.command)
    report = emit_report([sample])
    if args.csv:
        args.csv.write_text(report, encoding="utf-8")
    sys.stdout.write(report)
    if sample.skill_ms:
        shares = attribute(sample)
        sys.stdout.write(
            f"skill fraction: {shares['skill_fraction']:.2f} "
            f"(platform {shares['platform_fraction']:.2f})\n"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
