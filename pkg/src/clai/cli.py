"""The ``clai`` console entry point: wire up skills, config, and the REPL."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import cache_dir, clai_home, load_config, save_config
from .runtime import SkillError, SkillRegistry
from .skills import builtin_skills
from .terminal import Session


def build_registry(config, home: Path) -> SkillRegistry:
    registry = SkillRegistry()
    for skill in builtin_skills(cache_dir=cache_dir(home)):
        registry.register(skill, timeout_ms=config.skill_timeout_ms)
    for external in config.external_skills:
        registry.register_external(external.name, external.entry, external.timeout_ms)
    return registry


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="clai", description="an AI-assisted shell wrapper")
    parser.add_argument("--home", type=Path, default=None,
                        help="state directory (default: CLAI_HOME or ~/.clai)")
    parser.add_argument("--init", action="store_true",
                        help="write a default config.json and exit")
    args = parser.parse_args(argv)

    home = args.home or clai_home()
    home.mkdir(parents=True, exist_ok=True)
    config = load_config(home)
    if args.init:
        path = save_config(config, home)
        print(f"wrote {path}")
        return 0

    registry = build_registry(config, home)
    for name in config.active_skills:
        try:
            registry.activate(name)
        except SkillError as exc:
            print(f"clai: could not activate {name}: {exc}", file=sys.stderr)

    session = Session(registry, config=config, home=home)
    try:
        return session.run()
    except KeyboardInterrupt:
        session.save_state()
        registry.shutdown()
        return 130


if __name__ == "__main__":
    raise SystemExit(main())
