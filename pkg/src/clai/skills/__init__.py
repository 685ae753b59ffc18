"""Reference skills: typo fixing, man page Q&A, error Q&A, and NL translation."""

from __future__ import annotations

from .fixit import FixitSkill
from .known import KnownCommands
from .manx import ManPageExplorerSkill
from .nlc2cmd import Nlc2CmdSkill
from .qa import HelpMeSkill, HowDoISkill

BUILTIN_SKILL_NAMES = ("fixit", "manx", "helpme", "howdoi", "nlc2cmd")


def builtin_skills(cache_dir=None, known: KnownCommands | None = None):
    """Instantiate the full built-in skill set sharing one known-command set."""
    known = known or KnownCommands()
    return [
        FixitSkill(known=known),
        ManPageExplorerSkill(cache_dir=cache_dir, known=known),
        HelpMeSkill(cache_dir=cache_dir),
        HowDoISkill(cache_dir=cache_dir, known=known),
        Nlc2CmdSkill(),
    ]
