"""clai: an instrumented shell wrapper with pluggable AI skills."""

__version__ = "0.1.0"

from .events import (
    Action,
    ActionSequence,
    FeedbackEvent,
    Phase,
    SkillDescriptor,
    SkillResponse,
    TerminalState,
)
from .runtime import Skill, SkillRegistry

__all__ = [
    "Action",
    "ActionSequence",
    "FeedbackEvent",
    "Phase",
    "Skill",
    "SkillDescriptor",
    "SkillRegistry",
    "SkillResponse",
    "TerminalState",
    "__version__",
]
