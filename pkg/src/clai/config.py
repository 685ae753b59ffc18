"""User configuration and on-disk layout.

Everything lives under one home directory (default ``~/.clai``, overridable
via the ``CLAI_HOME`` environment variable):

    config.json              user configuration
    journal.jsonl            append-only feedback journal
    orchestrator_state.json  persisted orchestrator state (bandit matrices etc.)
    cache/                   TF-IDF model cache keyed by corpus content hash
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path

DEFAULT_ACTIVE_SKILLS = ["fixit", "manx", "helpme", "howdoi", "nlc2cmd"]


def clai_home() -> Path:
    return Path(os.environ.get("CLAI_HOME", str(Path.home() / ".clai")))


@dataclass
class ExternalSkillConfig:
    name: str
    entry: str
    timeout_ms: int = 1500


@dataclass
class Config:
    active_skills: list[str] = field(default_factory=lambda: list(DEFAULT_ACTIVE_SKILLS))
    orchestrator: str = "max"
    threshold: float = 0.3
    warm_start: str | dict | None = None
    auto_execute: bool = False
    skill_timeout_ms: int = 1500
    preference: list[list[str]] = field(default_factory=list)
    external_skills: list[ExternalSkillConfig] = field(default_factory=list)

    def to_json(self) -> str:
        payload = asdict(self)
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> Config:
        data = json.loads(text)
        externals = [ExternalSkillConfig(**e) for e in data.pop("external_skills", [])]
        known = {f for f in cls.__dataclass_fields__}
        config = cls(**{k: v for k, v in data.items() if k in known and k != "external_skills"})
        config.external_skills = externals
        return config


def load_config(home: Path | None = None) -> Config:
    path = (home or clai_home()) / "config.json"
    if not path.exists():
        return Config()
    return Config.from_json(path.read_text(encoding="utf-8"))


def save_config(config: Config, home: Path | None = None) -> Path:
    home = home or clai_home()
    home.mkdir(parents=True, exist_ok=True)
    path = home / "config.json"
    path.write_text(config.to_json() + "\n", encoding="utf-8")
    return path


def journal_path(home: Path | None = None) -> Path:
    return (home or clai_home()) / "journal.jsonl"


def orchestrator_state_path(home: Path | None = None) -> Path:
    return (home or clai_home()) / "orchestrator_state.json"


def cache_dir(home: Path | None = None) -> Path:
    return (home or clai_home()) / "cache"
