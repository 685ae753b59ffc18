"""Append-only feedback journal: one JSON FeedbackEvent per line."""

from __future__ import annotations

from pathlib import Path

from .events import FeedbackEvent, deserialize_feedback, serialize_feedback


class FeedbackJournal:
    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, event: FeedbackEvent) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(serialize_feedback(event) + "\n")

    def read_all(self) -> list[FeedbackEvent]:
        if not self.path.exists():
            return []
        return [
            deserialize_feedback(line)
            for line in self.path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
