"""Man page explorer: answers natural-language questions from local man pages."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..events import Action, ActionSequence, Phase, TerminalState
from ..retrieval import Corpus, TfIdfModel, build_cached, cosine_rank, ingest_man_pages, man_sections
from ..runtime import Skill
from .known import KnownCommands

EXPLANATION_LINES = 5


def bundled_manpage_dir() -> Path:
    return Path(str(resources.files("clai.data").joinpath("manpages")))


class ManPageExplorerSkill(Skill):
    name = "manx"

    def __init__(
        self,
        corpus_dir: str | Path | None = None,
        cache_dir: str | Path | None = None,
        known: KnownCommands | None = None,
    ):
        self.corpus_dir = Path(corpus_dir) if corpus_dir else bundled_manpage_dir()
        self.cache_dir = cache_dir
        self.known = known or KnownCommands()
        self.corpus: Corpus | None = None
        self.model: TfIdfModel | None = None

    def activate(self) -> None:
        self.corpus = ingest_man_pages(self.corpus_dir)
        self.model = build_cached(self.corpus, self.cache_dir)

    def on_event(self, state: TerminalState) -> ActionSequence | None:
        if state.phase is not Phase.PRE_EXECUTION or self.model is None:
            return None
        tokens = state.user_input.split()
        if not tokens or tokens[0] in self.known:
            return None  # looks like a real command, not a question
        ranked = cosine_rank(state.user_input, self.model, 1)
        if not ranked:
            return None
        doc_id, score = ranked[0]
        if score <= 0.0:
            return None
        doc = self.corpus.get(doc_id)
        return ActionSequence(
            (
                Action(
                    description=f"command: {doc_id} - {doc.title}",
                    explanation=self._summary(doc.body),
                    confidence=score,
                    origin_skill=self.name,
                ),
            )
        )

    def _summary(self, body: str) -> str | None:
        lines = [l.strip() for l in man_sections(body).get("DESCRIPTION", []) if l.strip()]
        if not lines:
            return None
        return "\n".join(lines[:EXPLANATION_LINES])
