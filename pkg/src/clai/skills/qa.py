"""Q&A retrieval skills over the offline forum corpus.

``howdoi`` answers natural-language questions; ``helpme`` watches stderr and
fires after a failed command with the closest known answer. Both rank with
the shared TF-IDF core and damp confidence by 0.9: an indexed answer is never
as trustworthy as a deterministic translation.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..events import Action, ActionSequence, Phase, TerminalState
from ..retrieval import Corpus, TfIdfModel, build_cached, cosine_rank, ingest_qa
from ..runtime import Skill
from .known import KnownCommands

QA_CONFIDENCE_DAMP = 0.9


def bundled_qa_path() -> Path:
    return Path(str(resources.files("clai.data").joinpath("qa_posts.jsonl")))


class _QaBase(Skill):
    def __init__(self, corpus_path: str | Path | None = None, cache_dir: str | Path | None = None):
        self.corpus_path = Path(corpus_path) if corpus_path else bundled_qa_path()
        self.cache_dir = cache_dir
        self.corpus: Corpus | None = None
        self.model: TfIdfModel | None = None

    def activate(self) -> None:
        self.corpus = ingest_qa(self.corpus_path)
        self.model = build_cached(self.corpus, self.cache_dir)

    def _top_post(self, query: str) -> ActionSequence | None:
        if self.model is None:
            return None
        ranked = cosine_rank(query, self.model, 1)
        if not ranked:
            return None
        doc_id, score = ranked[0]
        if score <= 0.0:
            return None
        post = self.corpus.get(doc_id)
        description = post.title if post.answer is None else f"{post.title}\n{post.answer}"
        return ActionSequence(
            (
                Action(
                    description=description,
                    explanation=post.body,
                    confidence=score * QA_CONFIDENCE_DAMP,
                    origin_skill=self.name,
                ),
            )
        )


class HowDoISkill(_QaBase):
    name = "howdoi"

    def __init__(self, corpus_path=None, cache_dir=None, known: KnownCommands | None = None):
        super().__init__(corpus_path, cache_dir)
        self.known = known or KnownCommands()

    def on_event(self, state: TerminalState) -> ActionSequence | None:
        if state.phase is not Phase.PRE_EXECUTION:
            return None
        tokens = state.user_input.split()
        if not tokens or tokens[0] in self.known:
            return None
        return self._top_post(state.user_input)


class HelpMeSkill(_QaBase):
    name = "helpme"

    def on_event(self, state: TerminalState) -> ActionSequence | None:
        if state.phase is not Phase.POST_EXECUTION:
            return None
        if not state.previous_exit_code or not state.stderr_tail.strip():
            return None
        return self._top_post(state.stderr_tail)
