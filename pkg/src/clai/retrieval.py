"""Offline retrieval core: tokenizer, TF-IDF model, cosine ranking, ingestion.

The model uses sublinear term frequency (1 + ln count) and smoothed inverse
document frequency (ln((1+N)/(1+df)) + 1), with every document vector
L2-normalized, so ranking scores are plain dot products in [0, 1].
Vocabulary order is lexicographic, which makes rebuilding a model from the
same corpus bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

logger = logging.getLogger(__name__)

# Fixed 50-word stopword list shipped with the artifact. Deliberately free of
# task verbs (list, find, show, search...) that carry intent in CLI queries.
STOPWORDS = frozenset(
    """
    a about after all an and any are as at be been before but by can could do
    does for from get has have how i if in into is it me my of on or should so
    some that the then this to was what when with would you
    """.split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop short tokens and stopwords."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= 2 and t not in STOPWORDS]


@dataclass(frozen=True)
class Doc:
    doc_id: str
    title: str
    body: str
    answer: str | None = None
    score: int | None = None


@dataclass(frozen=True)
class Corpus:
    docs: tuple[Doc, ...]

    def __post_init__(self) -> None:
        docs = tuple(self.docs)
        seen = set()
        for d in docs:
            if d.doc_id in seen:
                raise ValueError(f"duplicate doc_id {d.doc_id!r}")
            seen.add(d.doc_id)
            if not d.body:
                raise ValueError(f"doc {d.doc_id!r} has an empty body")
        object.__setattr__(self, "docs", docs)

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self):
        return iter(self.docs)

    def get(self, doc_id: str) -> Doc | None:
        for d in self.docs:
            if d.doc_id == doc_id:
                return d
        return None

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for d in self.docs:
            for part in (d.doc_id, d.title, d.body, d.answer or ""):
                h.update(part.encode("utf-8"))
                h.update(b"\x00")
        return h.hexdigest()


@dataclass
class TfIdfModel:
    """Vocabulary, idf weights, and L2-normalized document vectors (CSR)."""

    vocabulary: dict[str, int]
    idf: np.ndarray
    doc_ids: list[str]
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def vectorize(self, text: str) -> np.ndarray | None:
        """Dense L2-normalized tf-idf vector for a query, or None if nothing
        in the query survives the vocabulary."""
        counts = Counter(t for t in tokenize(text) if t in self.vocabulary)
        if not counts:
            return None
        vec = np.zeros(len(self.vocabulary), dtype=np.float64)
        for term, count in counts.items():
            idx = self.vocabulary[term]
            vec[idx] = (1.0 + math.log(count)) * self.idf[idx]
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            return None
        return vec / norm

    def weight(self, doc_index: int, term: str) -> float:
        """Stored weight of ``term`` in document ``doc_index`` (0 if absent)."""
        idx = self.vocabulary.get(term)
        if idx is None:
            return 0.0
        start, end = self.indptr[doc_index], self.indptr[doc_index + 1]
        row = self.indices[start:end]
        hit = np.searchsorted(row, idx)
        if hit < len(row) and row[hit] == idx:
            return float(self.data[start + hit])
        return 0.0


def build_tfidf(corpus: Corpus) -> TfIdfModel:
    if len(corpus) == 0:
        raise ValueError("cannot build a model over an empty corpus")
    doc_counts = [Counter(tokenize(d.body)) for d in corpus]
    vocabulary = {term: i for i, term in enumerate(sorted(set().union(*doc_counts)))}
    n_docs = len(corpus)
    df = np.zeros(len(vocabulary), dtype=np.int64)
    for counts in doc_counts:
        for term in counts:
            df[vocabulary[term]] += 1
    idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0

    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for counts in doc_counts:
        cols = sorted(vocabulary[t] for t in counts)
        weights = np.empty(len(cols), dtype=np.float64)
        inv = {vocabulary[t]: c for t, c in counts.items()}
        for k, col in enumerate(cols):
            weights[k] = (1.0 + math.log(inv[col])) * idf[col]
        norm = float(np.linalg.norm(weights))
        if norm > 0:
            weights /= norm
        indices.extend(cols)
        data.extend(weights.tolist())
        indptr.append(len(indices))
    return TfIdfModel(
        vocabulary=vocabulary,
        idf=idf,
        doc_ids=[d.doc_id for d in corpus],
        indptr=np.asarray(indptr, dtype=np.int64),
        indices=np.asarray(indices, dtype=np.int64),
        data=np.asarray(data, dtype=np.float64),
    )


def cosine_rank(query: str, model: TfIdfModel, k: int) -> list[tuple[str, float]]:
    """Top-k documents by cosine similarity; ties broken by doc_id ascending."""
    if k < 1:
        raise ValueError("k must be >= 1")
    vec = model.vectorize(query)
    if vec is None:
        return []
    scores = kernels.csr_dot_dense(model.indptr, model.indices, model.data, vec)
    scores = np.clip(scores, 0.0, 1.0)
    order = sorted(range(len(model.doc_ids)), key=lambda i: (-scores[i], model.doc_ids[i]))
    return [(model.doc_ids[i], float(scores[i])) for i in order[:k]]


# --- man page ingestion -------------------------------------------------------

_HEADER_RE = re.compile(r"^[A-Z][A-Z ]*$")


def man_sections(text: str) -> dict[str, list[str]]:
    """Split pre-rendered man page text on all-caps headers at line start."""
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in text.splitlines():
        if _HEADER_RE.match(line.strip()) and not line.startswith(" "):
            current = line.strip()
            sections.setdefault(current, [])
        elif current is not None:
            sections[current].append(line)
    return sections


def _man_title(text: str) -> str:
    sections = man_sections(text)
    for line in sections.get("NAME", []):
        if line.strip():
            return line.strip()
    for line in text.splitlines():
        if line.strip():
            return line.strip()
    return ""


def ingest_man_pages(directory: str | Path) -> Corpus:
    """Load plain-text man pages, one file per command, filename = command."""
    directory = Path(directory)
    docs = []
    for path in sorted(directory.iterdir()):
        if not path.is_file():
            continue
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            logger.warning("skipping unreadable man page %s: %s", path.name, exc)
            continue
        if not text.strip():
            logger.warning("skipping empty man page %s", path.name)
            continue
        docs.append(Doc(doc_id=path.stem, title=_man_title(text), body=text))
    if not docs:
        raise ValueError(f"no readable man pages under {directory}")
    return Corpus(tuple(docs))


# --- Q&A ingestion ------------------------------------------------------------


def ingest_qa(path: str | Path) -> Corpus:
    """Load a JSON-lines Q&A corpus: {id, title, question, answer, score}."""
    path = Path(path)
    by_id: dict[str, Doc] = {}
    malformed = 0
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            post = json.loads(line)
            doc = Doc(
                doc_id=str(post["id"]),
                title=str(post["title"]),
                body=f"{post['title']}\n{post['question']}",
                answer=str(post["answer"]),
                score=int(post["score"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            malformed += 1
            continue
        if doc.doc_id in by_id:
            logger.warning("duplicate post id %s at line %d; keeping the later one", doc.doc_id, lineno)
        by_id[doc.doc_id] = doc
    if malformed:
        logger.warning("skipped %d malformed line(s) in %s", malformed, path.name)
    if not by_id:
        raise ValueError(f"no valid posts in {path}")
    return Corpus(tuple(by_id.values()))


# --- model cache ----------------------------------------------------------------


def save_model(model: TfIdfModel, cache_dir: str | Path, fingerprint: str) -> Path:
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "vocabulary": model.vocabulary,
        "idf": model.idf.tolist(),
        "doc_ids": model.doc_ids,
        "indptr": model.indptr.tolist(),
        "indices": model.indices.tolist(),
        "data": model.data.tolist(),
    }
    target = cache_dir / f"tfidf-{fingerprint}.json"
    target.write_text(json.dumps(payload), encoding="utf-8")
    return target


def load_model(cache_dir: str | Path, fingerprint: str) -> TfIdfModel | None:
    target = Path(cache_dir) / f"tfidf-{fingerprint}.json"
    if not target.exists():
        return None
    try:
        payload = json.loads(target.read_text(encoding="utf-8"))
        return TfIdfModel(
            vocabulary=payload["vocabulary"],
            idf=np.asarray(payload["idf"], dtype=np.float64),
            doc_ids=payload["doc_ids"],
            indptr=np.asarray(payload["indptr"], dtype=np.int64),
            indices=np.asarray(payload["indices"], dtype=np.int64),
            data=np.asarray(payload["data"], dtype=np.float64),
        )
    except (json.JSONDecodeError, KeyError):
        logger.warning("discarding corrupt model cache %s", target.name)
        return None


def build_cached(corpus: Corpus, cache_dir: str | Path | None) -> TfIdfModel:
    if cache_dir is None:
        return build_tfidf(corpus)
    fingerprint = corpus.fingerprint()
    cached = load_model(cache_dir, fingerprint)
    if cached is not None:
        return cached
    model = build_tfidf(corpus)
    save_model(model, cache_dir, fingerprint)
    return model
