"""Knowledge tool: query decomposition, retrieval and cited summaries.

Lexical ranking is Okapi BM25 with k1 = 1.5 and b = 0.75:

    score(d, q) = sum over distinct query tokens t of
        idf(t) * tf(t, d) * (k1 + 1) / (tf(t, d) + k1 * (1 - b + b * |d| / avgdl))
    idf(t) = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))

Tokens are lowercased ``\\w+`` runs. Equal scores are ordered by doc_id.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import httpx
import numpy as np

K1 = 1.5
B = 0.75
SNIPPET_TOKENS = 60
MAX_SUB_QUERIES = 5
NO_SOURCES = "no sources found"

_WORD = re.compile(r"\w+")
_SPLIT = re.compile(r"\s*(?:;|\band also\b|\bas well as\b)\s*|(?<=[.?!])\s+", re.I)


class KnowledgeError(ValueError):
    pass


class KnowledgeUnavailable(KnowledgeError):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    body: str
    source: str = "local"


@dataclass(frozen=True)
class Hit:
    doc_id: str
    snippet: str
    score: float


@dataclass(frozen=True)
class KnowledgeAnswer:
    answer: str
    citations: tuple[Hit, ...]
    sub_queries: tuple[str, ...]

    def as_dict(self) -> dict:
        return {
            "answer": self.answer,
            "sub_queries": list(self.sub_queries),
            "citations": [{"doc_id": h.doc_id, "snippet": h.snippet, "score": h.score}
                          for h in self.citations],
        }


def tokens_with_spans(text: str) -> list[tuple[str, int, int]]:
    return [(m.group().lower(), m.start(), m.end()) for m in _WORD.finditer(text)]


def tokenize(text: str) -> list[str]:
    return [t for t, _, _ in tokens_with_spans(text)]


@dataclass
class Corpus:
    documents: list[Document] = field(default_factory=list)
    term_freqs: list[Counter] = field(default_factory=list)
    doc_lengths: list[int] = field(default_factory=list)
    postings: dict[str, list[int]] = field(default_factory=dict)

    @property
    def n_docs(self) -> int:
        return len(self.documents)

    @property
    def avg_length(self) -> float:
        return sum(self.doc_lengths) / len(self.doc_lengths) if self.doc_lengths else 0.0

    def df(self, token: str) -> int:
        return len(self.postings.get(token, ()))

    def idf(self, token: str) -> float:
        n, df = self.n_docs, self.df(token)
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def document(self, doc_id: str) -> Document:
        for d in self.documents:
            if d.doc_id == doc_id:
                return d
        raise KeyError(doc_id)

    def has(self, doc_id: str) -> bool:
        return any(d.doc_id == doc_id for d in self.documents)


def build_index(documents: Iterable[Document]) -> Corpus:
    corpus = Corpus()
    seen = set()
    for doc in documents:
        if doc.doc_id in seen:
            raise KnowledgeError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        toks = tokenize(doc.body)
        i = len(corpus.documents)
        corpus.documents.append(doc)
        tf = Counter(toks)
        corpus.term_freqs.append(tf)
        corpus.doc_lengths.append(len(toks))
        for t in tf:
            corpus.postings.setdefault(t, []).append(i)
    return corpus


def bm25_scores(corpus: Corpus, query: str) -> dict[int, float]:
    terms = list(dict.fromkeys(tokenize(query)))
    avgdl = corpus.avg_length or 1.0
    scores: dict[int, float] = {}
    for t in terms:
        idf = corpus.idf(t)
        for i in corpus.postings.get(t, ()):
            tf = corpus.term_freqs[i][t]
            norm = tf + K1 * (1 - B + B * corpus.doc_lengths[i] / avgdl)
            scores[i] = scores.get(i, 0.0) + idf * tf * (K1 + 1) / norm
    return scores


def best_snippet(corpus: Corpus, doc: Document, query: str, width: int = SNIPPET_TOKENS) -> str:
    """Window of at most ``width`` tokens with the largest summed idf of query-token hits."""
    toks = tokens_with_spans(doc.body)
    if not toks:
        return ""
    terms = set(tokenize(query))
    hits = [i for i, (t, _, _) in enumerate(toks) if t in terms]
    if len(toks) <= width:
        start = 0
    elif not hits:
        start = 0
    else:
        weight = [corpus.idf(toks[i][0]) for i in hits]
        best, start, j = -1.0, 0, 0
        total = 0.0
        for a in range(len(hits)):
            while j < len(hits) and hits[j] < hits[a] + width:
                total += weight[j]
                j += 1
            if total > best:
                best, start = total, hits[a]
            total -= weight[a]
    end = min(start + width, len(toks)) - 1
    return doc.body[toks[start][1]:toks[end][2]]


class Retriever(Protocol):
    def retrieve(self, sub_query: str, k: int) -> list[Hit]:
        ...


def retrieve(sub_query: str, corpus: Corpus, k: int) -> list[Hit]:
    if k < 1:
        raise KnowledgeError("k must be at least 1")
    scores = bm25_scores(corpus, sub_query)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], corpus.documents[kv[0]].doc_id))
    out = []
    for i, s in ranked[:k]:
        doc = corpus.documents[i]
        out.append(Hit(doc.doc_id, best_snippet(corpus, doc, sub_query), float(s)))
    return out


class LexicalRetriever:
    def __init__(self, corpus: Corpus):
        self.corpus = corpus

    def retrieve(self, sub_query: str, k: int) -> list[Hit]:
        return retrieve(sub_query, self.corpus, k)


class EmbeddingRetriever:
    """Cosine ranking over vectors from a remote embedding endpoint.

    The endpoint takes ``{"model": ..., "input": [texts]}`` and answers with
    either ``{"data": [{"embedding": [...]}, ...]}`` or a bare list of vectors.
    """

    def __init__(self, corpus: Corpus, endpoint: str, model: str, timeout: float = 30.0,
                 transport: httpx.BaseTransport | None = None):
        self.corpus = corpus
        self.endpoint = endpoint
        self.model = model
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self._doc_vectors: np.ndarray | None = None

    def _embed(self, texts: Sequence[str]) -> np.ndarray:
        try:
            resp = self._client.post(self.endpoint, json={"model": self.model, "input": list(texts)})
        except httpx.HTTPError as exc:
            raise KnowledgeUnavailable(f"embedding endpoint failed: {exc}") from exc
        if resp.status_code != 200:
            raise KnowledgeUnavailable(f"embedding endpoint returned {resp.status_code}: {resp.text}")
        try:
            body = resp.json()
            rows = [d["embedding"] for d in body["data"]] if isinstance(body, dict) else body
            vecs = np.asarray(rows, dtype=float)
        except (ValueError, KeyError, TypeError) as exc:
            raise KnowledgeUnavailable(f"malformed embedding response: {resp.text}") from exc
        if vecs.ndim != 2 or len(vecs) != len(texts):
            raise KnowledgeUnavailable(f"expected {len(texts)} vectors, got shape {vecs.shape}")
        return vecs

    def retrieve(self, sub_query: str, k: int) -> list[Hit]:
        if k < 1:
            raise KnowledgeError("k must be at least 1")
        if not self.corpus.documents:
            return []
        if self._doc_vectors is None:
            self._doc_vectors = self._embed([d.body for d in self.corpus.documents])
        q = self._embed([sub_query])[0]
        docs = self._doc_vectors
        denom = np.linalg.norm(docs, axis=1) * np.linalg.norm(q)
        with np.errstate(invalid="ignore", divide="ignore"):
            sims = np.where(denom > 0, docs @ q / denom, 0.0)
        order = sorted(range(len(sims)), key=lambda i: (-sims[i], self.corpus.documents[i].doc_id))
        return [Hit(self.corpus.documents[i].doc_id,
                    best_snippet(self.corpus, self.corpus.documents[i], sub_query), float(sims[i]))
                for i in order[:k]]


class WebSearchStub:
    """Stand-in for open web search: a fixed error, or a fixture corpus."""

    def __init__(self, fixture: Corpus | None = None, error: str = "web search is not available offline"):
        self.fixture = fixture
        self.error = error

    def retrieve(self, sub_query: str, k: int) -> list[Hit]:
        if self.fixture is None:
            raise KnowledgeUnavailable(self.error)
        return retrieve(sub_query, self.fixture, k)


# -- decomposition and answers ---------------------------------------------


class TextBackend(Protocol):
    def complete(self, system: str, user: str) -> str:
        ...


DECOMPOSE_SYSTEM = ("Split the user's question into at most 5 self-contained search queries. "
                    "Answer with one query per line and nothing else.")
SUMMARY_SYSTEM = ("Summarise the retrieved passages to answer the question. Cite passages by "
                  "their [doc_id]. Use only the passages given.")


def _clean(part: str) -> str:
    return part.strip().rstrip(".?!").strip()


def decompose_query(query: str, backend: TextBackend | None = None) -> list[str]:
    """1 to 5 sub-queries. Without a backend, split on ';', 'and also', 'as well as'
    and sentence ends; a plain 'and' never splits."""
    if not query or not query.strip():
        raise KnowledgeError("query is empty")
    if backend is not None:
        text = backend.complete(DECOMPOSE_SYSTEM, query)
        parts = [re.sub(r"^\s*(?:[-*]|\d+[.)])\s*", "", line) for line in text.splitlines()]
    else:
        parts = _SPLIT.split(query.strip())
    parts = [p for p in (_clean(x) for x in parts if x) if p]
    if not parts:
        return [query.strip()]
    if len(parts) > MAX_SUB_QUERIES:
        parts = parts[:MAX_SUB_QUERIES - 1] + [" ".join(parts[MAX_SUB_QUERIES - 1:])]
    return parts


def answer(query: str, retriever: Retriever | Corpus, backend: TextBackend | None = None,
           k: int = 3) -> KnowledgeAnswer:
    if isinstance(retriever, Corpus):
        retriever = LexicalRetriever(retriever)
    subs = decompose_query(query, backend)
    citations: list[Hit] = []
    per_sub: list[tuple[str, list[Hit]]] = []
    for sq in subs:
        hits = retriever.retrieve(sq, k)
        per_sub.append((sq, hits))
        for h in hits:
            if all((c.doc_id, c.snippet) != (h.doc_id, h.snippet) for c in citations):
                citations.append(h)
    if not citations:
        return KnowledgeAnswer(f"{NO_SOURCES} for: {query.strip()}", (), tuple(subs))
    if backend is not None:
        context = "\n\n".join(f"[{h.doc_id}] {h.snippet}" for h in citations)
        text = backend.complete(SUMMARY_SYSTEM, f"Question: {query}\n\nPassages:\n{context}")
    else:
        blocks = []
        for sq, hits in per_sub:
            lines = [f"{sq}:"] + [f"- [{h.doc_id}] {h.snippet}" for h in hits]
            if not hits:
                lines.append(f"- {NO_SOURCES}")
            blocks.append("\n".join(lines))
        text = "\n\n".join(blocks)
    return KnowledgeAnswer(text, tuple(citations), tuple(subs))


class KnowledgeBase:
    """Adapter handed to agents: ``ask(query)`` returns a JSON-ready answer."""

    def __init__(self, retriever: Retriever | Corpus, backend: TextBackend | None = None, k: int = 3):
        self.retriever = LexicalRetriever(retriever) if isinstance(retriever, Corpus) else retriever
        self.backend = backend
        self.k = k

    def ask(self, query: str) -> dict:
        return answer(query, self.retriever, self.backend, self.k).as_dict()


# -- ingestion -----------------------------------------------------------


def load_documents(path: str | Path) -> list[Document]:
    """A directory of .txt files (doc_id = file stem, title = first line) or a
    .json / .jsonl file of {id, title, body} records."""
    path = Path(path)
    if path.is_dir():
        docs = []
        for f in sorted(path.glob("*.txt")):
            body = f.read_text(encoding="utf-8")
            title = body.strip().splitlines()[0] if body.strip() else f.stem
            docs.append(Document(f.stem, title, body, source=f.name))
        return docs
    if not path.exists():
        raise KnowledgeError(f"no corpus at {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".jsonl":
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
    else:
        records = json.loads(text)
        if isinstance(records, dict):
            records = records.get("documents", [])
    try:
        return [Document(str(r["id"]), str(r.get("title", r["id"])), str(r["body"]),
                         str(r.get("source", path.name))) for r in records]
    except (KeyError, TypeError) as exc:
        raise KnowledgeError(f"corpus records need id and body fields: {exc}") from exc


def load_corpus(path: str | Path) -> Corpus:
    return build_index(load_documents(path))
