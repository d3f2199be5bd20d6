"""Per-cluster summaries with enforced citation grounding.

Retrieval picks the sentences closest to the cluster centroid; with a
generation backend configured those sentences are sent out with instructions
to cite only provided material, and the reply is verified sentence by
sentence. Any output citing an unknown paper, or making a claim without a
citation, is rejected wholesale and the extractive mode takes over. The
extractive mode simply returns the top retrieved sentences verbatim, each
carrying the id of the paper it came from, so grounding holds by
construction.
"""

from __future__ import annotations

import json
import logging
import os
import re
import urllib.request
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .textproc import sentence_spans
from .topics import TfidfIndex

log = logging.getLogger(__name__)

DEFAULT_SENTENCES_PER_DOC = 5
DEFAULT_SUMMARY_SENTENCES = 5
BACKEND_TOKEN_ENV = "LITSYNTH_BACKEND_TOKEN"

# Backend protocol: callable taking a prompt, returning generated text.
Backend = Callable[[str], str]


@dataclass
class Summary:
    sentences: list[str]
    citations: list[list[str]]  # per-sentence canonical ids, each non-empty
    provenance: list[list[tuple[str, int, int]]]  # (doc id, start, end) spans
    mode: str = "extractive"  # or "generated"
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sentences": self.sentences,
            "citations": self.citations,
            "provenance": [[list(p) for p in row] for row in self.provenance],
            "mode": self.mode,
            "warnings": self.warnings,
        }


@dataclass
class RetrievedSentence:
    doc_id: str
    text: str
    span: tuple[int, int]
    score: float


def retrieve_sentences(
    cluster_docs: list[tuple[str, str]],
    index: TfidfIndex,
    centroid: np.ndarray,
    per_doc: int = DEFAULT_SENTENCES_PER_DOC,
) -> list[RetrievedSentence]:
    """Top sentences per document by similarity to the cluster centroid."""
    retrieved: list[RetrievedSentence] = []
    for doc_id, text in cluster_docs:
        scored: list[RetrievedSentence] = []
        for start, end in sentence_spans(text):
            sentence = text[start:end]
            if len(sentence.split()) < 4:
                continue
            vec = index.vector_for(sentence)
            score = float(np.dot(vec, centroid))
            scored.append(RetrievedSentence(doc_id, sentence, (start, end), score))
        scored.sort(key=lambda s: (-s.score, s.span))
        retrieved.extend(scored[:per_doc])
    retrieved.sort(key=lambda s: (-s.score, s.doc_id, s.span))
    return retrieved


def http_backend(endpoint: str, timeout: float = 20.0) -> Backend:
    """Wire a summariser endpoint: POST {"prompt": ...} -> {"text": ...}."""

    def call(prompt: str) -> str:
        body = json.dumps({"prompt": prompt}).encode("utf-8")
        request = urllib.request.Request(
            endpoint, data=body, headers={"Content-Type": "application/json"}
        )
        token = os.environ.get(BACKEND_TOKEN_ENV)
        if token:
            request.add_header("Authorization", f"Bearer {token}")
        with urllib.request.urlopen(request, timeout=timeout) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
        return payload["text"]

    return call


_CITE_MARK_RE = re.compile(r"\[([^\[\]]+)\]")


def _build_prompt(retrieved: list[RetrievedSentence]) -> str:
    lines = [
        "Summarise the following material in a few sentences.",
        "Use only the sentences provided below. After every factual claim,",
        "cite the supporting paper id in square brackets, e.g. [paper-1].",
        "",
    ]
    for item in retrieved:
        lines.append(f"[{item.doc_id}] {item.text}")
    return "\n".join(lines)


def verify_generated(text: str, allowed_ids: set[str]) -> tuple[bool, list[str]]:
    """Every sentence must cite at least one in-cluster paper id."""
    problems = []
    spans = sentence_spans(text)
    if not spans:
        return False, ["empty output"]
    for start, end in spans:
        sentence = text[start:end]
        cited = [m.group(1).strip() for m in _CITE_MARK_RE.finditer(sentence)]
        if not cited:
            problems.append(f"uncited claim: {sentence[:60]!r}")
            continue
        unknown = [c for c in cited if c not in allowed_ids]
        if unknown:
            problems.append(f"unknown citation {unknown[0]!r}")
    return not problems, problems


def _extractive(retrieved: list[RetrievedSentence], max_sentences: int) -> Summary:
    take = retrieved[:max_sentences]
    return Summary(
        sentences=[s.text for s in take],
        citations=[[s.doc_id] for s in take],
        provenance=[[(s.doc_id, *s.span)] for s in take],
        mode="extractive",
    )


def summarise(
    cluster_docs: list[tuple[str, str]],
    index: TfidfIndex,
    centroid: np.ndarray,
    backend: Backend | None = None,
    per_doc: int = DEFAULT_SENTENCES_PER_DOC,
    max_sentences: int = DEFAULT_SUMMARY_SENTENCES,
) -> Summary:
    """Summarise one cluster; generation failures degrade to extractive mode."""
    if not cluster_docs:
        raise ValueError("cluster must be non-empty")
    retrieved = retrieve_sentences(cluster_docs, index, centroid, per_doc)
    if not retrieved:
        return Summary(sentences=[], citations=[], provenance=[],
                       warnings=["no retrievable sentences"])
    if backend is None:
        return _extractive(retrieved, max_sentences)

    allowed = {doc_id for doc_id, _ in cluster_docs}
    try:
        generated = backend(_build_prompt(retrieved))
    except Exception as exc:  # noqa: BLE001 - backend trouble is never fatal
        log.warning("summarisation backend failed (%s); extractive fallback", exc)
        summary = _extractive(retrieved, max_sentences)
        summary.warnings.append(f"backend error: {exc}")
        return summary

    ok, problems = verify_generated(generated, allowed)
    if not ok:
        log.warning("generated summary rejected (%s); extractive fallback", problems[0])
        summary = _extractive(retrieved, max_sentences)
        summary.warnings.append(f"generated output rejected: {problems[0]}")
        return summary

    sentences = []
    citations = []
    provenance: list[list[tuple[str, int, int]]] = []
    span_by_doc = {(s.doc_id, s.text): s.span for s in retrieved}
    for start, end in sentence_spans(generated):
        sentence = generated[start:end]
        cited = [m.group(1).strip() for m in _CITE_MARK_RE.finditer(sentence)]
        sentences.append(sentence)
        citations.append(sorted(set(cited)))
        prov = []
        stripped = _CITE_MARK_RE.sub("", sentence).strip()
        for (doc_id, text), span in span_by_doc.items():
            if doc_id in cited and stripped and stripped in text:
                prov.append((doc_id, *span))
        provenance.append(prov)
    return Summary(sentences=sentences, citations=citations, provenance=provenance,
                   mode="generated")
