"""Two-stage relevance filter: keyword screening, then a linear classifier.

The keyword stage is cheap and always runs first; a document failing it is
irrelevant no matter what the classifier says. The classifier is a logistic
model over TF-IDF features, trained by full-batch gradient descent from a
fixed seed so that identical inputs always give identical weights.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .textproc import DEFAULT_STOPWORDS, collapse_intraword_hyphens, tokenize


@dataclass
class RelevanceDecision:
    canonical_id: str
    keyword_hit: bool
    relevant: bool
    deciding_stage: str  # "keyword" or "classifier"
    classifier_score: float | None = None

    def to_dict(self) -> dict:
        return {
            "canonical_id": self.canonical_id,
            "keyword_hit": self.keyword_hit,
            "relevant": self.relevant,
            "deciding_stage": self.deciding_stage,
            "classifier_score": self.classifier_score,
        }


def load_keywords(path: str | Path) -> list[str]:
    phrases = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            phrases.append(line)
    return phrases


def _keyword_pattern(phrase: str) -> re.Pattern:
    # spaces in a phrase match any whitespace run; matching happens on
    # hyphen-collapsed text so "Auto-Regressive" hits "autoregressive"
    parts = [re.escape(p) for p in phrase.split()]
    return re.compile(r"\b" + r"\s+".join(parts) + r"\b", re.IGNORECASE)


def keyword_filter(text: str, keywords: list[str]) -> bool:
    """True iff any phrase matches case-insensitively on word boundaries."""
    if not keywords:
        raise ValueError("keyword list must be non-empty")
    haystack = collapse_intraword_hyphens(text)
    return any(_keyword_pattern(collapse_intraword_hyphens(k)).search(haystack) for k in keywords)


# --------------------------------------------------------------------------
# Classifier
# --------------------------------------------------------------------------

@dataclass
class RelevanceModel:
    vocabulary: dict[str, int]
    idf: list[float]
    weights: list[float]
    bias: float
    threshold: float = 0.5
    seed: int = 42

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(
                {
                    "vocabulary": self.vocabulary,
                    "idf": self.idf,
                    "weights": self.weights,
                    "bias": self.bias,
                    "threshold": self.threshold,
                    "seed": self.seed,
                },
                sort_keys=True,
            ),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "RelevanceModel":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)


def _features(text: str, vocabulary: dict[str, int], idf: np.ndarray) -> np.ndarray:
    vec = np.zeros(len(vocabulary))
    for token in tokenize(text, DEFAULT_STOPWORDS):
        idx = vocabulary.get(token)
        if idx is not None:
            vec[idx] += 1.0
    vec *= idf
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def train_classifier(
    labelled: list[tuple[str, bool]],
    seed: int = 42,
    threshold: float = 0.5,
    epochs: int = 300,
    lr: float = 1.0,
    l2: float = 1e-4,
) -> RelevanceModel:
    """Gradient-trained logistic model; deterministic for a given seed."""
    labels = [bool(y) for _, y in labelled]
    if len(set(labels)) < 2:
        raise ValueError("training set must contain both classes")
    docs = [tokenize(text, DEFAULT_STOPWORDS) for text, _ in labelled]
    vocab_terms = sorted({t for doc in docs for t in doc})
    vocabulary = {t: i for i, t in enumerate(vocab_terms)}
    df = np.zeros(len(vocabulary))
    for doc in docs:
        for t in set(doc):
            df[vocabulary[t]] += 1
    idf = np.log(len(docs) / df)
    x = np.zeros((len(docs), len(vocabulary)))
    for i, doc in enumerate(docs):
        for t in doc:
            x[i, vocabulary[t]] += 1.0
    x *= idf
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    x /= norms
    y = np.array(labels, dtype=float)

    rng = np.random.RandomState(seed)
    w = rng.normal(0.0, 0.01, size=len(vocabulary))
    b = 0.0
    n = len(docs)
    for _ in range(epochs):
        z = x @ w + b
        p = 1.0 / (1.0 + np.exp(-z))
        grad_w = x.T @ (p - y) / n + l2 * w
        grad_b = float(np.mean(p - y))
        w -= lr * grad_w
        b -= lr * grad_b
    return RelevanceModel(
        vocabulary=vocabulary,
        idf=[float(v) for v in idf],
        weights=[float(v) for v in w],
        bias=float(b),
        threshold=threshold,
        seed=seed,
    )


def classify(
    model: RelevanceModel | None,
    text: str,
    keywords: list[str],
    canonical_id: str = "",
) -> RelevanceDecision:
    """Keyword stage first; the classifier only sees keyword survivors.

    With ``model=None`` (classifier disabled) the keyword decision is final.
    """
    hit = bool(text) and keyword_filter(text, keywords)
    if not hit or model is None:
        return RelevanceDecision(
            canonical_id=canonical_id,
            keyword_hit=hit,
            relevant=hit,
            deciding_stage="keyword",
        )
    vec = _features(text, model.vocabulary, np.asarray(model.idf))
    z = float(np.dot(np.asarray(model.weights), vec) + model.bias)
    score = 1.0 / (1.0 + math.exp(-z))
    return RelevanceDecision(
        canonical_id=canonical_id,
        keyword_hit=True,
        relevant=score >= model.threshold,
        deciding_stage="classifier",
        classifier_score=score,
    )
