"""Topic analysis: TF-IDF vectors, k-means clustering, silhouette model choice.

Implemented directly on numpy so the arithmetic is pinned down: idf is
ln(D/df) with no smoothing, document vectors are L2-normalized, k-means uses
k-means++-style seeding from a fixed seed, and the cluster count is the k
with the best mean silhouette (ties break toward smaller k).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .textproc import DEFAULT_STOPWORDS, tokenize

log = logging.getLogger(__name__)

KMEANS_MAX_ITER = 300
KMEANS_TOL = 1e-6


@dataclass
class TfidfIndex:
    vocabulary: dict[str, int]
    idf: np.ndarray
    doc_ids: list[str]
    matrix: np.ndarray  # one L2-normalized row per doc in doc_ids order
    skipped: list[str] = field(default_factory=list)
    stopwords: frozenset[str] | None = DEFAULT_STOPWORDS

    def vector_for(self, text: str) -> np.ndarray:
        """Embed arbitrary text in this index's space (for sentences/queries)."""
        vec = np.zeros(len(self.vocabulary))
        for token in tokenize(text, self.stopwords):
            idx = self.vocabulary.get(token)
            if idx is not None:
                vec[idx] += 1.0
        vec *= self.idf
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


def build_tfidf(
    docs: list[tuple[str, str]],
    stopwords: frozenset[str] | None = DEFAULT_STOPWORDS,
) -> TfidfIndex:
    """TF-IDF index over (id, text) pairs.

    idf(t) = ln(D / df(t)); rows are tf*idf, L2-normalized. Documents whose
    vector is all-zero (only stop-words, or terms appearing in every doc)
    are excluded with a warning and listed in ``skipped``.
    """
    if len(docs) < 2:
        raise ValueError("need at least two documents")
    token_lists = [(doc_id, tokenize(text, stopwords)) for doc_id, text in docs]
    if all(not toks for _, toks in token_lists):
        raise ValueError("all documents are empty after tokenization")
    terms = sorted({t for _, toks in token_lists for t in toks})
    vocabulary = {t: i for i, t in enumerate(terms)}
    n_docs = len(token_lists)
    df = np.zeros(len(terms))
    for _, toks in token_lists:
        for t in set(toks):
            df[vocabulary[t]] += 1
    idf = np.log(n_docs / df)

    rows = []
    doc_ids = []
    skipped = []
    for doc_id, toks in token_lists:
        vec = np.zeros(len(terms))
        for t in toks:
            vec[vocabulary[t]] += 1.0
        vec *= idf
        norm = np.linalg.norm(vec)
        if norm == 0:
            log.warning("document %s has a zero TF-IDF vector; excluded", doc_id)
            skipped.append(doc_id)
            continue
        rows.append(vec / norm)
        doc_ids.append(doc_id)
    if not rows:
        raise ValueError("no document produced a non-zero vector")
    return TfidfIndex(
        vocabulary=vocabulary,
        idf=idf,
        doc_ids=doc_ids,
        matrix=np.vstack(rows),
        skipped=skipped,
        stopwords=stopwords,
    )


# --------------------------------------------------------------------------
# k-means
# --------------------------------------------------------------------------

def _kmeanspp_seed(matrix: np.ndarray, k: int, rng: np.random.RandomState) -> np.ndarray:
    n = matrix.shape[0]
    centroids = [matrix[rng.randint(n)]]
    for _ in range(1, k):
        dists = np.min(
            [np.sum((matrix - c) ** 2, axis=1) for c in centroids], axis=0
        )
        total = dists.sum()
        if total <= 0:
            centroids.append(matrix[rng.randint(n)])
            continue
        probs = dists / total
        centroids.append(matrix[rng.choice(n, p=probs)])
    return np.vstack(centroids)


def kmeans(
    matrix: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = KMEANS_MAX_ITER,
    tol: float = KMEANS_TOL,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations with k-means++ seeding.

    Returns (centroids, assignment, objective history); the history is the
    sum of squared distances after each assignment step and is checked to be
    non-increasing.
    """
    if not 1 <= k <= matrix.shape[0]:
        raise ValueError(f"k={k} out of range for {matrix.shape[0]} docs")
    rng = np.random.RandomState(seed)
    centroids = _kmeanspp_seed(matrix, k, rng)
    history: list[float] = []
    assignment = np.zeros(matrix.shape[0], dtype=int)
    for _ in range(max_iter):
        d2 = ((matrix[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assignment = np.argmin(d2, axis=1)
        objective = float(d2[np.arange(len(assignment)), assignment].sum())
        if history and objective > history[-1] + 1e-9:
            raise AssertionError("k-means objective increased")
        history.append(objective)
        new_centroids = centroids.copy()
        for j in range(k):
            members = matrix[assignment == j]
            if len(members):
                new_centroids[j] = members.mean(axis=0)
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if shift < tol:
            break
    return centroids, assignment, history


def silhouette_score(matrix: np.ndarray, assignment: np.ndarray) -> float:
    """Mean silhouette over points; singleton clusters contribute 0."""
    n = matrix.shape[0]
    if n < 2:
        raise ValueError("silhouette needs at least two points")
    diff = matrix[:, None, :] - matrix[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    labels = np.unique(assignment)
    scores = np.zeros(n)
    for i in range(n):
        own = assignment[i]
        mask_own = assignment == own
        n_own = mask_own.sum()
        if n_own <= 1:
            scores[i] = 0.0
            continue
        a = dist[i][mask_own].sum() / (n_own - 1)
        b = min(
            dist[i][assignment == other].mean()
            for other in labels
            if other != own and (assignment == other).any()
        )
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


@dataclass
class TopicModel:
    k: int
    centroids: np.ndarray
    assignment: dict[str, int]
    silhouette: float
    labels: dict[int, list[str]]
    silhouette_by_k: dict[int, float] = field(default_factory=dict)

    def members(self, cluster: int) -> list[str]:
        return sorted(cid for cid, c in self.assignment.items() if c == cluster)


def _top_terms(centroid: np.ndarray, vocabulary: dict[str, int], count: int = 5) -> list[str]:
    inverse = {i: t for t, i in vocabulary.items()}
    order = np.argsort(-centroid)
    terms = []
    for idx in order[: count * 2]:
        if centroid[idx] <= 0:
            break
        terms.append(inverse[int(idx)])
        if len(terms) == count:
            break
    return terms


def cluster_topics(
    index: TfidfIndex,
    k_range: tuple[int, int] | None = None,
    seed: int = 42,
) -> TopicModel:
    """Pick k in k_range by mean silhouette (ties to the smallest k).

    Vectors are unit length, so Euclidean k-means is monotone in cosine
    distance. Fewer than three documents cannot support a silhouette and
    raise.
    """
    n_docs = index.matrix.shape[0]
    if n_docs < 3:
        raise ValueError("clustering needs at least three documents")
    if k_range is None:
        k_range = (2, min(10, n_docs - 1))
    k_lo, k_hi = k_range
    if not 2 <= k_lo <= k_hi <= n_docs - 1:
        raise ValueError(f"k range {k_range} invalid for {n_docs} docs")

    best: tuple[float, int, np.ndarray, np.ndarray] | None = None
    by_k: dict[int, float] = {}
    for k in range(k_lo, k_hi + 1):
        centroids, assignment, _ = kmeans(index.matrix, k, seed)
        score = silhouette_score(index.matrix, assignment)
        by_k[k] = score
        if best is None or score > best[0] + 1e-12:
            best = (score, k, centroids, assignment)
    score, k, centroids, assignment = best
    labels = {j: _top_terms(centroids[j], index.vocabulary) for j in range(k)}
    return TopicModel(
        k=k,
        centroids=centroids,
        assignment={doc_id: int(c) for doc_id, c in zip(index.doc_ids, assignment)},
        silhouette=score,
        labels=labels,
        silhouette_by_k=by_k,
    )
