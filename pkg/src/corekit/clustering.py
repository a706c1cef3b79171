"""K-means with k-means++ restarts, silhouette scoring, and automatic k.

Determinism contract: restarts use seeds seed..seed+9, Lloyd iterations run
to an assignment fixpoint (or 300 iterations), assignment ties go to the
lower centroid index, and the restart with the lowest within-cluster sum of
squares wins. Empty clusters are repaired by stealing the point currently
farthest from its centroid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingSet
from .errors import DegenerateInputError, KOutOfRangeError

__all__ = [
    "Clustering",
    "kmeans",
    "silhouette",
    "select_k",
    "default_k_range",
    "save_clustering_json",
    "load_clustering_json",
]

MAX_LLOYD_ITERATIONS = 300
RESTARTS = 10


@dataclass(frozen=True)
class Clustering:
    embedding: EmbeddingSet
    k: int
    assignments: np.ndarray  # cluster index per embedding row
    centroids: np.ndarray  # (k, d)

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64)
        c = np.asarray(self.centroids, dtype=np.float64)
        if a.shape[0] != len(self.embedding.ids):
            raise ValueError("assignment count does not match embedding size")
        if a.min(initial=0) < 0 or (a.size and a.max() >= self.k):
            raise ValueError("assignments must lie in [0, k)")
        if len(np.unique(a)) != self.k:
            raise ValueError("every cluster must be non-empty")
        a.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "assignments", a)
        object.__setattr__(self, "centroids", c)

    def members(self, cluster_id: int) -> tuple[str, ...]:
        return tuple(
            image_id
            for image_id, a in zip(self.embedding.ids, self.assignments)
            if a == cluster_id
        )

    def wcss(self) -> float:
        diffs = self.embedding.coords - self.centroids[self.assignments]
        return float((diffs * diffs).sum())


def _assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)  # ties resolve to the lower centroid index


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.RandomState) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.randint(0, n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        total = d2.sum()
        if total <= 0.0:
            # all remaining mass at zero distance (duplicates): take the
            # lowest-index point not yet chosen
            remaining = [i for i in range(n) if i not in chosen]
            nxt = remaining[0]
        else:
            r = rng.rand() * total
            nxt = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            nxt = min(nxt, n - 1)
        chosen.append(nxt)
        d2 = np.minimum(d2, ((points - points[nxt]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _repair_empty(points, assignments, centroids):
    """Give each empty cluster the point farthest from its current centroid."""
    k = centroids.shape[0]
    for cluster in range(k):
        while not np.any(assignments == cluster):
            dist = ((points - centroids[assignments]) ** 2).sum(axis=1)
            counts = np.bincount(assignments, minlength=k)
            dist[counts[assignments] <= 1] = -1.0  # never empty another cluster
            thief = int(np.argmax(dist))
            assignments[thief] = cluster
            centroids[cluster] = points[thief]
    return assignments, centroids


def _lloyd(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations until assignment fixpoint; returns WCSS history."""
    k = centroids.shape[0]
    assignments = _assign(points, centroids)
    assignments, centroids = _repair_empty(points, assignments, centroids.copy())
    history = []
    for _ in range(MAX_LLOYD_ITERATIONS):
        for cluster in range(k):
            centroids[cluster] = points[assignments == cluster].mean(axis=0)
        history.append(float(((points - centroids[assignments]) ** 2).sum()))
        new_assignments = _assign(points, centroids)
        new_assignments, centroids = _repair_empty(points, new_assignments, centroids)
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
    return assignments, centroids, history


def kmeans(embedding: EmbeddingSet, k: int, seed: int = 0) -> Clustering:
    """Best of 10 k-means++ restarts (seeds seed..seed+9) by final WCSS."""
    points = embedding.coords
    n = points.shape[0]
    if not 2 <= k <= n:
        raise KOutOfRangeError(f"k must be in [2, {n}], got {k}")
    best = None
    for restart in range(RESTARTS):
        rng = np.random.RandomState(seed + restart)
        init = _kmeans_pp_init(points, k, rng)
        assignments, centroids, history = _lloyd(points, init)
        wcss = history[-1]
        if best is None or wcss < best[0]:
            best = (wcss, assignments, centroids)
    _, assignments, centroids = best
    return Clustering(embedding, k, assignments, centroids)


def silhouette(clustering: Clustering) -> float:
    """Mean silhouette with Euclidean distances; singleton clusters score 0."""
    points = clustering.embedding.coords
    labels = clustering.assignments
    n = points.shape[0]
    if clustering.k < 2 or n < 3:
        raise DegenerateInputError("silhouette requires k >= 2 and N >= 3")
    if np.all(points == points[0]):
        raise DegenerateInputError("all points identical")
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    counts = np.bincount(labels, minlength=clustering.k)
    scores = np.zeros(n)
    for i in range(n):
        own = labels[i]
        if counts[own] == 1:
            scores[i] = 0.0
            continue
        a = dist[i, labels == own].sum() / (counts[own] - 1)
        b = min(
            dist[i, labels == other].mean()
            for other in range(clustering.k)
            if other != own
        )
        denom = max(a, b)
        scores[i] = (b - a) / denom if denom > 0 else 0.0
    return float(scores.mean())


def default_k_range(n: int) -> tuple[int, int]:
    """[2, min(10, n // 3)]: silhouette is unstable for clusters under ~3 points."""
    return 2, max(2, min(10, n // 3))


def select_k(
    embedding: EmbeddingSet, k_min: int, k_max: int, seed: int = 0
) -> Clustering:
    """Clustering with the best mean silhouette over k in [k_min, k_max]; ties
    break toward the smaller k."""
    n = len(embedding.ids)
    if not 2 <= k_min <= k_max <= n - 1:
        raise KOutOfRangeError(
            f"need 2 <= k_min <= k_max <= N-1, got [{k_min}, {k_max}] with N={n}"
        )
    best_score = -np.inf
    best = None
    for k in range(k_min, k_max + 1):
        clustering = kmeans(embedding, k, seed)
        score = silhouette(clustering)
        if score > best_score:
            best_score = score
            best = clustering
    return best


def save_clustering_json(clustering: Clustering, path: str) -> None:
    payload = {
        "k": clustering.k,
        "ids": list(clustering.embedding.ids),
        "coords": [[float(v) for v in row] for row in clustering.embedding.coords],
        "assignments": [int(a) for a in clustering.assignments],
        "centroids": [[float(v) for v in row] for row in clustering.centroids],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_clustering_json(path: str) -> Clustering:
    with open(path) as fh:
        payload = json.load(fh)
    emb = EmbeddingSet(tuple(payload["ids"]), np.array(payload["coords"]))
    return Clustering(
        emb,
        int(payload["k"]),
        np.array(payload["assignments"], dtype=np.int64),
        np.array(payload["centroids"], dtype=np.float64),
    )
