import itertools

import numpy as np
import pytest

import corekit.clustering as clustering_mod
from corekit.clustering import (
    Clustering,
    default_k_range,
    kmeans,
    load_clustering_json,
    save_clustering_json,
    select_k,
    silhouette,
    _kmeans_pp_init,
    _lloyd,
)
from corekit.embedding import EmbeddingSet
from corekit.errors import DegenerateInputError, KOutOfRangeError


def emb(points, ids=None):
    points = np.asarray(points, dtype=float)
    ids = ids or tuple(f"p{i}" for i in range(len(points)))
    return EmbeddingSet(tuple(ids), points)


def silhouette_oracle(points, labels, k):
    """O(N^2 k) straight-line silhouette."""
    n = len(points)
    total = 0.0
    for i in range(n):
        own = labels[i]
        same = [j for j in range(n) if labels[j] == own and j != i]
        if not same:
            continue  # singleton scores 0
        a = np.mean([np.linalg.norm(points[i] - points[j]) for j in same])
        b = min(
            np.mean([np.linalg.norm(points[i] - points[j]) for j in range(n) if labels[j] == c])
            for c in range(k)
            if c != own
        )
        if max(a, b) > 0:
            total += (b - a) / max(a, b)
    return total / n


def exhaustive_two_partition_wcss(points):
    """Minimum WCSS over all 2-partitions (both parts non-empty)."""
    n = len(points)
    best = None
    for bits in range(1, 2**n - 1):
        labels = [(bits >> i) & 1 for i in range(n)]
        wcss = 0.0
        for c in (0, 1):
            rows = points[[i for i in range(n) if labels[i] == c]]
            wcss += ((rows - rows.mean(axis=0)) ** 2).sum()
        if best is None or wcss < best[0]:
            best = (wcss, labels)
    return best


def test_kmeans_two_blocks():
    pts = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    c = kmeans(emb(pts), 2, seed=0)
    groups = {tuple(sorted(np.nonzero(c.assignments == g)[0].tolist())) for g in range(2)}
    assert groups == {(0, 1), (2, 3)}
    cents = sorted(c.centroids.tolist())
    assert cents == [[0.0, 0.5], [10.0, 0.5]]
    # matches the exhaustive optimum over all 2-partitions
    best_wcss, _ = exhaustive_two_partition_wcss(pts)
    assert c.wcss() == pytest.approx(best_wcss, abs=1e-12)


def test_kmeans_k_equals_n():
    rng = np.random.RandomState(0)
    pts = rng.randn(6, 2)
    c = kmeans(emb(pts), 6, seed=1)
    assert sorted(c.assignments.tolist()) == list(range(6))
    assert c.wcss() == pytest.approx(0.0, abs=1e-20)


def test_kmeans_deterministic():
    rng = np.random.RandomState(1)
    pts = rng.randn(30, 2)
    e = emb(pts)
    c1 = kmeans(e, 4, seed=7)
    c2 = kmeans(e, 4, seed=7)
    assert np.array_equal(c1.assignments, c2.assignments)
    assert np.array_equal(c1.centroids, c2.centroids)


def test_kmeans_k_out_of_range():
    e = emb(np.zeros((4, 2)) + np.arange(4)[:, None])
    with pytest.raises(KOutOfRangeError):
        kmeans(e, 1)
    with pytest.raises(KOutOfRangeError):
        kmeans(e, 5)


def test_kmeans_never_returns_empty_cluster():
    rng = np.random.RandomState(2)
    for seed in range(10):
        pts = np.vstack([rng.randn(12, 2), rng.randn(3, 2) + 50])
        c = kmeans(emb(pts), 5, seed=seed)
        assert len(np.unique(c.assignments)) == 5


def test_lloyd_wcss_non_increasing():
    rng = np.random.RandomState(3)
    for seed in range(20):
        pts = np.random.RandomState(seed).randn(25, 2) * 3
        init = _kmeans_pp_init(pts, 4, np.random.RandomState(seed))
        _, _, history = _lloyd(pts, init)
        assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))


def test_silhouette_four_point_fixture():
    pts = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    c = kmeans(emb(pts), 2, seed=0)
    s = silhouette(c)
    # hand computation: a = 1, b = (10 + sqrt(101))/2 for every point
    b = (10 + np.sqrt(101)) / 2
    assert s == pytest.approx((b - 1) / b, abs=1e-12)
    assert s == pytest.approx(0.9002, abs=5e-5)


def test_silhouette_interleaved_clusters_near_zero():
    # two coincident clusters: interleaved points on a small grid
    rng = np.random.RandomState(4)
    pts = rng.randn(16, 2)
    labels = np.array([0, 1] * 8)
    c = Clustering(emb(pts), 2, labels, np.array([pts[::2].mean(0), pts[1::2].mean(0)]))
    s = silhouette(c)
    assert abs(s) < 0.2
    assert s == pytest.approx(silhouette_oracle(pts, labels, 2), abs=1e-12)


def test_silhouette_identical_points_degenerate():
    pts = np.zeros((4, 2))
    c = Clustering(emb(pts), 2, np.array([0, 0, 1, 1]), np.zeros((2, 2)))
    with pytest.raises(DegenerateInputError):
        silhouette(c)


def test_silhouette_matches_bruteforce_oracle_random():
    rng = np.random.RandomState(5)
    for _ in range(30):
        n = rng.randint(5, 20)
        k = rng.randint(2, min(5, n))
        pts = rng.randn(n, 2) * rng.uniform(0.5, 4)
        labels = rng.randint(0, k, size=n)
        while len(np.unique(labels)) != k:  # ensure all clusters populated
            labels = rng.randint(0, k, size=n)
        centroids = np.array([pts[labels == c].mean(axis=0) for c in range(k)])
        c = Clustering(emb(pts), k, labels, centroids)
        assert silhouette(c) == pytest.approx(silhouette_oracle(pts, labels, k), abs=1e-9)


def test_silhouette_singleton_contributes_zero():
    pts = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0]])
    labels = np.array([0, 0, 1])
    c = Clustering(emb(pts), 2, labels, np.array([pts[:2].mean(0), pts[2]]))
    assert silhouette(c) == pytest.approx(silhouette_oracle(pts, labels, 2), abs=1e-12)


def test_select_k_two_blobs():
    pts = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    c = select_k(emb(pts), 2, 3, seed=0)
    assert c.k == 2


def test_select_k_three_triples():
    rng = np.random.RandomState(6)
    pts = np.vstack([rng.randn(3, 2) * 0.1 + center for center in ([0, 0], [20, 0], [0, 20])])
    c = select_k(emb(pts), 2, 5, seed=0)
    assert c.k == 3
    # brute-force: silhouette at k=3 beats every other candidate
    scores = {k: silhouette(kmeans(emb(pts), k, 0)) for k in range(2, 6)}
    assert max(scores, key=scores.get) == 3


def test_select_k_tie_breaks_to_smaller_k(monkeypatch):
    pts = np.random.RandomState(7).randn(9, 2)
    monkeypatch.setattr(clustering_mod, "silhouette", lambda c: 0.5)
    c = select_k(emb(pts), 2, 4, seed=0)
    assert c.k == 2


def test_select_k_range_validation():
    e = emb(np.random.RandomState(8).randn(5, 2))
    with pytest.raises(KOutOfRangeError):
        select_k(e, 2, 5, seed=0)  # k_max must be <= N-1


def test_default_k_range():
    assert default_k_range(9) == (2, 3)
    assert default_k_range(80) == (2, 10)
    assert default_k_range(7) == (2, 2)


def test_clustering_json_roundtrip(tmp_path):
    pts = np.random.RandomState(9).randn(8, 2)
    c = kmeans(emb(pts), 3, seed=2)
    p = tmp_path / "c.json"
    save_clustering_json(c, str(p))
    back = load_clustering_json(str(p))
    assert back.k == c.k
    assert np.array_equal(back.assignments, c.assignments)
    assert np.allclose(back.centroids, c.centroids)
    assert back.embedding.ids == c.embedding.ids
