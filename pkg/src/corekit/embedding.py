"""Dimensionality reduction: PCA, exact t-SNE, and Isomap.

Everything here is deterministic given (input, config, seed): PCA
eigenvectors use a fixed sign convention, t-SNE starts from scaled PCA
scores instead of random noise, and neighbor ties break on index. t-SNE is
the exact O(N^2) variant; pools of ~100 images make that easily affordable
and directly testable against its calibration and KL contracts.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError,
    DisconnectedGraphError,
    DuplicatePointsDegenerateError,
    PerplexityTooLargeError,
)

__all__ = [
    "EmbeddingSet",
    "TsneConfig",
    "TsneResult",
    "IsomapResult",
    "pca",
    "tsne",
    "tsne_affinities",
    "kl_divergence",
    "isomap",
    "knn_graph",
    "geodesic_distances",
    "default_perplexity",
    "save_embedding_csv",
    "load_embedding_csv",
    "scatter_svg",
]

ENTROPY_TOL_BITS = 1e-4
DUPLICATE_JITTER = 1e-12


@dataclass(frozen=True)
class EmbeddingSet:
    ids: tuple[str, ...]
    coords: np.ndarray  # (N, d)

    def __post_init__(self):
        arr = np.asarray(self.coords, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("coords must be a 2-D array")
        if not np.isfinite(arr).all():
            raise ValueError("coords must be finite")
        ids = tuple(str(i) for i in self.ids)
        if len(ids) != arr.shape[0]:
            raise ValueError("id count does not match coordinate rows")
        if len(set(ids)) != len(ids):
            raise ValueError("ids must be unique")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)
        object.__setattr__(self, "ids", ids)

    def index_of(self, image_id: str) -> int:
        return self.ids.index(image_id)

    def subset(self, ids) -> "EmbeddingSet":
        lookup = {i: k for k, i in enumerate(self.ids)}
        rows = [lookup[i] for i in ids]
        return EmbeddingSet(tuple(ids), self.coords[rows])


def _default_ids(n: int) -> tuple[str, ...]:
    return tuple(str(i) for i in range(n))


# --- PCA ----------------------------------------------------------------------

def pca(matrix: np.ndarray, out_dims: int, ids=None) -> tuple[EmbeddingSet, np.ndarray]:
    """Project onto the top eigenvectors of the covariance of centered data.

    Components are ordered by descending eigenvalue and sign-fixed so each
    component's largest-magnitude loading is positive. Returns the scores
    and the explained-variance ratios.
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DimensionError("pca requires an N x D matrix with N >= 2")
    n, d = x.shape
    if not 1 <= out_dims <= min(n, d):
        raise DimensionError(f"out_dims must be in [1, {min(n, d)}], got {out_dims}")
    centered = x - x.mean(axis=0)
    # SVD instead of an explicit DxD covariance: same eigenpairs, and cheap
    # when D is large (singular values relate by eigval = s^2 / N)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    eigvals = (s * s) / n
    for j in range(vt.shape[0]):
        pivot = int(np.argmax(np.abs(vt[j])))
        if vt[j, pivot] < 0:
            vt[j] = -vt[j]
            u[:, j] = -u[:, j]
    total = eigvals.sum()
    ratios = eigvals / total if total > 0 else np.zeros_like(eigvals)
    scores = u[:, :out_dims] * s[:out_dims]
    emb = EmbeddingSet(ids if ids is not None else _default_ids(n), scores)
    return emb, ratios[:out_dims]


# --- exact t-SNE ---------------------------------------------------------------

@dataclass(frozen=True)
class TsneConfig:
    perplexity: float | None = None  # default: min(30, floor((N-1)/3))
    iterations: int = 1000
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    learning_rate: float | None = None  # default: max(N / (exaggeration*4), 50)
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    momentum_switch: int = 250
    seed: int = 0

    def resolved_perplexity(self, n: int) -> float:
        if self.perplexity is not None:
            return float(self.perplexity)
        return float(min(30, (n - 1) // 3))

    def resolved_learning_rate(self, n: int) -> float:
        # fixed rates misbehave across pool sizes: gradient magnitudes shrink
        # like 1/N, so the step must scale with N (floored for tiny pools)
        if self.learning_rate is not None:
            return float(self.learning_rate)
        return max(n / (self.exaggeration * 4.0), 50.0)

    def to_dict(self) -> dict:
        return {
            "perplexity": self.perplexity,
            "iterations": self.iterations,
            "exaggeration": self.exaggeration,
            "exaggeration_iters": self.exaggeration_iters,
            "learning_rate": self.learning_rate,
            "momentum_initial": self.momentum_initial,
            "momentum_final": self.momentum_final,
            "momentum_switch": self.momentum_switch,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class TsneResult:
    embedding: EmbeddingSet
    initial_kl: float
    final_kl: float
    max_entropy_error_bits: float
    jittered_duplicates: int


def default_perplexity(n: int) -> float:
    return float(min(30, (n - 1) // 3))


def _squared_distances(x: np.ndarray) -> np.ndarray:
    sq = (x * x).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def _calibrated_row(d2_row: np.ndarray, target_bits: float) -> tuple[np.ndarray, float]:
    """Bisection on the Gaussian precision so the row entropy hits the target."""
    shifted = d2_row - d2_row.min()  # entropy is invariant to this shift
    beta, beta_min, beta_max = 1.0, 0.0, math.inf
    p = np.full(d2_row.shape, 1.0 / d2_row.size)
    entropy_bits = math.log2(d2_row.size)
    for _ in range(200):
        p = np.exp(-beta * shifted)
        p = p / p.sum()
        nz = p[p > 0]
        entropy_bits = float(-(nz * np.log2(nz)).sum())
        err = entropy_bits - target_bits
        if abs(err) <= ENTROPY_TOL_BITS / 4:
            break
        if err > 0:  # too spread out: sharpen
            beta_min = beta
            beta = beta * 2.0 if math.isinf(beta_max) else (beta + beta_max) / 2.0
        else:
            beta_max = beta
            beta = beta / 2.0 if beta_min == 0.0 else (beta + beta_min) / 2.0
    return p, entropy_bits


def _jitter_duplicates(x: np.ndarray, seed: int) -> tuple[np.ndarray, int]:
    """Deterministically perturb exact duplicate rows so bandwidths stay finite."""
    _, first_index, counts = np.unique(x, axis=0, return_index=True, return_counts=True)
    if counts.max() == x.shape[0] and x.shape[0] > 1:
        raise DuplicatePointsDegenerateError("all feature vectors are identical")
    if counts.max() == 1:
        return x, 0
    seen: dict[bytes, int] = {}
    out = x.copy()
    rng = np.random.RandomState(seed)
    jittered = 0
    for i in range(x.shape[0]):
        key = x[i].tobytes()
        if key in seen:
            out[i] = x[i] + rng.standard_normal(x.shape[1]) * DUPLICATE_JITTER
            jittered += 1
        else:
            seen[key] = i
    return out, jittered


def tsne_affinities(
    matrix: np.ndarray, perplexity: float, seed: int = 0
) -> tuple[np.ndarray, np.ndarray, int]:
    """Symmetrized joint affinities P and per-point conditional entropies (bits).

    Each point's Gaussian bandwidth is found by bisection so that the
    conditional distribution's Shannon entropy equals log2(perplexity)
    within 1e-4 bits. P is symmetric, non-negative, and sums to 1.
    """
    x = np.asarray(matrix, dtype=np.float64)
    n = x.shape[0]
    if not perplexity < n:
        raise PerplexityTooLargeError(f"perplexity {perplexity} must be < N = {n}")
    x, jittered = _jitter_duplicates(x, seed)
    d2 = _squared_distances(x)
    target_bits = math.log2(perplexity)
    cond = np.zeros((n, n))
    entropies = np.zeros(n)
    others = np.arange(n)
    for i in range(n):
        mask = others != i
        row, entropy = _calibrated_row(d2[i, mask], target_bits)
        cond[i, mask] = row
        entropies[i] = entropy
    p = (cond + cond.T) / (2.0 * n)
    return p, entropies, jittered


def kl_divergence(p: np.ndarray, y: np.ndarray) -> float:
    """KL(P || Q) where Q are the Student-t affinities of the embedding y."""
    num = 1.0 / (1.0 + _squared_distances(y))
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    mask = p > 0
    return float((p[mask] * np.log(p[mask] / np.maximum(q[mask], 1e-300))).sum())


def tsne(matrix: np.ndarray, config: TsneConfig | None = None, ids=None) -> TsneResult:
    """Exact t-SNE to 2 dimensions.

    Gradient descent with early exaggeration and a two-phase momentum
    schedule, initialized from 2-D PCA scores scaled by 1e-4. The returned
    diagnostics carry the initial/final KL (with the un-exaggerated P) and
    the worst per-point entropy calibration error.
    """
    config = config or TsneConfig()
    x = np.asarray(matrix, dtype=np.float64)
    n = x.shape[0]
    if n < 4:
        raise DimensionError(f"t-SNE requires at least 4 points, got {n}")
    perplexity = config.resolved_perplexity(n)
    if perplexity > (n - 1) / 3:
        raise PerplexityTooLargeError(
            f"perplexity {perplexity} exceeds (N-1)/3 = {(n - 1) / 3:.2f}"
        )
    if config.iterations < config.exaggeration_iters:
        raise DimensionError("iterations must be >= the early-exaggeration length")

    p, entropies, jittered = tsne_affinities(x, perplexity, config.seed)
    target_bits = math.log2(perplexity)
    entropy_err = float(np.max(np.abs(entropies - target_bits)))

    # PCA init; a 1-D feature space gets a zero second column
    init_dims = min(2, x.shape[1])
    init_emb, _ = pca(x, init_dims)
    y = np.zeros((n, 2))
    y[:, :init_dims] = init_emb.coords * 1e-4

    initial_kl = kl_divergence(p, y)
    learning_rate = config.resolved_learning_rate(n)
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)
    for it in range(config.iterations):
        p_eff = p * config.exaggeration if it < config.exaggeration_iters else p
        num = 1.0 / (1.0 + _squared_distances(y))
        np.fill_diagonal(num, 0.0)
        q = num / num.sum()
        w = (p_eff - q) * num
        grad = 4.0 * (w.sum(axis=1)[:, None] * y - w @ y)
        momentum = (
            config.momentum_initial if it < config.momentum_switch else config.momentum_final
        )
        # per-parameter adaptive gains, as in the reference gradient descent:
        # grow when the gradient keeps pointing against the velocity, shrink
        # when it agrees, so the effective step stays stable at any scale
        agree = np.sign(grad) == np.sign(velocity)
        gains = np.where(agree, gains * 0.8, gains + 0.2)
        np.clip(gains, 0.01, None, out=gains)
        velocity = momentum * velocity - learning_rate * (gains * grad)
        y = y + velocity
    final_kl = kl_divergence(p, y)

    emb = EmbeddingSet(ids if ids is not None else _default_ids(n), y)
    return TsneResult(emb, initial_kl, final_kl, entropy_err, jittered)


# --- Isomap ---------------------------------------------------------------------

@dataclass(frozen=True)
class IsomapResult:
    embedding: EmbeddingSet
    geodesics: np.ndarray


def knn_graph(matrix: np.ndarray, k_neighbors: int) -> np.ndarray:
    """Symmetric k-NN adjacency with Euclidean weights; np.inf marks no edge.

    Neighbor ties break toward the lower point index.
    """
    x = np.asarray(matrix, dtype=np.float64)
    n = x.shape[0]
    if k_neighbors < 1 or k_neighbors >= n:
        raise DimensionError(f"k_neighbors must be in [1, {n - 1}]")
    dist = np.sqrt(_squared_distances(x))
    adj = np.full((n, n), np.inf)
    for i in range(n):
        order = np.lexsort((np.arange(n), dist[i]))  # distance, then index
        neighbors = [j for j in order if j != i][:k_neighbors]
        for j in neighbors:
            adj[i, j] = dist[i, j]
            adj[j, i] = dist[i, j]
    np.fill_diagonal(adj, 0.0)
    return adj


def _components(adj: np.ndarray) -> list[list[int]]:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        comp = []
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in np.nonzero(np.isfinite(adj[u]))[0]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        comps.append(sorted(comp))
    return comps


def geodesic_distances(adj: np.ndarray) -> np.ndarray:
    """All-pairs shortest paths by one Dijkstra run per source node."""
    n = adj.shape[0]
    neighbors = [np.nonzero(np.isfinite(adj[u]) & (np.arange(n) != u))[0] for u in range(n)]
    out = np.full((n, n), np.inf)
    for src in range(n):
        dist = np.full(n, np.inf)
        dist[src] = 0.0
        heap = [(0.0, src)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            for v in neighbors[u]:
                nd = d + adj[u, v]
                if nd < dist[v]:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, int(v)))
        out[src] = dist
    return out


def isomap(
    matrix: np.ndarray, k_neighbors: int, out_dims: int = 2, ids=None
) -> IsomapResult:
    """Classical MDS on k-NN geodesic distances."""
    x = np.asarray(matrix, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= out_dims <= n:
        raise DimensionError(f"out_dims must be in [1, {n}]")
    adj = knn_graph(x, k_neighbors)
    comps = _components(adj)
    if len(comps) > 1:
        id_list = list(ids) if ids is not None else list(_default_ids(n))
        named = [[id_list[i] for i in comp] for comp in comps]
        raise DisconnectedGraphError(
            f"neighborhood graph has {len(comps)} components: {named}", components=comps
        )
    g = geodesic_distances(adj)
    g2 = g * g
    j = np.eye(n) - np.full((n, n), 1.0 / n)
    b = -0.5 * j @ g2 @ j
    b = (b + b.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(b)
    order = np.argsort(eigvals)[::-1][:out_dims]
    vals = np.maximum(eigvals[order], 0.0)
    vecs = eigvecs[:, order]
    for col in range(vecs.shape[1]):
        pivot = int(np.argmax(np.abs(vecs[:, col])))
        if vecs[pivot, col] < 0:
            vecs[:, col] = -vecs[:, col]
    coords = vecs * np.sqrt(vals)
    emb = EmbeddingSet(ids if ids is not None else _default_ids(n), coords)
    return IsomapResult(emb, g)


# --- persistence / plotting ------------------------------------------------------

def save_embedding_csv(emb: EmbeddingSet, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id"] + [f"dim{i}" for i in range(emb.coords.shape[1])])
        for image_id, row in zip(emb.ids, emb.coords):
            writer.writerow([image_id] + [repr(float(v)) for v in row])


def load_embedding_csv(path: str) -> EmbeddingSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "image_id":
            raise ValueError(f"{path}: not an embedding CSV")
        ids, rows = [], []
        for record in reader:
            ids.append(record[0])
            rows.append([float(v) for v in record[1:]])
    return EmbeddingSet(tuple(ids), np.array(rows))


def scatter_svg(
    emb: EmbeddingSet,
    highlight_ids=(),
    width: int = 640,
    height: int = 480,
    title: str = "",
) -> str:
    """Deterministic SVG scatter plot; highlighted points draw as filled squares."""
    xs = emb.coords[:, 0]
    ys = emb.coords[:, 1] if emb.coords.shape[1] > 1 else np.zeros_like(xs)
    pad = 30.0
    span_x = (xs.max() - xs.min()) or 1.0
    span_y = (ys.max() - ys.min()) or 1.0
    highlight = set(highlight_ids)

    def sx(v):
        return pad + (v - xs.min()) / span_x * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - ys.min()) / span_y * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{title}</text>'
        )
    for image_id, x, y in zip(emb.ids, xs, ys):
        cx, cy = sx(x), sy(y)
        if image_id in highlight:
            parts.append(
                f'<rect x="{cx - 4:.2f}" y="{cy - 4:.2f}" width="8" height="8" '
                f'fill="#d95f02"><title>{image_id}</title></rect>'
            )
        else:
            parts.append(
                f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3" fill="none" '
                f'stroke="#222222"><title>{image_id}</title></circle>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
