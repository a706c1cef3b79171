"""Round-selection strategies and the maximin Latin-hypercube design engine.

The smile strategy picks a diverse batch from a clustered 2-D embedding:
clusters are ranked by the spread of their unlabeled members (Euclidean
norm of the per-dimension population stdev), the budget is dealt one slot
at a time down that ranking, and each cluster's picks come from snapping a
maximin LHS design over the cluster's bounding box onto its unlabeled
members. Everything is deterministic: ties in ranking go to the lower
cluster id, ties in snapping to the lower image id, ties between designs to
the lexicographically smallest permutation.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .clustering import Clustering
from .embedding import EmbeddingSet
from .errors import (
    EmptyClusteringError,
    InsufficientPoolError,
    InvalidBoxError,
    MissingScoreError,
    UnknownClusterError,
)

__all__ = [
    "ClusterSummary",
    "LhsDesign",
    "Pick",
    "SelectionPlan",
    "cluster_spread",
    "lhs_maximin_design",
    "smile_select",
    "uncertainty_select",
    "random_select",
    "save_plan_json",
    "load_plan_json",
]

EXHAUSTIVE_LIMIT = 6  # enumerate all m! permutations up to here
RANDOM_CANDIDATES = 10_000


@dataclass(frozen=True)
class ClusterSummary:
    cluster_id: int
    member_ids: tuple[str, ...]
    stdev: tuple[float, ...]  # per-dimension population stdev
    spread: float  # euclidean norm of stdev


@dataclass(frozen=True)
class LhsDesign:
    points: np.ndarray  # (m, 2), stratum centers
    min_distance: float  # inf for a single point
    permutation: tuple[int, ...]  # second-axis stratum order

    def __post_init__(self):
        arr = np.asarray(self.points, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "points", arr)


@dataclass(frozen=True)
class Pick:
    image_id: str
    cluster_id: int | None = None
    design_point: tuple[float, float] | None = None
    score: float | None = None
    draw_index: int | None = None


@dataclass(frozen=True)
class SelectionPlan:
    round_index: int
    strategy: str
    budget: int
    seed: int
    picks: tuple[Pick, ...]

    @property
    def selected_ids(self) -> tuple[str, ...]:
        return tuple(p.image_id for p in self.picks)

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "strategy": self.strategy,
            "budget": self.budget,
            "seed": self.seed,
            "picks": [
                {
                    "id": p.image_id,
                    "cluster": p.cluster_id,
                    "design_point": list(p.design_point) if p.design_point else None,
                    "score": p.score,
                    "draw": p.draw_index,
                }
                for p in self.picks
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SelectionPlan":
        picks = tuple(
            Pick(
                image_id=str(p["id"]),
                cluster_id=p.get("cluster"),
                design_point=tuple(p["design_point"]) if p.get("design_point") else None,
                score=p.get("score"),
                draw_index=p.get("draw"),
            )
            for p in payload["picks"]
        )
        return cls(
            round_index=int(payload["round"]),
            strategy=str(payload["strategy"]),
            budget=int(payload["budget"]),
            seed=int(payload["seed"]),
            picks=picks,
        )


def _population_stdev(coords: np.ndarray) -> np.ndarray:
    return coords.std(axis=0)  # numpy default ddof=0 is the population form


def cluster_spread(
    clustering: Clustering, cluster_id: int, include=None
) -> ClusterSummary:
    """Spread summary of one cluster, optionally restricted to an id subset."""
    if not 0 <= cluster_id < clustering.k:
        raise UnknownClusterError(f"cluster {cluster_id} not in [0, {clustering.k})")
    member_ids = []
    rows = []
    allowed = None if include is None else set(include)
    for row, (image_id, assigned) in enumerate(
        zip(clustering.embedding.ids, clustering.assignments)
    ):
        if assigned == cluster_id and (allowed is None or image_id in allowed):
            member_ids.append(image_id)
            rows.append(row)
    if not member_ids:
        raise UnknownClusterError(f"cluster {cluster_id} has no members in the given subset")
    coords = clustering.embedding.coords[rows]
    stdev = _population_stdev(coords)
    return ClusterSummary(
        cluster_id=cluster_id,
        member_ids=tuple(member_ids),
        stdev=tuple(float(v) for v in stdev),
        spread=float(np.sqrt((stdev * stdev).sum())),
    )


# --- maximin LHS ----------------------------------------------------------------

def _stratum_centers(lo: float, hi: float, m: int) -> np.ndarray:
    if hi == lo:
        return np.full(m, lo)
    width = (hi - lo) / m
    return lo + (np.arange(m) + 0.5) * width


def _min_pairwise(points: np.ndarray) -> float:
    m = points.shape[0]
    if m < 2:
        return math.inf
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2[np.triu_indices(m, k=1)].min()))


def lhs_maximin_design(box, m: int, seed: int = 0) -> LhsDesign:
    """Latin-hypercube design on stratum centers maximizing min pairwise distance.

    ``box`` is ((x_lo, x_hi), (y_lo, y_hi)); a zero-extent axis collapses to
    its single coordinate. Candidates permute the second axis against the
    first. All m! permutations are enumerated for m <= 6; larger designs use
    10,000 seeded random permutations refined by pairwise-swap hill
    climbing. Ties prefer the lexicographically smallest permutation.
    """
    (x_lo, x_hi), (y_lo, y_hi) = box
    if m < 1:
        raise InvalidBoxError(f"design size must be >= 1, got {m}")
    if not all(map(math.isfinite, (x_lo, x_hi, y_lo, y_hi))) or x_hi < x_lo or y_hi < y_lo:
        raise InvalidBoxError(f"invalid box {box}")
    xs = _stratum_centers(x_lo, x_hi, m)
    ys = _stratum_centers(y_lo, y_hi, m)

    def build(perm) -> np.ndarray:
        return np.column_stack([xs, ys[list(perm)]])

    if m == 1:
        return LhsDesign(build((0,)), math.inf, (0,))

    def better(candidate, incumbent) -> bool:
        dist_c, perm_c = candidate
        dist_i, perm_i = incumbent
        if dist_c != dist_i:
            return dist_c > dist_i
        return perm_c < perm_i

    best: tuple[float, tuple[int, ...]] | None = None
    if m <= EXHAUSTIVE_LIMIT:
        for perm in itertools.permutations(range(m)):  # lexicographic order
            dist = _min_pairwise(build(perm))
            if best is None or better((dist, perm), best):
                best = (dist, perm)
    else:
        rng = np.random.RandomState(seed)
        for _ in range(RANDOM_CANDIDATES):
            perm = tuple(int(v) for v in rng.permutation(m))
            dist = _min_pairwise(build(perm))
            if best is None or better((dist, perm), best):
                best = (dist, perm)
        improved = True
        while improved:
            improved = False
            for i in range(m - 1):
                for j in range(i + 1, m):
                    perm = list(best[1])
                    perm[i], perm[j] = perm[j], perm[i]
                    perm = tuple(perm)
                    dist = _min_pairwise(build(perm))
                    if better((dist, perm), best):
                        best = (dist, perm)
                        improved = True
    dist, perm = best
    return LhsDesign(build(perm), dist, perm)


# --- strategies -------------------------------------------------------------------

def smile_select(
    embedding: EmbeddingSet,
    clustering: Clustering,
    labeled,
    budget: int,
    seed: int = 0,
    round_index: int = 0,
) -> SelectionPlan:
    """Spread-ranked, LHS-sampled batch selection over the unlabeled pool.

    1. summarize every cluster over its unlabeled members only;
    2. rank clusters by descending spread (ties: lower cluster id);
    3. deal the budget one slot at a time down the ranking, skipping
       clusters with no capacity left;
    4. per cluster, snap a maximin LHS design over the bounding box of its
       unlabeled members onto the nearest untaken members (design order,
       distance ties to the lower id).
    """
    if clustering.k < 1 or len(clustering.embedding.ids) == 0:
        raise EmptyClusteringError("clustering has no members")
    labeled = set(labeled)
    unlabeled = [i for i in embedding.ids if i not in labeled]
    if budget < 0:
        raise ValueError("budget must be >= 0")
    if len(unlabeled) < budget:
        raise InsufficientPoolError(
            f"unlabeled pool has {len(unlabeled)} images, budget is {budget}"
        )
    if budget == 0:
        return SelectionPlan(round_index, "smile", 0, seed, ())

    # canonical order: everything below iterates ids in sorted order so the
    # plan is invariant to the caller's input ordering
    unlabeled_set = set(unlabeled)
    coord_of = {i: clustering.embedding.coords[k] for k, i in enumerate(clustering.embedding.ids)}
    summaries = []
    for cluster_id in range(clustering.k):
        members = sorted(m for m in clustering.members(cluster_id) if m in unlabeled_set)
        if not members:
            continue
        coords = np.array([coord_of[m] for m in members])
        stdev = _population_stdev(coords)
        summaries.append(
            (
                ClusterSummary(
                    cluster_id,
                    tuple(members),
                    tuple(float(v) for v in stdev),
                    float(np.sqrt((stdev * stdev).sum())),
                ),
                coords,
            )
        )
    if not summaries:
        raise EmptyClusteringError("no cluster has unlabeled members")
    summaries.sort(key=lambda item: (-item[0].spread, item[0].cluster_id))

    # cyclic budget allocation down the spread ranking
    quota = {s.cluster_id: 0 for s, _ in summaries}
    capacity = {s.cluster_id: len(s.member_ids) for s, _ in summaries}
    if sum(capacity.values()) < budget:
        raise InsufficientPoolError(
            f"clustering covers only {sum(capacity.values())} unlabeled images, budget is {budget}"
        )
    remaining = budget
    while remaining > 0:
        for summary, _ in summaries:
            cid = summary.cluster_id
            if remaining == 0:
                break
            if quota[cid] < capacity[cid]:
                quota[cid] += 1
                remaining -= 1

    picks: list[Pick] = []
    taken: set[str] = set()
    for summary, coords in summaries:
        cid = summary.cluster_id
        m = quota[cid]
        if m == 0:
            continue
        box = (
            (float(coords[:, 0].min()), float(coords[:, 0].max())),
            (float(coords[:, 1].min()), float(coords[:, 1].max())),
        )
        design = lhs_maximin_design(box, m, seed ^ cid)
        for point in design.points:
            best_id = None
            best_d2 = math.inf
            for member, xy in zip(summary.member_ids, coords):
                if member in taken:
                    continue
                d2 = float((xy[0] - point[0]) ** 2 + (xy[1] - point[1]) ** 2)
                if d2 < best_d2:  # ties keep the earlier (lower) id
                    best_d2 = d2
                    best_id = member
            taken.add(best_id)
            picks.append(
                Pick(
                    image_id=best_id,
                    cluster_id=cid,
                    design_point=(float(point[0]), float(point[1])),
                )
            )
    return SelectionPlan(round_index, "smile", budget, seed, tuple(picks))


def uncertainty_select(
    scores: dict[str, float], labeled, budget: int, seed: int = 0, round_index: int = 0
) -> SelectionPlan:
    """Top-budget unlabeled ids by descending score; ties go to the lower id."""
    labeled = set(labeled)
    unlabeled = sorted(i for i in scores if i not in labeled)
    for image_id in unlabeled:
        value = scores[image_id]
        if value is None or not math.isfinite(value):
            raise MissingScoreError(f"no finite uncertainty score for {image_id}")
    if len(unlabeled) < budget:
        raise InsufficientPoolError(
            f"unlabeled pool has {len(unlabeled)} images, budget is {budget}"
        )
    ranked = sorted(unlabeled, key=lambda i: (-scores[i], i))
    picks = tuple(
        Pick(image_id=i, score=float(scores[i])) for i in ranked[:budget]
    )
    return SelectionPlan(round_index, "uncertainty", budget, seed, picks)


def random_select(
    pool, labeled, budget: int, seed: int = 0, round_index: int = 0
) -> SelectionPlan:
    """Uniform sample without replacement from the unlabeled pool."""
    labeled = set(labeled)
    unlabeled = sorted(i for i in pool if i not in labeled)
    if len(unlabeled) < budget:
        raise InsufficientPoolError(
            f"unlabeled pool has {len(unlabeled)} images, budget is {budget}"
        )
    rng = np.random.RandomState(seed)
    order = rng.permutation(len(unlabeled))
    picks = tuple(
        Pick(image_id=unlabeled[int(order[d])], draw_index=d) for d in range(budget)
    )
    return SelectionPlan(round_index, "random", budget, seed, picks)


def save_plan_json(plan: SelectionPlan, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(plan.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_plan_json(path: str) -> SelectionPlan:
    with open(path) as fh:
        return SelectionPlan.from_dict(json.load(fh))
