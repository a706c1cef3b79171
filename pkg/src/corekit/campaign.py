"""End-to-end active-learning campaign driver.

One campaign: embed the unlabeled pool once (features -> standardize -> PCA
-> t-SNE), cluster it, seed a small labeled pool, then run selection rounds.
Each round the chosen strategy picks a batch, the batch's ground-truth
masks stand in for a human annotator, the simulated learner retrains on
everything labeled so far, and test-set metrics plus embedding coverage are
recorded. The on-disk variant wraps the same loop in a hash-guarded
manifest.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .clustering import Clustering, default_k_range, select_k
from .embedding import EmbeddingSet, TsneConfig, pca, tsne
from .errors import CorekitError, MissingFileError
from .features import extract_features, standardize
from .ledger import (
    RoundManifest,
    canonical_json,
    commit_round,
    hash_bytes,
    init_campaign,
    save_manifest,
)
from .metrics import CoverageReport, MetricsReport, evaluate_masks, sliced_wasserstein
from .raster import Mask, ProbMap, Raster, load_grayscale, load_mask
from .segment import (
    SimLearner,
    ensemble_uncertainty,
    fit_gnb_from_pixels,
    fit_sim_ensemble,
    gnb_posterior,
    pixel_features,
)
from .selection import SelectionPlan, random_select, smile_select, uncertainty_select

__all__ = [
    "STRATEGIES",
    "CampaignSettings",
    "CampaignPool",
    "RoundOutcome",
    "CampaignResult",
    "load_pool_dir",
    "run_campaign",
    "simulate_to_manifest",
    "metrics_table",
]

STRATEGIES = ("smile", "uncertainty", "random")


@dataclass(frozen=True)
class CampaignSettings:
    strategy: str = "smile"
    rounds: int = 6
    budget: int = 4
    seed: int = 7
    initial_labeled_count: int = 2
    pca_dims: int = 50
    perplexity: float | None = None
    tsne_iterations: int = 1000
    k_range: tuple[int, int] | None = None
    coverage_projections: int = 64
    ensemble_members: int = 10

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise CorekitError(f"unknown strategy {self.strategy!r}, expected one of {STRATEGIES}")
        if self.rounds < 1 or self.budget < 1:
            raise CorekitError("rounds and budget must be >= 1")
        if self.strategy == "uncertainty" and self.initial_labeled_count < 1:
            raise CorekitError("uncertainty selection needs a non-empty initial labeled pool")

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "rounds": self.rounds,
            "budget": self.budget,
            "seed": self.seed,
            "initial_labeled_count": self.initial_labeled_count,
            "pca_dims": self.pca_dims,
            "perplexity": self.perplexity,
            "tsne_iterations": self.tsne_iterations,
            "k_range": list(self.k_range) if self.k_range else None,
            "coverage_projections": self.coverage_projections,
            "ensemble_members": self.ensemble_members,
        }


@dataclass(frozen=True)
class CampaignPool:
    images: dict[str, Raster]
    masks: dict[str, Mask]
    pool_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


@dataclass(frozen=True)
class RoundOutcome:
    round_index: int
    plan: SelectionPlan
    labeled_after: tuple[str, ...]
    metrics: MetricsReport
    coverage: CoverageReport


@dataclass(frozen=True)
class CampaignResult:
    settings: CampaignSettings
    initial_labeled: tuple[str, ...]
    embedding: EmbeddingSet
    embedding_hash: str
    embedding_config: dict
    clustering: Clustering
    rounds: tuple[RoundOutcome, ...]

    def round_f1(self) -> list[float]:
        return [r.metrics.mean_macro_f1 for r in self.rounds]


def load_pool_dir(dataset_dir: str) -> CampaignPool:
    """Read a dataset directory: images/, masks/, test_ids.txt."""
    image_dir = os.path.join(dataset_dir, "images")
    mask_dir = os.path.join(dataset_dir, "masks")
    if not os.path.isdir(image_dir) or not os.path.isdir(mask_dir):
        raise MissingFileError(f"{dataset_dir} must contain images/ and masks/")
    ids = sorted(os.path.splitext(f)[0] for f in os.listdir(image_dir) if f.endswith(".png"))
    images = {}
    masks = {}
    for image_id in ids:
        images[image_id] = load_grayscale(os.path.join(image_dir, image_id + ".png"))
        mask_path = os.path.join(mask_dir, image_id + ".png")
        if not os.path.exists(mask_path):
            raise MissingFileError(f"no mask for image {image_id}")
        masks[image_id] = load_mask(mask_path)
    test_file = os.path.join(dataset_dir, "test_ids.txt")
    if os.path.exists(test_file):
        with open(test_file) as fh:
            test_ids = tuple(line.strip() for line in fh if line.strip())
    else:
        test_ids = ()
    missing = set(test_ids) - set(ids)
    if missing:
        raise MissingFileError(f"test ids without files: {sorted(missing)[:5]}")
    pool_ids = tuple(i for i in ids if i not in set(test_ids))
    return CampaignPool(images, masks, pool_ids, test_ids)


def build_pool_embedding(
    pool: CampaignPool, settings: CampaignSettings
) -> tuple[EmbeddingSet, str, dict]:
    """Features -> standardize -> PCA -> exact t-SNE over the pool images."""
    ids = tuple(sorted(pool.pool_ids))
    matrix = np.stack([extract_features(pool.images[i]) for i in ids])
    z, _ = standardize(matrix)
    n, d = z.shape
    pca_dims = max(2, min(settings.pca_dims, n, d))
    scores, _ = pca(z, pca_dims, ids=ids)
    cfg = TsneConfig(
        perplexity=settings.perplexity,
        iterations=settings.tsne_iterations,
        seed=settings.seed,
    )
    result = tsne(scores.coords, cfg, ids=ids)
    payload = {
        "feature_recipe": "downsample64+hist64+stats6",
        "standardize": "population",
        "pca_dims": pca_dims,
        "tsne": cfg.to_dict(),
        "resolved_perplexity": cfg.resolved_perplexity(n),
        "resolved_learning_rate": cfg.resolved_learning_rate(n),
        "jittered_duplicates": result.jittered_duplicates,
    }
    coords_bytes = canonical_json(
        [[float(v) for v in row] for row in result.embedding.coords]
    ).encode()
    return result.embedding, hash_bytes(coords_bytes), payload


def run_campaign(pool: CampaignPool, settings: CampaignSettings) -> CampaignResult:
    """The in-memory active-learning loop shared by tests and the CLI."""
    if not pool.test_ids:
        raise MissingFileError("campaign needs a held-out test set")
    embedding, emb_hash, emb_config = build_pool_embedding(pool, settings)
    n = len(embedding.ids)
    k_min, k_max = settings.k_range or default_k_range(n)
    k_max = min(k_max, n - 1)
    clustering = select_k(embedding, k_min, k_max, seed=settings.seed)

    initial = random_select(
        pool.pool_ids, set(), settings.initial_labeled_count, seed=settings.seed
    ).selected_ids
    labeled: set[str] = set(initial)
    strategy_picks: list[str] = []
    feature_cache: dict[str, np.ndarray] = {}

    def feats(image_id: str) -> np.ndarray:
        if image_id not in feature_cache:
            feature_cache[image_id] = pixel_features(pool.images[image_id])
        return feature_cache[image_id]

    def fit_on(ids) -> SimLearner:
        stacked = np.concatenate([feats(i).reshape(-1, 3) for i in sorted(ids)])
        labels = np.concatenate([pool.masks[i].pixels.ravel() for i in sorted(ids)])
        return fit_gnb_from_pixels(stacked, labels)

    outcomes: list[RoundOutcome] = []
    for round_index in range(settings.rounds):
        round_seed = settings.seed + 1000 * (round_index + 1)
        if settings.strategy == "smile":
            plan = smile_select(
                embedding, clustering, labeled, settings.budget,
                seed=round_seed, round_index=round_index,
            )
        elif settings.strategy == "uncertainty":
            ensemble = fit_sim_ensemble(
                [(pool.images[i], pool.masks[i]) for i in sorted(labeled)],
                seed=round_seed,
                members=settings.ensemble_members,
            )
            scores = {}
            for image_id in embedding.ids:
                if image_id in labeled:
                    continue
                maps = [ProbMap(gnb_posterior(m, feats(image_id))) for m in ensemble]
                scores[image_id] = ensemble_uncertainty(maps).score
            plan = uncertainty_select(
                scores, labeled, settings.budget, seed=round_seed, round_index=round_index
            )
        else:
            plan = random_select(
                pool.pool_ids, labeled, settings.budget,
                seed=round_seed, round_index=round_index,
            )

        labeled |= set(plan.selected_ids)
        strategy_picks.extend(plan.selected_ids)

        model = fit_on(labeled)
        pairs = []
        for test_id in pool.test_ids:
            pred = Mask((gnb_posterior(model, feats(test_id)) >= 0.5).astype(np.uint8))
            pairs.append((test_id, pred, pool.masks[test_id]))
        metrics = evaluate_masks(pairs)
        coverage = sliced_wasserstein(
            embedding.subset(sorted(strategy_picks)),
            embedding,
            projections=settings.coverage_projections,
            strategy=settings.strategy,
        )
        outcomes.append(
            RoundOutcome(
                round_index=round_index,
                plan=plan,
                labeled_after=tuple(sorted(labeled)),
                metrics=metrics,
                coverage=coverage,
            )
        )

    return CampaignResult(
        settings=settings,
        initial_labeled=initial,
        embedding=embedding,
        embedding_hash=emb_hash,
        embedding_config=emb_config,
        clustering=clustering,
        rounds=tuple(outcomes),
    )


def simulate_to_manifest(
    dataset_dir: str,
    settings: CampaignSettings,
    manifest_path: str,
    campaign_id: str = "campaign",
) -> tuple[RoundManifest, CampaignResult]:
    """Run a campaign against an on-disk dataset and persist the manifest."""
    pool = load_pool_dir(dataset_dir)
    result = run_campaign(pool, settings)
    manifest = init_campaign(
        dataset_dir,
        pool.test_ids,
        settings.strategy,
        settings.seed,
        initial_labeled=result.initial_labeled,
        campaign_id=campaign_id,
        config=settings.to_dict(),
    )
    manifest = replace(
        manifest,
        embedding_hash=result.embedding_hash,
        embedding_config=result.embedding_config,
    )
    for outcome in result.rounds:
        manifest = commit_round(
            manifest,
            outcome.plan,
            outcome.metrics.to_dict(),
            outcome.coverage.to_dict(),
        )
    save_manifest(manifest, manifest_path)
    return manifest, result


def metrics_table(results: dict[str, CampaignResult]) -> str:
    """Fixed-format per-round table: strategy x round -> macro F1 mean +/- sigma."""
    lines = ["strategy      round  mean_macro_f1  std_macro_f1  sliced_w1"]
    for strategy in sorted(results):
        for outcome in results[strategy].rounds:
            lines.append(
                f"{strategy:<12s}  {outcome.round_index + 1:>5d}  "
                f"{outcome.metrics.mean_macro_f1:>13.4f}  "
                f"{outcome.metrics.std_macro_f1:>12.4f}  "
                f"{outcome.coverage.sliced_w1:>9.4f}"
            )
    return "\n".join(lines) + "\n"
