"""Campaign manifest: persistent, hash-guarded state of an active-learning run.

The manifest is canonical JSON: sorted keys, fixed float formatting (17
significant digits, always with a decimal point or exponent), newline
terminated. Two equal manifests therefore serialize to identical bytes,
which makes golden-file and round-trip tests trivial. Dataset files are
content-hashed at init so a pool that changes mid-campaign is caught at
load time.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from dataclasses import dataclass, field, replace

from .errors import (
    DuplicateSelectionError,
    HashMismatchError,
    MissingFileError,
    RoundOrderViolationError,
    SchemaVersionMismatchError,
    TestTrainOverlapError,
)
from .selection import SelectionPlan

__all__ = [
    "SCHEMA_VERSION",
    "RoundRecord",
    "RoundManifest",
    "canonical_json",
    "hash_file",
    "hash_bytes",
    "hash_dataset",
    "init_campaign",
    "commit_round",
    "save_manifest",
    "load_manifest",
]

SCHEMA_VERSION = 1

_KNOWN_FIELDS = {
    "schema_version",
    "campaign_id",
    "dataset_dir",
    "dataset_hashes",
    "strategy",
    "seed",
    "test_ids",
    "initial_labeled",
    "config",
    "embedding_hash",
    "embedding_config",
    "rounds",
}


def _canonical(value, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(repr(value))
    elif isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError("manifest floats must be finite")
        text = format(value, ".17g")
        if "." not in text and "e" not in text and "E" not in text:
            text += ".0"  # keep float-ness through a JSON round trip
        out.append(text)
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=True))
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _canonical(item, out)
        out.append("]")
    elif isinstance(value, dict):
        out.append("{")
        for i, key in enumerate(sorted(value)):
            if not isinstance(key, str):
                raise ValueError("manifest keys must be strings")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=True))
            out.append(":")
            _canonical(value[key], out)
        out.append("}")
    else:
        raise ValueError(f"cannot serialize {type(value).__name__} canonically")


def canonical_json(value) -> str:
    out: list[str] = []
    _canonical(value, out)
    return "".join(out) + "\n"


def hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_file(path: str) -> str:
    with open(path, "rb") as fh:
        return hash_bytes(fh.read())


def hash_dataset(dataset_dir: str) -> dict[str, str]:
    """SHA-256 of every regular file under the dataset directory."""
    hashes: dict[str, str] = {}
    for root, _dirs, files in os.walk(dataset_dir):
        for name in files:
            full = os.path.join(root, name)
            rel = os.path.relpath(full, dataset_dir).replace(os.sep, "/")
            hashes[rel] = hash_file(full)
    return hashes


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    plan: SelectionPlan
    labeled_after: tuple[str, ...]
    metrics: dict
    coverage: dict

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "plan": self.plan.to_dict(),
            "labeled_after": list(self.labeled_after),
            "metrics": self.metrics,
            "coverage": self.coverage,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RoundRecord":
        return cls(
            round_index=int(payload["round"]),
            plan=SelectionPlan.from_dict(payload["plan"]),
            labeled_after=tuple(payload["labeled_after"]),
            metrics=payload["metrics"],
            coverage=payload["coverage"],
        )


@dataclass(frozen=True)
class RoundManifest:
    campaign_id: str
    dataset_dir: str
    dataset_hashes: dict[str, str]
    strategy: str
    seed: int
    test_ids: tuple[str, ...]
    initial_labeled: tuple[str, ...]
    config: dict = field(default_factory=dict)
    embedding_hash: str | None = None
    embedding_config: dict | None = None
    rounds: tuple[RoundRecord, ...] = ()

    def labeled_pool(self) -> tuple[str, ...]:
        if self.rounds:
            return self.rounds[-1].labeled_after
        return self.initial_labeled

    def selected_ids(self) -> tuple[str, ...]:
        out: list[str] = []
        for record in self.rounds:
            out.extend(record.plan.selected_ids)
        return tuple(out)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "campaign_id": self.campaign_id,
            "dataset_dir": self.dataset_dir,
            "dataset_hashes": dict(self.dataset_hashes),
            "strategy": self.strategy,
            "seed": self.seed,
            "test_ids": list(self.test_ids),
            "initial_labeled": list(self.initial_labeled),
            "config": self.config,
            "embedding_hash": self.embedding_hash,
            "embedding_config": self.embedding_config,
            "rounds": [r.to_dict() for r in self.rounds],
        }


def _validate(manifest: RoundManifest) -> None:
    overlap = set(manifest.test_ids) & set(manifest.initial_labeled)
    if overlap:
        raise TestTrainOverlapError(f"ids in both test set and labeled pool: {sorted(overlap)}")
    labeled = set(manifest.initial_labeled)
    seen: set[str] = set()
    for expected, record in enumerate(manifest.rounds):
        if record.round_index != expected:
            raise RoundOrderViolationError(
                f"round indices must be contiguous from 0, found {record.round_index} "
                f"at position {expected}"
            )
        new_ids = set(record.plan.selected_ids)
        if new_ids & seen:
            raise DuplicateSelectionError(
                f"ids selected twice: {sorted(new_ids & seen)}"
            )
        if new_ids & labeled:
            raise DuplicateSelectionError(
                f"round {expected} reselects labeled ids: {sorted(new_ids & labeled)}"
            )
        after = set(record.labeled_after)
        if after != labeled | new_ids or not new_ids - labeled:
            raise DuplicateSelectionError(
                f"round {expected}: labeled pool must grow strictly by the plan's ids"
            )
        if set(record.labeled_after) & set(manifest.test_ids):
            raise TestTrainOverlapError(f"round {expected} labels test images")
        labeled = after
        seen |= new_ids


def init_campaign(
    dataset_dir: str,
    test_ids,
    strategy: str,
    seed: int,
    initial_labeled=(),
    campaign_id: str = "campaign",
    config: dict | None = None,
) -> RoundManifest:
    """Fresh manifest with content hashes of every dataset file."""
    if not os.path.isdir(dataset_dir):
        raise MissingFileError(f"dataset directory {dataset_dir} does not exist")
    hashes = hash_dataset(dataset_dir)
    image_ids = {
        os.path.splitext(os.path.basename(rel))[0]
        for rel in hashes
        if rel.startswith("images/")
    }
    missing = (set(test_ids) | set(initial_labeled)) - image_ids
    if missing:
        raise MissingFileError(f"ids without image files: {sorted(missing)[:5]}")
    manifest = RoundManifest(
        campaign_id=campaign_id,
        dataset_dir=dataset_dir,
        dataset_hashes=hashes,
        strategy=strategy,
        seed=seed,
        test_ids=tuple(test_ids),
        initial_labeled=tuple(initial_labeled),
        config=config or {},
    )
    _validate(manifest)
    return manifest


def commit_round(
    manifest: RoundManifest,
    plan: SelectionPlan,
    metrics: dict,
    coverage: dict,
) -> RoundManifest:
    """Append one completed round; the labeled pool grows by the plan's ids."""
    expected = len(manifest.rounds)
    if plan.round_index != expected:
        raise RoundOrderViolationError(
            f"expected round {expected}, got plan for round {plan.round_index}"
        )
    labeled = set(manifest.labeled_pool())
    new_ids = set(plan.selected_ids)
    if not new_ids:
        raise DuplicateSelectionError("a committed round must add at least one image")
    dup = new_ids & (labeled | set(manifest.selected_ids()))
    if dup:
        raise DuplicateSelectionError(f"plan reselects ids: {sorted(dup)}")
    if new_ids & set(manifest.test_ids):
        raise TestTrainOverlapError(f"plan selects test images: {sorted(new_ids & set(manifest.test_ids))}")
    record = RoundRecord(
        round_index=plan.round_index,
        plan=plan,
        labeled_after=tuple(sorted(labeled | new_ids)),
        metrics=metrics,
        coverage=coverage,
    )
    updated = replace(manifest, rounds=manifest.rounds + (record,))
    _validate(updated)
    return updated


def save_manifest(manifest: RoundManifest, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_json(manifest.to_dict()))


def load_manifest(path: str, verify_dataset: bool = True) -> RoundManifest:
    """Load and re-validate a manifest; verify dataset hashes unless told not to.

    Unknown top-level fields are ignored with a warning (forward
    compatibility for optional additions).
    """
    with open(path) as fh:
        payload = json.load(fh)
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatchError(
            f"manifest schema {version!r}, this build reads {SCHEMA_VERSION}"
        )
    unknown = set(payload) - _KNOWN_FIELDS
    if unknown:
        warnings.warn(f"ignoring unknown manifest fields: {sorted(unknown)}", stacklevel=2)
    manifest = RoundManifest(
        campaign_id=payload["campaign_id"],
        dataset_dir=payload["dataset_dir"],
        dataset_hashes=dict(payload["dataset_hashes"]),
        strategy=payload["strategy"],
        seed=int(payload["seed"]),
        test_ids=tuple(payload["test_ids"]),
        initial_labeled=tuple(payload["initial_labeled"]),
        config=payload.get("config") or {},
        embedding_hash=payload.get("embedding_hash"),
        embedding_config=payload.get("embedding_config"),
        rounds=tuple(RoundRecord.from_dict(r) for r in payload.get("rounds", [])),
    )
    _validate(manifest)
    if verify_dataset:
        dataset_dir = manifest.dataset_dir
        if not os.path.isabs(dataset_dir):
            dataset_dir = os.path.join(os.path.dirname(os.path.abspath(path)), dataset_dir)
        if not os.path.isdir(dataset_dir):
            raise MissingFileError(f"dataset directory {dataset_dir} is missing")
        current = hash_dataset(dataset_dir)
        if current != manifest.dataset_hashes:
            changed = sorted(
                set(current.items()) ^ set(manifest.dataset_hashes.items())
            )
            raise HashMismatchError(
                f"dataset changed under the campaign ({len(changed)} differing entries)"
            )
    return manifest
