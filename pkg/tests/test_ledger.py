import json
import os

import numpy as np
import pytest

from corekit.errors import (
    DuplicateSelectionError,
    HashMismatchError,
    MissingFileError,
    RoundOrderViolationError,
    SchemaVersionMismatchError,
    TestTrainOverlapError,
)
from corekit.ledger import (
    canonical_json,
    commit_round,
    hash_dataset,
    init_campaign,
    load_manifest,
    save_manifest,
)
from corekit.raster import Mask, Raster, save_grayscale, save_mask
from corekit.selection import Pick, SelectionPlan


@pytest.fixture
def dataset(tmp_path):
    root = tmp_path / "data"
    (root / "images").mkdir(parents=True)
    (root / "masks").mkdir()
    rng = np.random.RandomState(0)
    for i in range(8):
        img = Raster(rng.randint(0, 256, (16, 16)).astype(np.uint8))
        mask = Mask((rng.rand(16, 16) > 0.8).astype(np.uint8))
        save_grayscale(img, str(root / "images" / f"img{i}.png"))
        save_mask(mask, str(root / "masks" / f"img{i}.png"))
    return str(root)


def plan_for(round_index, ids, strategy="random"):
    picks = tuple(Pick(image_id=i, draw_index=k) for k, i in enumerate(ids))
    return SelectionPlan(round_index, strategy, len(ids), 7, picks)


def test_canonical_json_formatting():
    payload = {"b": 1.0, "a": [1, 2.5, None, True], "c": "x"}
    text = canonical_json(payload)
    assert text == '{"a":[1,2.5,null,true],"b":1.0,"c":"x"}\n'
    # 17 significant digits round-trip
    assert canonical_json(0.1) == "0.10000000000000001\n"
    assert json.loads(canonical_json(0.1)) == 0.1


def test_canonical_json_equal_objects_identical_bytes():
    a = {"x": [1.5, {"k": 2}], "y": "s"}
    b = {"y": "s", "x": [1.5, {"k": 2}]}
    assert canonical_json(a) == canonical_json(b)


def test_canonical_json_rejects_nan():
    with pytest.raises(ValueError):
        canonical_json(float("nan"))


def test_init_campaign(dataset):
    m = init_campaign(dataset, ["img6", "img7"], "smile", 7, initial_labeled=["img0"])
    assert m.labeled_pool() == ("img0",)
    assert m.rounds == ()
    assert len(m.dataset_hashes) == 16


def test_init_empty_initial_pool_valid(dataset):
    m = init_campaign(dataset, ["img7"], "random", 1)
    assert m.labeled_pool() == ()


def test_init_test_train_overlap(dataset):
    with pytest.raises(TestTrainOverlapError):
        init_campaign(dataset, ["img1"], "smile", 7, initial_labeled=["img1"])


def test_init_missing_ids(dataset):
    with pytest.raises(MissingFileError):
        init_campaign(dataset, ["img99"], "smile", 7)


def test_reinit_identical_hashes(dataset):
    a = init_campaign(dataset, ["img7"], "smile", 7)
    b = init_campaign(dataset, ["img7"], "smile", 7)
    assert a.dataset_hashes == b.dataset_hashes


def test_commit_grows_pool(dataset):
    m = init_campaign(dataset, ["img7"], "random", 7, initial_labeled=["img0"])
    m1 = commit_round(m, plan_for(0, ["img1", "img2"]), {"mean_macro_f1": 0.5}, {"sliced_w1": 1.0})
    assert m1.labeled_pool() == ("img0", "img1", "img2")
    assert len(m1.rounds) == 1


def test_commit_round_order_violation(dataset):
    m = init_campaign(dataset, ["img7"], "random", 7)
    m1 = commit_round(m, plan_for(0, ["img1"]), {}, {})
    with pytest.raises(RoundOrderViolationError):
        commit_round(m1, plan_for(3, ["img2"]), {}, {})


def test_commit_duplicate_selection(dataset):
    m = init_campaign(dataset, ["img7"], "random", 7, initial_labeled=["img0"])
    m1 = commit_round(m, plan_for(0, ["img1"]), {}, {})
    with pytest.raises(DuplicateSelectionError):
        commit_round(m1, plan_for(1, ["img1"]), {}, {})
    with pytest.raises(DuplicateSelectionError):
        commit_round(m1, plan_for(1, ["img0"]), {}, {})


def test_commit_rejects_test_images(dataset):
    m = init_campaign(dataset, ["img7"], "random", 7)
    with pytest.raises(TestTrainOverlapError):
        commit_round(m, plan_for(0, ["img7"]), {}, {})


def test_manifest_roundtrip_identity(dataset, tmp_path):
    m = init_campaign(dataset, ["img7"], "random", 7, initial_labeled=["img0"])
    m = commit_round(
        m, plan_for(0, ["img1", "img3"]), {"mean_macro_f1": 0.625}, {"sliced_w1": 0.25}
    )
    p1 = tmp_path / "c1.json"
    p2 = tmp_path / "c2.json"
    save_manifest(m, str(p1))
    back = load_manifest(str(p1), verify_dataset=True)
    assert back == m
    save_manifest(back, str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_load_detects_dataset_drift(dataset, tmp_path):
    m = init_campaign(dataset, ["img7"], "random", 7)
    p = tmp_path / "c.json"
    save_manifest(m, str(p))
    # mutate one dataset file
    target = os.path.join(dataset, "images", "img0.png")
    with open(target, "ab") as fh:
        fh.write(b"\x00")
    with pytest.raises(HashMismatchError):
        load_manifest(str(p), verify_dataset=True)
    # skipping verification still loads
    assert load_manifest(str(p), verify_dataset=False).campaign_id == "campaign"


def test_load_schema_version_mismatch(dataset, tmp_path):
    m = init_campaign(dataset, ["img7"], "random", 7)
    p = tmp_path / "c.json"
    save_manifest(m, str(p))
    payload = json.loads(p.read_text())
    payload["schema_version"] = 99
    p.write_text(json.dumps(payload))
    with pytest.raises(SchemaVersionMismatchError):
        load_manifest(str(p), verify_dataset=False)


def test_load_ignores_unknown_fields_with_warning(dataset, tmp_path):
    m = init_campaign(dataset, ["img7"], "random", 7)
    p = tmp_path / "c.json"
    save_manifest(m, str(p))
    payload = json.loads(p.read_text())
    payload["future_optional_field"] = {"x": 1}
    p.write_text(json.dumps(payload))
    with pytest.warns(UserWarning, match="future_optional_field"):
        back = load_manifest(str(p), verify_dataset=False)
    assert back.campaign_id == m.campaign_id


def test_load_rejects_tampered_rounds(dataset, tmp_path):
    m = init_campaign(dataset, ["img7"], "random", 7)
    m = commit_round(m, plan_for(0, ["img1"]), {}, {})
    m = commit_round(m, plan_for(1, ["img2"]), {}, {})
    p = tmp_path / "c.json"
    save_manifest(m, str(p))
    payload = json.loads(p.read_text())
    payload["rounds"][1]["plan"]["picks"][0]["id"] = "img1"  # duplicate selection
    payload["rounds"][1]["labeled_after"] = payload["rounds"][0]["labeled_after"]
    p.write_text(json.dumps(payload))
    with pytest.raises(DuplicateSelectionError):
        load_manifest(str(p), verify_dataset=False)


def test_hash_dataset_relative_paths(dataset):
    hashes = hash_dataset(dataset)
    assert all("/" in k or k.endswith(".png") for k in hashes)
    assert "images/img0.png" in hashes
