import json
import math
from pathlib import Path

import numpy as np
import pytest

import rsrep

ROOT = Path(__file__).resolve().parents[2]
TOY = ROOT / "configs" / "toy.json"
MANIFESTS = ROOT / "data" / "manifests"


def test_negative_cosine_bounds_and_scale():
    p = np.array([1.0, 2.0, -0.5])
    z = np.array([0.3, -1.0, 2.0])
    d = rsrep.negative_cosine(p, z)
    assert -1.0 <= d <= 1.0
    assert rsrep.negative_cosine(3.0 * p, 0.5 * z) == pytest.approx(d, abs=1e-12)
    assert rsrep.negative_cosine(p, p) == pytest.approx(-1.0)


def test_symmetric_loss_matches_numpy():
    rng = np.random.default_rng(0)
    p1, p2, z1, z2 = (rng.normal(size=(4, 5)) for _ in range(4))

    def d(a, b):
        return -np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))

    want = np.mean(0.5 * d(p1, z2) + 0.5 * d(p2, z1))
    assert rsrep.symmetric_loss(p1, p2, z1, z2) == pytest.approx(want, abs=1e-12)


def test_collapse_statistic_extremes():
    z = np.tile(np.array([[1.0, 2.0, 3.0, 4.0]]), (8, 1))
    assert rsrep.collapse_statistic(z) == pytest.approx(0.0, abs=1e-12)
    spread = np.random.default_rng(1).normal(size=(4096, 16))
    assert rsrep.collapse_statistic(spread) == pytest.approx(1.0 / math.sqrt(16), rel=0.05)


def test_class_similarity_and_split_counts():
    assert rsrep.class_similarity(["a", "b", "c"], ["b", "c", "d", "e"]) == pytest.approx(0.5)
    assert list(rsrep.split_counts(100)) == [60, 20, 20]


def test_similarity_from_manifests():
    s = rsrep.similarity(MANIFESTS / "patternnet.json", MANIFESTS / "aid.json", ROOT / "data" / "aliases.tsv")
    assert s["downstream_classes"] == 30
    assert len(s["shared_classes"]) == 9
    assert s["similarity"] == pytest.approx(0.3)


def test_load_config_echoes_defaults():
    cfg = rsrep.load_config(TOY)
    assert cfg["experiment_id"] == "toy"
    assert cfg["pretrain"]["momentum"] == pytest.approx(0.9)


def test_bad_config_raises(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"pretrain": {"base_lr": -1}}))
    with pytest.raises(rsrep.ConfigError, match="pretrain.base_lr"):
        rsrep.load_config(bad)


def test_pretrain_lineval_report(tmp_path):
    cfg = json.loads(TOY.read_text())
    cfg["pretrain"]["total_iterations"] = 20
    cfg["linear_eval"]["epochs"] = 2
    cfg["seeds"] = [0]
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))

    first = rsrep.pretrain(path, out=tmp_path / "a")
    second = rsrep.pretrain(path, out=tmp_path / "b")
    assert first["checkpoint_hash"] == second["checkpoint_hash"]
    assert rsrep.checkpoint_hash(first["checkpoint"]) == first["checkpoint_hash"]

    result = rsrep.lineval(path, first["checkpoint"], shots=[5], out=tmp_path / "a")
    (record,) = result["records"]
    assert record["shots"] == 5
    assert 0.0 <= record["aggregate"]["mean_accuracy"] <= 1.0

    store = tmp_path / "a" / "metrics.jsonl"
    assert rsrep.seed_references(store) == 67
    table = rsrep.render_table(store, "tableVI")
    assert "81.65" in table
    assert "synthetic" in table
