import json
import math
from dataclasses import replace

import numpy as np
import pytest

from fare.data import Dataset, generate_synthetic, standardize, train_test_split
from fare.driver import ConfigError, FareConfig, run, run_fare, run_fare_no_fair, run_passive
from fare.efo import DegenerateConstraint, RandomizedClassifier
from fare.fairness import FairnessSpec
from fare.linear_model import LinearClassifier
from fare.rng import DATASET, SPLIT, substream


@pytest.fixture(scope="module")
def split():
    ds = standardize(generate_synthetic(substream(3, DATASET), n0=2000, n1=60))
    return train_test_split(ds, 0.25, substream(3, SPLIT))


SMALL = FareConfig(n=20, L=3, k=3, seed=5)


def strip(records):
    return [{k: v for k, v in r.to_dict().items() if k != "wall_time"} for r in records]


def read_diag(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_label_accounting(split, tmp_path):
    train, test = split
    for fn in (run_fare, run_fare_no_fair, run_passive):
        diag = tmp_path / f"{fn.__name__}.jsonl"
        recs = fn(train, test, SMALL, diagnostics=diag)
        assert [r.labels for r in recs] == [20, 40, 60]
        assert all(sum(r.group_counts) == r.labels for r in recs)
        entries = read_diag(diag)
        ids = [i for e in entries for i, _ in e["sampled"]]
        assert len(ids) == len(set(ids)) == 60
        assert [e["pool_size"] for e in entries] == [len(train), len(train) - 20, len(train) - 40]


def test_passive_acquisition_probabilities(split, tmp_path):
    train, test = split
    diag = tmp_path / "p.jsonl"
    run_passive(train, test, SMALL, diagnostics=diag)
    for e in read_diag(diag):
        assert all(p == 1.0 / e["pool_size"] for _, p in e["sampled"])


def test_fare_records_mixture_probabilities(split, tmp_path):
    train, test = split
    diag = tmp_path / "f.jsonl"
    run_fare(train, test, SMALL, diagnostics=diag)
    for e in read_diag(diag)[1:]:
        lam_d = {int(k): v for k, v in e["lambda_diff"].items()}
        lam_f = {int(k): v for k, v in e["lambda_fair"].items()}
        for i, p in e["sampled"]:
            assert p == pytest.approx(0.5 * lam_d.get(i, 0.0) + 0.5 * lam_f.get(i, 0.0), rel=1e-12)
            assert p > 0


def test_single_round_is_passive(split):
    train, test = split
    cfg = replace(SMALL, n=200, L=1)
    a, b = strip(run_fare(train, test, cfg)), strip(run_passive(train, test, cfg))
    assert a == b


def test_shared_first_batch(split, tmp_path):
    train, test = split
    d1, d2, d3 = (tmp_path / f"{i}.jsonl" for i in range(3))
    run_fare(train, test, SMALL, diagnostics=d1)
    run_fare_no_fair(train, test, SMALL, diagnostics=d2)
    run_passive(train, test, SMALL, diagnostics=d3)
    first = [read_diag(d)[0]["sampled"] for d in (d1, d2, d3)]
    assert first[0] == first[1] == first[2]


def test_zero_noise_gives_uniform_disagreement(split, tmp_path):
    train, test = split
    diag = tmp_path / "z.jsonl"
    run_fare_no_fair(train, test, replace(SMALL, sigma=0.0), diagnostics=diag)
    for e in read_diag(diag)[1:]:
        assert e["disagreement"] == []
        assert len(e["lambda_diff"]) == e["pool_size"]
        assert set(e["lambda_diff"].values()) == {1.0 / e["pool_size"]}


def test_deterministic(split):
    train, test = split
    assert strip(run_fare(train, test, SMALL)) == strip(run_fare(train, test, SMALL))
    other = strip(run_fare(train, test, replace(SMALL, seed=6)))
    assert other != strip(run_fare(train, test, SMALL))


def test_tolerance_schedule(split):
    train, test = split
    cfg = replace(SMALL, spec=FairnessSpec("TPRP", 0.3))
    recs = run_passive(train, test, cfg)
    assert [r.alpha_eff for r in recs] == [max(0.0, 0.3 - 1 / math.sqrt(l)) for l in (20, 40, 60)]
    recs = run_passive(train, test, replace(cfg, correction="none"))
    assert all(r.alpha_eff == 0.3 for r in recs)


def test_snapshot_does_not_see_test_labels(split):
    train, test = split
    flipped = Dataset(test.X, test.a, 1 - test.y, test.feature_names)
    a = [r.classifier for r in run_fare(train, test, SMALL)]
    b = [r.classifier for r in run_fare(train, flipped, SMALL)]
    assert a == b


def test_final_snapshot_is_a_valid_classifier(split):
    train, test = split
    rec = run_fare(train, test, SMALL)[-1]
    rc = RandomizedClassifier(
        tuple(LinearClassifier.from_dict(c) for c in rec.classifier["components"]), np.array(rec.classifier["mix"])
    )
    pred = rc.predict(test.X)
    assert rec.test_accuracy == np.mean(pred == test.y)


def test_budget_exceeding_pool(split):
    train, test = split
    with pytest.raises(ConfigError, match="exceeds"):
        run(train, test, FareConfig(n=len(train), L=2))


def test_config_validation():
    for bad in (dict(n=0), dict(L=0), dict(k=1), dict(sigma=0.5), dict(correction="cube"), dict(strategy="x")):
        with pytest.raises(ConfigError):
            FareConfig(**bad)


def degenerate_split():
    # group 1 has no positives anywhere, so TPRP is undefined for every labeled set
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 2))
    a = (np.arange(200) % 4 == 0).astype(int)
    y = np.where(a == 1, 0, (X[:, 0] > 0).astype(int))
    ds = Dataset(X, a, y)
    return ds.subset(np.arange(150)), ds.subset(np.arange(150, 200))


def test_final_degenerate_constraint_is_fatal_for_fare():
    train, test = degenerate_split()
    with pytest.raises(DegenerateConstraint):
        run_fare(train, test, FareConfig(n=10, L=2, k=2))


def test_baselines_flag_dropped_constraint():
    train, test = degenerate_split()
    recs = run_passive(train, test, FareConfig(n=10, L=2, k=2))
    assert all(r.constraint_dropped for r in recs)
    assert all(r.test_tprp is None for r in recs)
    assert any("constraint dropped" in w for w in recs[-1].warnings)


def test_group_exhaustion_warning_is_sticky():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 2))
    a = np.r_[np.ones(3, int), np.zeros(57, int)]
    y = (X[:, 0] > 0).astype(int)
    y[:3] = [1, 0, 1]
    train = Dataset(X, a, y)
    recs = run_fare(train, train, FareConfig(n=10, L=4, k=2, seed=2))
    flagged = [any("exhausted" in w for w in r.warnings) for r in recs]
    first = flagged.index(True) if True in flagged else None
    assert first is not None and all(flagged[first:])
