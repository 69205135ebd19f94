import math

import numpy as np
import pytest

import tarpro

SMALL = [
    "n_per_domain=60",
    "metric_hidden=16",
    "feature_dim=4",
    "metric_epochs=5",
    "classifier_epochs=5",
    "vae_epochs=5",
    "gan_epochs=5",
    "latent_dim=2",
    "M=60",
    "W=5",
    "restarts=1",
    "seeds=0",
    "threads=1",
]


def test_two_moons_shapes():
    d = tarpro.two_moons([0, 30], n_per_domain=40, seed=3)
    assert len(d) == 80
    assert d.inputs.shape == (80, 2)
    assert sorted(set(d.labels)) == [0, 1]
    assert sorted(set(d.domains)) == [0, 1]
    back = tarpro.Dataset.from_csv(d.to_csv())
    np.testing.assert_array_equal(back.inputs, d.inputs)


def test_loss_ls_and_elbow():
    assert tarpro.loss_ls(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(1.0)
    assert tarpro.loss_ls(np.array([1.0, 1.0]), np.array([2.0, 2.0])) == pytest.approx(0.0, abs=1e-15)
    assert tarpro.smooth([0, 1, 2, 3], 3) == pytest.approx([0.5, 1.0, 2.0, 2.5])
    assert tarpro.elbow_index([5, 5, 5, 1, 1, 1]) == 3


def test_pairwise_loss_matches_numpy():
    rng = np.random.default_rng(0)
    f = rng.normal(size=(6, 3))
    y = [0, 1, 0, 1, 1, 0]
    n = f / np.linalg.norm(f, axis=1, keepdims=True)
    p = 1.0 / (1.0 + np.exp(-(n @ n.T) / 0.1))
    same = np.equal.outer(y, y)
    want = -np.mean(np.where(same, np.log(p), np.log(1.0 - p)))
    assert tarpro.pairwise_loss(f, y, 0.1) == pytest.approx(want, rel=1e-10)


def test_diagnostics():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(300, 2))
    b = a + np.array([5.0, 0.0])
    assert tarpro.a_distance(a, b)["a_distance"] >= 1.8
    s = tarpro.cluster_stats(np.array([[1.0, 0], [1, 0], [0, 1], [0, 1]]), [0, 0, 1, 1])
    assert s["margin"] == pytest.approx(1.0)


def test_config_errors_are_raised():
    cfg = tarpro.parse_config("tau = 0.2\n", ["M=100"])
    assert cfg["tau"] == "0.2"
    assert cfg["M"] == "100"
    assert tarpro.default_config()["W"] == "25"
    with pytest.raises(tarpro.Error, match="line 1"):
        tarpro.parse_config("tau = abc\n")


def test_pipeline_end_to_end(tmp_path):
    p = tarpro.Pipeline(overrides=SMALL, seed=0)
    acc = p.evaluate("full", "vae", 3)
    assert 0.0 <= acc <= 1.0
    res = p.infer(3)
    assert len(res["labels"]) == 60
    assert all(0 <= n < 60 for n in res["n_star"])
    truth = np.array(p.data.labels)[np.array(p.data.domains) == 3]
    assert np.mean(np.array(res["labels"]) == truth) == pytest.approx(acc)
    z = p.embed(p.data.inputs[:5])
    assert z.shape == (5, 4)
    np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0, rtol=1e-12)
    p.save(tmp_path)
    kind, text = tarpro.load_checkpoint(tmp_path / "vae.ckpt")
    assert kind == "vae"
    assert "M = 60" in text
    with pytest.raises(tarpro.Error):
        tarpro.load_checkpoint(tmp_path / "missing.ckpt")


def test_run_experiment_is_deterministic():
    results, aggregate = tarpro.run_experiment("ablate", overrides=SMALL)
    again, _ = tarpro.run_experiment("ablate", overrides=SMALL)
    assert results == again
    lines = results.strip().splitlines()
    assert lines[0] == "experiment,target,variant,sampler,seed,accuracy"
    assert len(lines) == 5
    assert all(0.0 <= float(r.split(",")[-1]) <= 1.0 for r in lines[1:])
    assert aggregate.startswith("experiment,target,variant,sampler,n,mean,sd")
    with pytest.raises(tarpro.Error):
        tarpro.run_experiment("nope")
