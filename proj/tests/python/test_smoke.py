import math

import numpy as np
import pytest

import fairvit


def test_distance_examples():
    assert fairvit.distance(3.0, 1.0, -1.0, 0.0) == pytest.approx(2.0 / math.sqrt(2.0))
    assert fairvit.distance(2.0, 5.0, 0.0, 0.0) == 2.0
    assert fairvit.distance_loss(2.0, 0.0, 0.0, 0.0, 0.5) == -1.0
    assert fairvit.distance_loss(-2.0, 0.0, 0.0, 0.0, 0.5) == 2.0
    assert fairvit.distance_loss(10.0, 0.0, 0.0, 0.0, 0.5) == -2.0


def test_negative_gamma_rejected():
    with pytest.raises(fairvit.ConfigError):
        fairvit.distance_loss(1.0, 0.0, 0.0, 0.0, -1.0)


def test_metrics_match_counting():
    rng = np.random.default_rng(3)
    p, y, s = (rng.integers(0, 2, 400).tolist() for _ in range(3))
    report = fairvit.fairness_report(p, y, s)
    pa, ya, sa = map(np.array, (p, y, s))

    def rate(mask):
        return pa[mask].mean()

    dp = abs(rate(sa == 1) - rate(sa == 0))
    eo = abs(rate((sa == 1) & (ya == 1)) - rate((sa == 0) & (ya == 1)))
    ba = np.mean([(pa[(sa == g) & (ya == c)] == c).mean() for g in (0, 1) for c in (0, 1)])
    assert report["dp"] == pytest.approx(dp, abs=1e-12)
    assert report["eo"] == pytest.approx(eo, abs=1e-12)
    assert report["ba"] == pytest.approx(ba, abs=1e-12)
    assert sum(v for k, v in report.items() if k.startswith("n_")) == 400


def test_empty_stratum_is_undefined():
    with pytest.raises(fairvit.UndefinedMetricError):
        fairvit.balanced_accuracy([1, 1], [1, 1], [0, 1])


def test_split_groups_purity():
    s = [0] * 23 + [1] * 17
    parts = fairvit.split_groups(s, 4, 11)
    assert parts == fairvit.split_groups(s, 4, 11)
    for si, g in zip(s, parts):
        assert (g <= 2) == (si == 0)


def test_hyperplane_fit_separable():
    rng = np.random.default_rng(0)
    pts = []
    for _ in range(300):
        a, b = rng.normal(size=2) * 2
        pts.append((a, b, int(a - b > 1)))
    omega, beta, fitted = fairvit.fit_hyperplane(pts)
    assert fitted
    correct = sum(int((a + omega * b + beta >= 0) == bool(z)) for a, b, z in pts)
    assert correct / len(pts) >= 0.95


def test_synth_and_cli_roundtrip(tmp_path):
    samples = fairvit.synth_dataset(8, 1.0, 32, 5)
    assert all(y == s for _, y, s in samples)
    assert samples[0][0].shape == (32, 32)

    data = tmp_path / "data"
    run = tmp_path / "run"
    code, _, err = fairvit.run_cli(["synth", "--n", "120", "--seed", "2", "--out", str(data)])
    assert code == 0, err
    code, _, err = fairvit.run_cli(
        ["train", "--data", str(data), "--out", str(run), "--epochs", "1", "--groups", "2"]
    )
    assert code == 0, err
    model = fairvit.Model(str(run / "model.fvit"))
    assert model.groups == 2
    image = samples[0][0].astype(np.float32) / 255.0
    scores = model.scores(image)
    assert len(scores) == model.num_classes
    heat = model.rollout(image, model.predict(image))
    assert len(heat) == 16
    assert all(math.isfinite(h) and h >= 0 for h in heat)


def test_cli_usage_error():
    code, _, _ = fairvit.run_cli(["train", "--config", "/nonexistent/run.cfg"])
    assert code == 1
