import json

import numpy as np
import pytest

from goldgan import evaluation as E
from goldgan import gold as G
from goldgan.apps import train_schedule
from goldgan.cgan import CGanModel, ModelConfig, TrainConfig
from goldgan.data import SyntheticMixture
from goldgan.experiments import synthetic_task
from goldgan.plots import line_plot

FAST = E.FitConfig(epochs=10, samples_per_epoch=1000)


@pytest.fixture(scope="module")
def task():
    return synthetic_task(0, n_train=2000, n_test=1000)


def test_untrained_generator_is_near_chance(task):
    accs = []
    for seed in range(5):
        m = CGanModel(ModelConfig(), np.random.default_rng(seed))
        accs.append(E.fitting_capacity(E.model_sampler(m), task.test_x, task.test_c, 2, FAST,
                                       rng=np.random.default_rng(seed)).accuracy)
    assert abs(np.mean(accs) - 0.5) <= 0.1


def test_oracle_samples_match_real_training(task):
    mean, std = task.x.mean(axis=0), task.x.std(axis=0)
    raw = SyntheticMixture.circle()

    def oracle(n, rng):
        # fresh draws from the true mixture, mapped into the task's scaling
        x, c = raw.sample(n, rng)
        return (x - mean_raw) / std_raw, c

    x_raw, _ = raw.sample(100_000, np.random.default_rng([0, 0]))
    mean_raw, std_raw = x_raw.mean(axis=0), x_raw.std(axis=0)
    oracle.source = "generated"
    rep_o = E.fitting_capacity(oracle, task.test_x, task.test_c, 2, rng=np.random.default_rng(1))
    rep_r = E.fitting_capacity(E.fixed_sampler(task.x, task.c, "real"), task.test_x, task.test_c, 2,
                               rng=np.random.default_rng(1))
    assert abs(rep_o.accuracy - rep_r.accuracy) <= 0.02
    assert rep_o.train_source == "generated" and rep_r.train_source == "real"
    assert abs(mean).max() < 1e-9 and abs(std - 1).max() < 1e-9


def test_report_is_reproducible_and_consistent(task):
    m = CGanModel(ModelConfig(), np.random.default_rng(3))
    a = E.fitting_capacity(E.model_sampler(m), task.test_x, task.test_c, 2, FAST, seed=7)
    b = E.fitting_capacity(E.model_sampler(m), task.test_x, task.test_c, 2, FAST, seed=7)
    assert a.to_json() == b.to_json()
    weighted = np.dot(a.per_class_accuracy, a.class_counts) / sum(a.class_counts)
    assert abs(weighted - a.accuracy) < 1e-12
    assert a.scale_factor == 0.1 and len(a.epoch_accuracy) == FAST.epochs
    assert json.loads(a.to_json())["seed"] == 7


def test_classifier_sees_only_sampler_output(task):
    seen = []

    def spy(n, rng):
        x, c = task.x[:n], task.c[:n]
        seen.append(x.copy())
        return x, c

    E.fitting_capacity(spy, task.test_x, task.test_c, 2, E.FitConfig(epochs=3, samples_per_epoch=50), seed=0)
    assert len(seen) == 3 and all(s.shape == (50, 2) for s in seen)


def test_degenerate_and_chance_warnings(task):
    def flat(n, rng):
        return np.zeros((n, 2)), rng.integers(0, 2, n)

    rep = E.fitting_capacity(flat, task.test_x, task.test_c, 2, E.FitConfig(epochs=2), seed=0)
    assert any("degenerate" in w for w in rep.warnings)
    assert any("chance" in w for w in rep.warnings)


class _Calibrated:
    """Stub with d_g = 0.5 and d_c = 1 on every sample's own class."""

    latent_dim = 1

    def sample(self, n, rng, classes=None):
        c = rng.integers(0, 2, n)
        return c[:, None].astype(float), c

    def discriminate(self, x):
        c = x[:, 0].astype(int)
        d_c = np.zeros((len(c), 2))
        d_c[np.arange(len(c)), c] = 1.0
        return np.full(len(c), 0.5), d_c


def test_calibrated_discriminator_logs_zero_mean():
    log = E.log_trend(_Calibrated(), 1, E.TrendLog(), 64, np.random.default_rng(0))
    assert abs(log[0].mean_gold) < 1e-6 and log[0].sigma_g == 0.0


def test_trend_length_and_increasing_steps(task):
    m = CGanModel(ModelConfig(), np.random.default_rng(0))
    cfg = TrainConfig(baseline_steps=17, reweight_steps=8)
    _, trend = train_schedule(m, (task.x, task.c), None, cfg, np.random.default_rng(1), trend_interval=4,
                              probe_n=32)
    assert len(trend) == 25 // 4
    assert [r.phase for r in trend] == ["baseline"] * 4 + ["reweight"] * 2
    with pytest.raises(ValueError):
        trend.append(E.TrendRow(1, "baseline", 0, 0, 0, 0, 0))


def test_trend_logs_share_schema(tmp_path, task):
    logs = {}
    for arm, phases in (("baseline", [("baseline", 12)]), ("reweight", [("reweight", 12)])):
        m = CGanModel(ModelConfig(), np.random.default_rng(0))
        _, trend = train_schedule(m, (task.x, task.c), None, TrainConfig(), np.random.default_rng(1),
                                  trend_interval=3, probe_n=16, phases=phases)
        trend.write_csv(tmp_path / f"{arm}.csv", "h")
        logs[arm] = E.TrendLog.read_csv(tmp_path / f"{arm}.csv")
        assert [(r.step, r.mean_gold) for r in logs[arm]] == [(r.step, r.mean_gold) for r in trend]
    svg = line_plot([(k, [r.step for r in v], [r.mean_gold for r in v]) for k, v in logs.items()])
    assert svg.count("<polyline") == 2


def test_histogram_single_score_and_conservation():
    one = E.export_histogram([G.GoldScore(0.3, -0.1, G.GENERATED)], bins=5)
    for edges, counts in one.values():
        assert np.count_nonzero(counts) == 1 and counts.sum() == 1
    rng = np.random.default_rng(0)
    b = G.gold_batch(rng.uniform(0.01, 0.99, 500), rng.uniform(0.01, 0.99, 500), G.REAL)
    h = E.export_histogram(b, bins=30)
    for term, (edges, counts) in h.items():
        assert counts.sum() == 500 and len(edges) == 31
        vals = getattr(b, term)
        assert edges[0] == vals.min() and edges[-1] == vals.max()
    with pytest.raises(ValueError):
        E.export_histogram([])


def test_histogram_csv_carries_config_hash(tmp_path):
    h = E.export_histogram([G.GoldScore(0.1 * i, -0.05 * i, G.GENERATED) for i in range(9)], bins=3)
    E.write_histogram_csv(tmp_path / "h.csv", h, "abcd")
    assert (tmp_path / "h.csv").read_text().startswith("# config_hash: abcd")
    rows = E.read_commented_csv(tmp_path / "h.csv", E.HISTOGRAM_COLUMNS)
    assert sum(int(r["count"]) for r in rows) == 18
    with pytest.raises(ValueError, match="missing columns"):
        E.read_commented_csv(tmp_path / "h.csv", ["step"])
