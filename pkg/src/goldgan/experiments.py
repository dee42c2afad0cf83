"""Desk-scale direction experiments on the synthetic mixture.

Each function runs one seed and returns plain numbers, so the acceptance
suite and ad-hoc scripts share one protocol.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace

import numpy as np

from .apps import RejectionConfig, plain_sample, rejection_sample, train_schedule
from .cgan import CGanModel, ModelConfig, TrainConfig
from .data import Standardizer, SyntheticMixture
from .evaluation import FitConfig, fitting_capacity, fixed_sampler, model_sampler, score_generated


@dataclass
class SyntheticTask:
    x: np.ndarray
    c: np.ndarray
    test_x: np.ndarray
    test_c: np.ndarray
    mixture: SyntheticMixture


def synthetic_task(seed, n_train=4000, n_test=1000, mixture=None):
    """Standardized train/test draws from the default circle mixture."""
    mixture = mixture or SyntheticMixture.circle()
    rng = np.random.default_rng([seed, 0])
    x, c = mixture.sample(n_train + n_test, rng)
    std = Standardizer.fit(x[:n_train])
    x = std.transform(x)
    return SyntheticTask(x[:n_train], c[:n_train], x[n_train:], c[n_train:], mixture)


def _baseline(task, seed, steps, train: TrainConfig, model_cfg: ModelConfig):
    model = CGanModel(model_cfg, np.random.default_rng([seed, 1]), train)
    rng = np.random.default_rng([seed, 2])
    cfg = replace(train, baseline_steps=steps, reweight_steps=0)
    train_schedule(model, (task.x, task.c), None, cfg, rng, trend_interval=0)
    return model, rng


@dataclass
class ReweightOutcome:
    baseline_gold: float
    reweight_gold: float
    baseline_capacity: float
    reweight_capacity: float
    reweight_first_gold: float


def reweight_pair(seed, baseline_steps=2000, continue_steps=2000, trend_interval=20,
                  train=None, model_cfg=None, fit=None):
    """Baseline training, then two arms from the same state and rng: baseline
    continuation and GOLD re-weighting. |mean GOLD| is averaged over the
    final 10% of each arm's trend log."""
    train = train or TrainConfig()
    model_cfg = model_cfg or ModelConfig()
    fit = fit or FitConfig()
    task = synthetic_task(seed)
    model, rng = _baseline(task, seed, baseline_steps, train, model_cfg)
    out = {}
    for arm, phase in (("baseline", "baseline"), ("reweight", "reweight")):
        m, r = copy.deepcopy(model), copy.deepcopy(rng)
        _, trend = train_schedule(m, (task.x, task.c), None, train, r, trend_interval,
                                  probe_rng=np.random.default_rng([seed, 3]),
                                  start_step=baseline_steps, phases=[(phase, continue_steps)])
        g = np.array([row.mean_gold for row in trend])
        tail = max(1, len(g) // 10)
        cap = fitting_capacity(model_sampler(m), task.test_x, task.test_c, 2, fit,
                               rng=np.random.default_rng([seed, 4])).accuracy
        out[arm] = (abs(float(np.mean(g[-tail:]))), cap, abs(float(np.mean(g[:tail]))))
    return ReweightOutcome(out["baseline"][0], out["reweight"][0], out["baseline"][1],
                           out["reweight"][1], out["reweight"][2])


@dataclass
class RejectionOutcome:
    plain_capacity: float
    reject_capacity: float
    accepted_mean_dbal: float
    candidate_mean_dbal: float
    acceptance: float


def rejection_trial(seed, train_steps=500, n=5000, p=0.5, train=None, model_cfg=None, fit=None):
    """Under-trained model; fitting capacity of a fixed plain sample set vs a
    fixed GOLD-rejection sample set of the same size and class balance."""
    train = train or TrainConfig()
    model_cfg = model_cfg or ModelConfig()
    fit = fit or FitConfig()
    task = synthetic_task(seed)
    model, _ = _baseline(task, seed, train_steps, train, model_cfg)
    counts = np.full(model.class_count, n // model.class_count)
    xp, cp = plain_sample(model, counts, np.random.default_rng([seed, 5]))
    res = rejection_sample(model, counts, RejectionConfig(p=p, target_accept_count=n),
                           np.random.default_rng([seed, 6]))
    caps = []
    for x, c in ((xp, cp), (res.x, res.c)):
        caps.append(fitting_capacity(fixed_sampler(x, c, "generated-fixed"), task.test_x, task.test_c,
                                     model.class_count, fit, rng=np.random.default_rng([seed, 7])).accuracy)
    return RejectionOutcome(caps[0], caps[1], float(res.accepted_dbal.mean()),
                            float(res.candidate_dbal.mean()), res.acceptance)


def scale_imbalance(seed, steps=2000, probe_n=2000, train=None, model_cfg=None):
    """(sigma_G, sigma_C) of generated-sample scores after baseline training."""
    train = train or TrainConfig()
    task = synthetic_task(seed)
    model, _ = _baseline(task, seed, steps, train, model_cfg or ModelConfig())
    st = score_generated(model, probe_n, np.random.default_rng([seed, 8])).stats()
    return st.sigma_g, st.sigma_c
