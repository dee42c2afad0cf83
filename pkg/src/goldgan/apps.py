"""GOLD applications: re-weighted training, rejection sampling, active learning."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import binomtest

from . import gold as G
from .cgan import CGanModel, ModelConfig, TrainConfig, gold_weight, train_step
from .data import SamplePool, Standardizer, make_pool
from .evaluation import (FitConfig, TrendLog, fitting_capacity, log_trend, model_sampler)

log = logging.getLogger(__name__)


# -- re-weighted training schedule ----------------------------------------------

@dataclass
class WeightFn:
    """``sign(d) |d|^beta``; beta = 0 means no re-weighting unless ``literal``."""

    beta: float
    literal: bool = False

    def __call__(self, d):
        return gold_weight(d, self.beta, self.literal)


def _batch(rng, x, c, n):
    idx = rng.integers(0, len(x), size=n)
    return x[idx], (None if c is None else c[idx])


def train_schedule(model: CGanModel, labeled, unlabeled, config: TrainConfig, rng,
                   trend_interval=50, probe_n=512, probe_rng=None, start_step=0,
                   phases=None):
    """Run baseline steps then re-weighted steps.

    ``labeled`` is ``(x, c)``, ``unlabeled`` an x array or None. Returns
    ``(metric rows, TrendLog)``; the trend probe uses ``probe_rng`` so
    logging never perturbs the training stream. ``phases`` overrides the
    schedule with an explicit list of ``(name, steps)``.
    """
    x_l, c_l = labeled
    if phases is None:
        phases = [("baseline", config.baseline_steps), ("reweight", config.reweight_steps)]
    probe_rng = probe_rng if probe_rng is not None else np.random.default_rng(0)
    rows, trend = [], TrendLog()
    step = start_step
    n_l = min(config.batch_size, len(x_l))
    for phase, n_steps in phases:
        betas = (config.beta_d, config.beta_g) if phase == "reweight" else (0.0, 0.0)
        for _ in range(n_steps):
            xb, cb = _batch(rng, x_l, c_l, n_l)
            xu = None
            if unlabeled is not None and len(unlabeled):
                xu, _ = _batch(rng, unlabeled, None, config.batch_size)
            m = train_step(model, (xb, cb), xu, config, rng, *betas)
            step += 1
            rows.append({"step": step, "phase": phase, **m})
            if trend_interval and step % trend_interval == 0:
                log_trend(model, step, trend, probe_n, probe_rng, phase)
    return rows, trend


# -- rejection sampling ----------------------------------------------------------

class StarvationError(RuntimeError):
    pass


@dataclass
class RejectionConfig:
    p: float = 0.5
    batch_size: int = 500
    target_accept_count: int = 5000
    eps: float = 1e-7
    starvation_rate: float = 1e-4
    starvation_batches: int = 100

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"p must lie in [0, 1), got {self.p}")


def pullback_logits(log_r, eps=1e-7):
    """logit(r) for acceptance ratios given in log space, r clamped to <= 1 - eps."""
    log_r = np.minimum(np.asarray(log_r, dtype=float), np.log1p(-eps))
    return log_r - np.log(-np.expm1(log_r))


def shift_gamma(logits, p):
    """p-th quantile (linear interpolation) of the pulled-back logits.

    p = 0 disables rejection: gamma = -inf, so every candidate is accepted
    with probability 1 - eps.
    """
    if p == 0:
        return -np.inf
    return float(np.quantile(logits, p))


def acceptance_rate(score, M, gamma, eps=1e-7):
    """f(f^-1(exp(d)/M) - gamma) with f the logistic sigmoid."""
    d = score.combined if isinstance(score, G.GoldScore) else np.asarray(score, dtype=float)
    log_r = d - np.log(M)
    if np.any(log_r > 1e-12):
        raise ValueError("M must be >= exp(d) so that the raw ratio is <= 1")
    out = np.minimum(expit(pullback_logits(log_r, eps) - gamma), 1.0 - eps)
    return float(out) if np.ndim(out) == 0 else out


def balanced_generated_scores(model, x, classes):
    """Balanced GOLD of generated samples, statistics taken over this batch."""
    d_g, d_c = model.discriminate(x)
    pc = d_c[np.arange(len(classes)), classes]
    raw = G.gold_batch(d_g, pc, G.GENERATED, labels=classes)
    try:
        return G.gold_batch(d_g, pc, G.GENERATED, raw.stats(), labels=classes)
    except (G.DegenerateStatsError, ValueError):
        log.info("degenerate batch statistics; using raw GOLD for this batch")
        return raw


@dataclass
class RejectionResult:
    x: np.ndarray
    c: np.ndarray
    accepted_dbal: np.ndarray
    candidate_dbal: np.ndarray
    n_candidates: int

    @property
    def acceptance(self):
        return len(self.c) / max(1, self.n_candidates)


def rejection_sample(model, class_counts, config: RejectionConfig, rng, scorer=None):
    """Draw exactly ``class_counts[k]`` accepted samples of each class.

    Each candidate batch is scored with balanced GOLD; M is the batch
    maximum of exp(d_bal) and gamma the p-th quantile of the batch's
    pulled-back logits.
    """
    scorer = scorer or balanced_generated_scores
    need = np.asarray(class_counts, dtype=np.int64).copy()
    K = len(need)
    got_x = [[] for _ in range(K)]
    got_d = [[] for _ in range(K)]
    cand_d = []
    n_cand = 0
    starved = 0
    while need.sum() > 0:
        classes = rng.choice(K, size=config.batch_size, p=need / need.sum())
        z = rng.standard_normal((config.batch_size, model.latent_dim))
        x = model.generate(z, classes)
        d = scorer(model, x, classes).combined
        F = pullback_logits(d - d.max(), config.eps)
        acc = np.minimum(expit(F - shift_gamma(F, config.p)), 1.0 - config.eps)
        keep = rng.random(config.batch_size) < acc
        n_cand += config.batch_size
        cand_d.append(d)
        starved = starved + 1 if keep.mean() < config.starvation_rate else 0
        if starved >= config.starvation_batches:
            raise StarvationError(
                f"acceptance below {config.starvation_rate} for {starved} consecutive batches; "
                f"lower p (currently {config.p})")
        for k in range(K):
            idx = np.flatnonzero(keep & (classes == k))[:need[k]]
            got_x[k].append(x[idx])
            got_d[k].append(d[idx])
            need[k] -= len(idx)
    xs = np.vstack([np.vstack(g) for g in got_x if g])
    cs = np.concatenate([np.full(sum(len(a) for a in got_x[k]), k) for k in range(K)])
    ds = np.concatenate([np.concatenate(g) for g in got_d if g])
    return RejectionResult(xs, cs, ds, np.concatenate(cand_d), n_cand)


def plain_sample(model, class_counts, rng):
    xs, cs = [], []
    for k, n in enumerate(class_counts):
        x, c = model.sample(int(n), rng, classes=np.full(int(n), k))
        xs.append(x)
        cs.append(c)
    return np.vstack(xs), np.concatenate(cs)


# -- active learning -------------------------------------------------------------

@dataclass
class ActiveConfig:
    triplet: tuple = (4, 1, 8)
    round_steps: int = 2000
    eval_every: int = 200
    balanced: bool = True
    data_n: int = 2000
    test_n: int = 1000
    validation_n: int = 100
    val_fit: FitConfig = field(default_factory=lambda: FitConfig(epochs=10, samples_per_epoch=1000))
    test_fit: FitConfig = field(default_factory=FitConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(lambda_c=0.01))

    @property
    def rounds(self):
        initial, query, final = self.triplet
        if query <= 0 or (final - initial) % query:
            raise ValueError(f"triplet {self.triplet}: final - initial must be a multiple of query")
        return (final - initial) // query


@dataclass
class RoundRecord:
    round: int
    labeled_size: int
    fitting_capacity: float
    val_fitting_capacity: float
    best_step: int
    selected_ids: list = field(default_factory=list)
    sigma_g: float = float("nan")
    sigma_c: float = float("nan")


@dataclass
class ActiveState:
    triplet: tuple
    strategy: str
    round: int = 0
    history: list = field(default_factory=list)
    best_checkpoint: dict | None = field(default=None, repr=False)

    @property
    def final_fitting_capacity(self):
        return self.history[-1].fitting_capacity


def top_k(combined, ids, k):
    """Indices of the k largest scores; ties go to the smaller sample id."""
    order = np.lexsort((np.asarray(ids), -np.asarray(combined)))
    return [int(ids[i]) for i in order[:k]]


def select_queries(d_g, d_c, ids, k, balanced):
    """Top-k unlabeled samples by (balanced) unlabeled GOLD, stats over the whole pool."""
    if len(ids) == 0:
        raise ValueError("empty unlabeled pool")
    if k > len(ids):
        raise ValueError(f"k = {k} exceeds pool size {len(ids)}")
    raw = G.gold_unlabeled_batch(d_g, d_c)
    scores = raw
    if balanced:
        try:
            scores = G.gold_unlabeled_batch(d_g, d_c, raw.stats())
        except (G.DegenerateStatsError, ValueError):
            log.info("degenerate pool statistics; acquiring with raw GOLD")
    return top_k(scores.combined, ids, k), scores


def acquire_queries(model, pool: SamplePool, k, balanced, transform=None):
    """Score the whole unlabeled pool with the model and return the top-k sample ids."""
    x = pool.unlabeled
    if transform is not None:
        x = transform(x)
    d_g, d_c = model.discriminate(x)
    return select_queries(d_g, d_c, np.asarray(pool.unlabeled_ids), k, balanced)


def _train_round(model, pool, std: Standardizer, cfg: ActiveConfig, rng, seed, rnd):
    """Semi-supervised training with validation-based checkpoint selection."""
    x_l, c_l = pool.labeled
    x_l = std.transform(x_l)
    x_u = std.transform(pool.unlabeled)
    x_v, c_v = pool.validation
    x_v = std.transform(x_v)
    K = pool.class_count
    best = (-1.0, 0, None)
    n_l = min(cfg.train.batch_size, len(x_l))
    for step in range(1, cfg.round_steps + 1):
        if n_l == len(x_l):
            xb, cb = x_l, c_l
        else:
            xb, cb = _batch(rng, x_l, c_l, n_l)
        xu, _ = _batch(rng, x_u, None, cfg.train.batch_size)
        train_step(model, (xb, cb), xu, cfg.train, rng)
        if step % cfg.eval_every == 0 or step == cfg.round_steps:
            rep = fitting_capacity(model_sampler(model), x_v, c_v, K, cfg.val_fit,
                                   rng=np.random.default_rng([seed, 1, rnd, step]))
            if rep.accuracy > best[0]:
                best = (rep.accuracy, step, model.snapshot())
    model.restore(best[2])
    x_t, c_t = pool.test
    test = fitting_capacity(model_sampler(model), std.transform(x_t), c_t, K, cfg.test_fit,
                            rng=np.random.default_rng([seed, 2, rnd]))
    return RoundRecord(rnd, len(pool.labeled_ids), test.accuracy, best[0], best[1])


def _acquire(model, pool, std, cfg, strategy, acq_rng, record):
    k = cfg.triplet[1]
    if strategy == "gold":
        ids, scores = acquire_queries(model, pool, k, cfg.balanced, std.transform)
        st = scores.stats() if len(scores) >= 2 else None
        if st is not None:
            record.sigma_g, record.sigma_c = st.sigma_g, st.sigma_c
    elif strategy == "random":
        ids = [int(i) for i in acq_rng.choice(pool.unlabeled_ids, size=k, replace=False)]
    else:
        raise ValueError(f"unknown acquisition strategy {strategy!r}")
    for i in ids:
        pool.label_query(i)
    record.selected_ids = ids


def _streams(seed):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def _setup_trial(data, cfg: ActiveConfig, seed):
    """Shared pool, standardizer, fresh model and training rng for one trial."""
    data_rng, init_rng, train_rng, acq_rng = _streams(seed)
    x, c = data if not callable(data) else data(cfg.data_n + cfg.test_n + cfg.validation_n, data_rng)
    pool = make_pool(x, c, cfg.triplet[0], cfg.test_n, data_rng, validation_n=cfg.validation_n)
    train_ids = np.asarray(pool.labeled_ids + pool.unlabeled_ids)
    std = Standardizer.fit(pool.x[train_ids])
    model = CGanModel(cfg.model, init_rng, cfg.train)
    return pool, std, model, train_rng, acq_rng


def _run_rounds(state, model, pool, std, cfg, train_rng, acq_rng, seed, start, observer=None):
    for rnd in range(start, cfg.rounds + 1):
        if rnd > 0:
            _acquire(model, pool, std, cfg, state.strategy, acq_rng, state.history[-1])
            model.reinit_discriminator(train_rng)
            state.history.append(_train_round(model, pool, std, cfg, train_rng, seed, rnd))
        state.round = rnd
        if observer is not None:
            observer(state, model, pool, std)
        log.info("trial %s %s round %d: labeled %d, fitting capacity %.4f", seed, state.strategy,
                 rnd, state.history[-1].labeled_size, state.history[-1].fitting_capacity)
    state.best_checkpoint = model.snapshot()
    return state


def active_learning_run(data, cfg: ActiveConfig, seed, strategy="gold", observer=None):
    """One active-learning trial: train, pick best validation checkpoint, score the
    pool, label ``query`` samples, keep G / re-init D, repeat."""
    pool, std, model, train_rng, acq_rng = _setup_trial(data, cfg, seed)
    state = ActiveState(tuple(cfg.triplet), strategy)
    state.history.append(_train_round(model, pool, std, cfg, train_rng, seed, 0))
    return _run_rounds(state, model, pool, std, cfg, train_rng, acq_rng, seed, 0, observer)


def paired_trial(data, cfg: ActiveConfig, seed, strategies=("gold", "random"), observer=None):
    """Run several acquisition arms that share the data, initial labeled set,
    initialization and the first training round; they differ only in acquisition."""
    pool, std, model, train_rng, acq_rng = _setup_trial(data, cfg, seed)
    first = _train_round(model, pool, std, cfg, train_rng, seed, 0)
    out = {}
    for strategy in strategies:
        state = ActiveState(tuple(cfg.triplet), strategy, history=[copy.deepcopy(first)])
        out[strategy] = _run_rounds(state, copy.deepcopy(model), pool.snapshot(), std, cfg,
                                    copy.deepcopy(train_rng), copy.deepcopy(acq_rng), seed, 0,
                                    observer)
    return out


def sign_test(a, b, alternative="greater"):
    """Paired sign test of ``a`` against ``b``; ties are dropped."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    wins, losses = int(np.sum(diff > 0)), int(np.sum(diff < 0))
    n = wins + losses
    p = 1.0 if n == 0 else float(binomtest(wins, n, 0.5, alternative=alternative).pvalue)
    return {"wins": wins, "losses": losses, "ties": len(diff) - n, "p_value": p}
