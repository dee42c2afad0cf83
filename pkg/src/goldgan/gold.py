"""Gap-of-log-densities scores computed from discriminator outputs.

For a sample x with class c the gap log p_data(x, c) - log p_g(x, c) splits
into a marginal term, estimated by the real/generated head as
log(D_G / (1 - D_G)), and a conditional term estimated by the class head:
``+log D_C(c|x)`` for generated samples, ``-log D_C(c|x)`` for real ones,
and the class-posterior entropy when the label is unknown. The balanced
forms rescale the conditional term by sigma_G / sigma_C.

D_G is clamped to [1e-7, 1 - 1e-7] so the marginal term stays finite. D_C
only needs the lower bound (log 1 = 0), so it is clamped from below only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .nncore import PROB_CLAMP, clamp_prob

GENERATED = "generated"
REAL = "real"
UNLABELED = "unlabeled"
PROVENANCES = (GENERATED, REAL, UNLABELED)


class DegenerateStatsError(ValueError):
    """sigma_C is zero, so the balanced ratio is undefined."""


@dataclass(frozen=True)
class GoldScore:
    marginal: float
    conditional: float
    provenance: str
    label: int | None = None

    @property
    def combined(self):
        return self.marginal + self.conditional


@dataclass(frozen=True)
class ScoreStats:
    sigma_g: float
    sigma_c: float
    n: int

    @property
    def ratio(self):
        if self.sigma_c <= 0:
            raise DegenerateStatsError("sigma_C = 0; balanced GOLD undefined")
        return self.sigma_g / self.sigma_c


@dataclass
class ScoreBatch:
    """Vectorized scores: one entry per sample.

    ``raw_conditional`` holds the unsigned conditional magnitude
    (|log D_C| or the entropy) before any balancing; sigma_C is taken over it.
    """

    marginal: np.ndarray
    conditional: np.ndarray
    raw_conditional: np.ndarray
    provenance: str
    labels: np.ndarray | None = None

    @property
    def combined(self):
        return self.marginal + self.conditional

    def __len__(self):
        return len(self.marginal)

    def to_scores(self):
        labels = self.labels if self.labels is not None else [None] * len(self)
        return [GoldScore(float(m), float(c), self.provenance, None if l is None else int(l))
                for m, c, l in zip(self.marginal, self.conditional, labels)]

    def stats(self):
        return _stats(self.marginal, self.raw_conditional)


def marginal_term(d_g):
    """log(D_G / (1 - D_G)) on clamped probabilities."""
    d_g = clamp_prob(np.asarray(d_g, dtype=float))
    return np.log(d_g) - np.log1p(-d_g)


def entropy(d_c):
    """Natural-log entropy of each row of a class distribution (0 log 0 = 0)."""
    p = np.asarray(d_c, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=-1)


def _sign(provenance):
    if provenance == GENERATED:
        return 1.0
    if provenance == REAL:
        return -1.0
    if provenance == UNLABELED:
        raise ValueError("unlabeled samples have no class; use gold_unlabeled")
    raise ValueError(f"unknown provenance {provenance!r}")


def gold_batch(d_g, d_c_at_label, provenance, stats: ScoreStats | None = None, labels=None):
    """Raw (stats None) or balanced GOLD for labeled samples."""
    sign = _sign(provenance)
    marg = marginal_term(d_g)
    raw = -np.log(np.maximum(np.asarray(d_c_at_label, dtype=float), PROB_CLAMP))
    scale = 1.0 if stats is None else stats.ratio
    cond = -sign * scale * raw
    return ScoreBatch(np.atleast_1d(marg), np.atleast_1d(cond), np.atleast_1d(raw),
                      provenance, None if labels is None else np.asarray(labels))


def gold_unlabeled_batch(d_g, d_c, stats: ScoreStats | None = None):
    """marginal + H[D_C(.|x)], optionally with the entropy scaled by sigma_G/sigma_C."""
    marg = np.atleast_1d(marginal_term(d_g))
    h = np.atleast_1d(entropy(np.atleast_2d(d_c)))
    scale = 1.0 if stats is None else stats.ratio
    return ScoreBatch(marg, scale * h, h, UNLABELED)


def gold(d_g, d_c_at_label, provenance) -> GoldScore:
    b = gold_batch(d_g, d_c_at_label, provenance)
    return GoldScore(float(b.marginal[0]), float(b.conditional[0]), provenance)


def gold_balanced(d_g, d_c_at_label, provenance, stats: ScoreStats) -> GoldScore:
    b = gold_batch(d_g, d_c_at_label, provenance, stats)
    return GoldScore(float(b.marginal[0]), float(b.conditional[0]), provenance)


def gold_unlabeled(d_g, d_c, stats: ScoreStats | None = None) -> GoldScore:
    b = gold_unlabeled_batch(d_g, d_c, stats)
    return GoldScore(float(b.marginal[0]), float(b.conditional[0]), UNLABELED)


def _stats(marginal, raw_conditional):
    n = len(marginal)
    if n < 2:
        raise ValueError(f"score statistics need at least 2 samples, got {n}")
    return ScoreStats(float(np.std(marginal)), float(np.std(np.abs(raw_conditional))), n)


def score_stats(scores) -> ScoreStats:
    """Population std of marginal terms and of conditional-term magnitudes."""
    if isinstance(scores, ScoreBatch):
        return scores.stats()
    scores = list(scores)
    return _stats(np.array([s.marginal for s in scores]),
                  np.array([abs(s.conditional) for s in scores]))


def bayes_marginal(log_p_data, log_p_g):
    """Marginal term of the Bayes-optimal discriminator, built in log space.

    D* = p_data / (p_data + p_g); returns (log D*, log(1 - D*), logit D*).
    """
    log_p_data = np.asarray(log_p_data, dtype=float)
    log_p_g = np.asarray(log_p_g, dtype=float)
    log_total = np.logaddexp(log_p_data, log_p_g)
    log_d = log_p_data - log_total
    log_1md = log_p_g - log_total
    return log_d, log_1md, log_d - log_1md


def gold_oracle_check(data_mix, model_mix, x, c):
    """Compare the exact gap with its optimal-discriminator surrogate.

    Returns ``(true_gap, surrogate_gap, surrogate_marginal, exact_log_ratio)``
    for each row of ``x`` with class ``c``. The surrogate conditional term
    uses the exact class posteriors of both mixtures.
    """
    c = np.asarray(c, dtype=np.int64)
    rows = np.arange(len(c))
    lp_data, lj_data = data_mix.log_density(x)
    lp_g, lj_g = model_mix.log_density(x)
    true_gap = lj_data[rows, c] - lj_g[rows, c]
    _, _, surrogate_marg = bayes_marginal(lp_data, lp_g)
    cond = (lj_data[rows, c] - lp_data) - (lj_g[rows, c] - lp_g)
    return true_gap, surrogate_marg + cond, surrogate_marg, lp_data - lp_g


# -- score dump CSV ------------------------------------------------------------

SCORE_COLUMNS = ["sample_id", "provenance", "class", "d_g", "d_c_at_label_or_entropy",
                 "marginal", "conditional", "combined"]


def write_scores_csv(path, batch: ScoreBatch, d_g, d_c_term, sample_ids=None):
    n = len(batch)
    ids = range(n) if sample_ids is None else sample_ids
    labels = batch.labels if batch.labels is not None else [""] * n
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SCORE_COLUMNS)
        for i, sid in enumerate(ids):
            w.writerow([sid, batch.provenance, labels[i], repr(float(d_g[i])),
                        repr(float(d_c_term[i])), repr(float(batch.marginal[i])),
                        repr(float(batch.conditional[i])), repr(float(batch.combined[i]))])


def read_scores_csv(path):
    """Load a score dump as a list of dict rows with numeric fields parsed."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(SCORE_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing score columns {sorted(missing)}")
        rows = []
        for r in reader:
            rows.append({
                "sample_id": int(r["sample_id"]),
                "provenance": r["provenance"],
                "class": int(r["class"]) if r["class"] != "" else None,
                **{k: float(r[k]) for k in SCORE_COLUMNS[3:]},
            })
    return rows
