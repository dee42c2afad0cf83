"""Fitting capacity, GOLD trend logs and score histograms."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gold as G
from .nncore import AdamState, Network, adam_step, clamp_prob

log = logging.getLogger(__name__)

REFERENCE_SAMPLES_PER_EPOCH = 10_000
CHANCE_BAND = 0.1


@dataclass
class FitConfig:
    """Evaluation-classifier settings (an MLP stands in for LeNet)."""

    epochs: int = 40
    samples_per_epoch: int = 2000
    batch_size: int = 100
    hidden: tuple = (32,)
    lr: float = 1e-3


@dataclass
class FittingCapacityReport:
    accuracy: float
    per_class_accuracy: list
    class_counts: list
    epoch_accuracy: list
    epochs: int
    samples_per_epoch: int
    scale_factor: float
    seed: int | None
    train_source: str
    warnings: list = field(default_factory=list)
    config_hash: str = ""

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def model_sampler(model):
    """Sampler drawing class-uniform generated samples from a cGAN."""
    def draw(n, rng):
        return model.sample(n, rng)
    draw.source = "generator"
    return draw


def fixed_sampler(x, c, source="fixed"):
    """Sampler that replays a fixed sample set, reshuffled each epoch."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=np.int64)

    def draw(n, rng):
        idx = rng.permutation(len(c))
        return x[idx], c[idx]
    draw.source = source
    return draw


def _predict(net, x):
    return np.argmax(net(x), axis=1)


def fitting_capacity(sampler, test_x, test_c, class_count, config: FitConfig | None = None,
                     rng=None, seed=None, config_hash=""):
    """Train a fresh classifier only on ``sampler`` output; report real-test accuracy.

    ``sampler(n, rng)`` returns ``(x, c)``; it is called once per epoch, so a
    model sampler yields fresh samples every epoch. The reported accuracy is
    the final-epoch one; the per-epoch curve is kept in the report.
    """
    config = config or FitConfig()
    rng = rng if rng is not None else np.random.default_rng(seed)
    test_x = np.asarray(test_x, dtype=float)
    test_c = np.asarray(test_c, dtype=np.int64)
    K = class_count
    net = Network.mlp([test_x.shape[1], *config.hidden, K], "relu", "softmax", rng)
    opt = AdamState(net.params.size, lr=config.lr, beta1=0.9, beta2=0.999)
    warnings = []
    curve = []
    for epoch in range(config.epochs):
        x, c = sampler(config.samples_per_epoch, rng)
        if epoch == 0 and len(x) > 1 and np.ptp(x, axis=0).max() < 1e-9:
            warnings.append("degenerate generator: all samples identical within 1e-9")
        n = len(c)
        for start in range(0, n, config.batch_size):
            xb, cb = x[start:start + config.batch_size], c[start:start + config.batch_size]
            out, cache = net.forward(xb)
            rows = np.arange(len(cb))
            g = out.copy()
            g[rows, cb] -= 1.0
            g /= len(cb)
            net.backward(cache, g, from_preact=True, need_input_grad=False)
            adam_step(net.params, net.grads, opt)
        curve.append(float(np.mean(_predict(net, test_x) == test_c)))
    pred = _predict(net, test_x)
    per_class, counts = [], []
    for k in range(K):
        mask = test_c == k
        counts.append(int(mask.sum()))
        per_class.append(float(np.mean(pred[mask] == k)) if mask.any() else float("nan"))
    acc = float(np.mean(pred == test_c))
    if acc < 1.0 / K + CHANCE_BAND:
        warnings.append(f"chance-level fitting capacity ({acc:.3f} < 1/K + {CHANCE_BAND})")
    for w in warnings:
        log.warning(w)
    return FittingCapacityReport(
        accuracy=acc, per_class_accuracy=per_class, class_counts=counts, epoch_accuracy=curve,
        epochs=config.epochs, samples_per_epoch=config.samples_per_epoch,
        scale_factor=config.samples_per_epoch / REFERENCE_SAMPLES_PER_EPOCH, seed=seed,
        train_source=getattr(sampler, "source", "custom"), warnings=warnings,
        config_hash=config_hash)


# -- trend logs -----------------------------------------------------------------

TREND_COLUMNS = ["step", "phase", "mean_gold", "mean_marginal", "mean_conditional",
                 "sigma_g", "sigma_c"]


@dataclass
class TrendRow:
    step: int
    phase: str
    mean_gold: float
    mean_marginal: float
    mean_conditional: float
    sigma_g: float
    sigma_c: float


class TrendLog(list):
    """Rows of generated-sample GOLD statistics with strictly increasing steps."""

    def append(self, row: TrendRow):
        if self and row.step <= self[-1].step:
            raise ValueError(f"trend steps must increase ({row.step} after {self[-1].step})")
        super().append(row)

    def write_csv(self, path, config_hash=""):
        with open(path, "w", newline="") as f:
            f.write(f"# config_hash: {config_hash}\n")
            w = csv.writer(f)
            w.writerow(TREND_COLUMNS)
            for r in self:
                w.writerow([r.step, r.phase] + [repr(float(getattr(r, k))) for k in TREND_COLUMNS[2:]])

    @classmethod
    def read_csv(cls, path):
        out = cls()
        for r in read_commented_csv(path, TREND_COLUMNS):
            out.append(TrendRow(int(r["step"]), r["phase"],
                                *[float(r[k]) for k in TREND_COLUMNS[2:]]))
        return out


def read_commented_csv(path, required):
    """DictReader over a CSV whose leading ``#`` lines are metadata."""
    with open(path, newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    reader = csv.DictReader(lines)
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}; found {reader.fieldnames}")
    return list(reader)


def score_generated(model, n, rng, classes=None):
    """Raw GOLD scores of ``n`` fresh generated samples."""
    x, c = model.sample(n, rng, classes)
    d_g, d_c = model.discriminate(x)
    return G.gold_batch(d_g, d_c[np.arange(len(c)), c], G.GENERATED, labels=c)


def log_trend(model, step, log: TrendLog, probe_n=512, rng=None, phase="baseline"):
    """Score a generated probe batch and append its means and spreads."""
    scores = score_generated(model, probe_n, rng)
    st = scores.stats()
    log.append(TrendRow(step, phase, float(np.mean(scores.combined)),
                        float(np.mean(scores.marginal)), float(np.mean(scores.conditional)),
                        st.sigma_g, st.sigma_c))
    return log


# -- histograms -------------------------------------------------------------------

def export_histogram(scores, bins=30):
    """Equal-width histograms of marginal and (signed) conditional terms.

    Returns ``{"marginal": (edges, counts), "conditional": (edges, counts)}``.
    """
    if isinstance(scores, G.ScoreBatch):
        marg, cond = scores.marginal, scores.conditional
    else:
        scores = list(scores)
        marg = np.array([s.marginal for s in scores])
        cond = np.array([s.conditional for s in scores])
    if len(marg) == 0:
        raise ValueError("no scores to histogram")
    out = {}
    for name, vals in (("marginal", marg), ("conditional", cond)):
        counts, edges = np.histogram(vals, bins=bins, range=(vals.min(), vals.max()))
        out[name] = (edges, counts)
    return out


HISTOGRAM_COLUMNS = ["term", "bin_left", "bin_right", "count"]


def write_histogram_csv(path, hist, config_hash=""):
    with open(path, "w", newline="") as f:
        f.write(f"# config_hash: {config_hash}\n")
        w = csv.writer(f)
        w.writerow(HISTOGRAM_COLUMNS)
        for term, (edges, counts) in hist.items():
            for lo, hi, n in zip(edges[:-1], edges[1:], counts):
                w.writerow([term, repr(float(lo)), repr(float(hi)), int(n)])
