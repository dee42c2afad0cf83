"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py``; the verdicts are printed
in the terminal summary. Criteria 4-6 and 8 are multi-seed experiments and
take most of the runtime (criterion 6 alone is roughly 15 minutes on one core).
"""

import math
import time

import numpy as np
import pytest
from scipy.special import lambertw

from conftest import VERDICTS
from gradcheck import numeric_grad, rel_error

from goldgan import cgan as C
from goldgan import cli
from goldgan import data as D
from goldgan import gold as G
from goldgan import nncore as nn
from goldgan.apps import ActiveConfig, paired_trial, sign_test
from goldgan.cgan import CGanModel, ModelConfig, TrainConfig
from goldgan.experiments import reweight_pair, rejection_trial, scale_imbalance

SEEDS = range(5)
REJECTION_TRAIN_STEPS = 50


def verdict(n, ok, detail):
    VERDICTS.append((n, bool(ok), detail))
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# -- 1 -----------------------------------------------------------------------------

def _net_error(act, spectral, seed):
    rng = np.random.default_rng(seed)
    net = nn.Network.mlp([3, 4, 3], act, act, rng, spectral=spectral)
    for layer in net.layers:
        layer.bias[...] = rng.normal(0.0, 0.3, layer.n_out)
    net.power_step(3)
    x = rng.standard_normal((4, 3))
    R = rng.standard_normal((4, 3))
    out, cache = net.forward(x)
    net.backward(cache, R)
    a = net.grads.copy()
    return rel_error(a, numeric_grad(lambda: float(np.sum(net(x) * R)), net.params))


def _ce_error(seed):
    # softmax + cross-entropy fused at the pre-activation, as the evaluation classifier uses it
    rng = np.random.default_rng(seed)
    net = nn.Network.mlp([3, 5, 3], "relu", "softmax", rng)
    for layer in net.layers:
        layer.bias[...] = rng.normal(0.0, 0.3, layer.n_out)
    x, c = rng.standard_normal((6, 3)), rng.integers(0, 3, 6)
    rows = np.arange(6)
    out, cache = net.forward(x)
    g = out.copy()
    g[rows, c] -= 1.0
    net.backward(cache, g / 6, from_preact=True)
    a = net.grads.copy()
    return rel_error(a, numeric_grad(lambda: float(np.mean(-np.log(net(x)[rows, c]))), net.params))


def _gan_errors(seed):
    rng = np.random.default_rng(seed)
    m = CGanModel(ModelConfig(latent_dim=2, g_hidden=(3,), d_hidden=(3,)), rng)
    for net in (m.generator, *m.discriminator_nets):
        net.params[...] = rng.normal(0.0, 0.7, net.params.size)
    xl, cl = rng.standard_normal((6, 2)), rng.integers(0, 2, 6)
    xu = rng.standard_normal((3, 2))
    xf, cf = rng.standard_normal((5, 2)), rng.integers(0, 2, 5)
    wd = rng.uniform(-1, 2, 5)

    def d_loss():
        return C.discriminator_loss_and_grads(m, xl, cl, xu, xf, cf, 0.3, wd)["d_loss"]

    d_loss()
    errs = [rel_error(n.grads.copy(), numeric_grad(d_loss, n.params)) for n in m.discriminator_nets]
    z, c = m.sample_latent(6, rng)
    wg = rng.uniform(-1, 2, 6)

    def g_loss():
        return C.generator_loss_and_grads(m, z, c, 0.3, lambda d: wg)["g_loss"]

    g_loss()
    errs.append(rel_error(m.generator.grads.copy(), numeric_grad(g_loss, m.generator.params)))
    return max(errs)


def test_criterion_1_gradient_integrity():
    t = time.perf_counter()
    worst = {}
    for act in nn.ACTIVATIONS:
        for spectral in (False, True):
            worst[f"{act}{'+sn' if spectral else ''}"] = max(_net_error(act, spectral, s) for s in range(20))
    worst["softmax-ce"] = max(_ce_error(s) for s in range(20))
    worst["gan-losses"] = max(_gan_errors(s) for s in range(20))
    elapsed = time.perf_counter() - t
    top = max(worst, key=worst.get)
    verdict(1, max(worst.values()) < 1e-3 and elapsed < 30,
            f"worst relative error {worst[top]:.2e} ({top}) over {len(worst)} combinations x 20 seeds; "
            f"{elapsed:.1f} s")


# -- 2 -----------------------------------------------------------------------------

def test_criterion_2_oracle_equivalence():
    t = time.perf_counter()
    data = D.SyntheticMixture.circle()
    model = D.SyntheticMixture.circle(radius=3.5, variance=0.3)
    rng = np.random.default_rng(0)
    x, c = data.sample(1000, rng)
    x = x + rng.normal(0, 0.5, x.shape)
    _, _, marg, exact = G.gold_oracle_check(data, model, x, c)
    err = float(np.max(np.abs(marg - exact)))
    elapsed = time.perf_counter() - t
    verdict(2, err <= 1e-12 and elapsed < 5, f"max |marginal - log ratio| {err:.1e} on 1000 points; {elapsed:.2f} s")


# -- 3 -----------------------------------------------------------------------------

def test_criterion_3_estimator_units():
    ln = math.log
    st = G.ScoreStats
    checks = {
        "raw neutral real": (G.gold(0.5, 1.0, G.REAL).combined, 0.0),
        "raw neutral generated": (G.gold(0.5, 1.0, G.GENERATED).combined, 0.0),
        "raw real 0.8/0.5": (G.gold(0.8, 0.5, G.REAL).combined, ln(8)),
        "raw generated 0.2/0.5": (G.gold(0.2, 0.5, G.GENERATED).combined, ln(0.25) + ln(0.5)),
        "balanced unit ratio": (G.gold_balanced(0.8, 0.5, G.REAL, st(2, 2, 2)).combined, ln(8)),
        "balanced 0.5/e^-1 ratio 2": (G.gold_balanced(0.5, math.exp(-1), G.GENERATED, st(2, 1, 2)).combined, -2.0),
        "entropy one-hot": (G.entropy([1.0, 0.0]), 0.0),
        "entropy uniform": (G.entropy([0.5, 0.5]), ln(2)),
        "entropy 0.75/0.25": (G.entropy([0.75, 0.25]), -(0.75 * ln(0.75) + 0.25 * ln(0.25))),
        "unlabeled neutral": (G.gold_unlabeled(0.5, [1.0, 0.0]).combined, 0.0),
        "unlabeled 0.9 uniform": (G.gold_unlabeled(0.9, [0.5, 0.5]).combined, ln(9) + ln(2)),
        "unlabeled balanced unit": (G.gold_unlabeled(0.9, [0.5, 0.5], st(1, 1, 2)).combined, ln(9) + ln(2)),
    }
    s = G.score_stats([G.GoldScore(-1, -1, G.GENERATED), G.GoldScore(1, -3, G.GENERATED)])
    checks["stats sigma_G"] = (s.sigma_g, 1.0)
    checks["stats sigma_C"] = (s.sigma_c, 1.0)
    same = G.score_stats([G.GoldScore(0.2, -0.4, G.REAL)] * 3)
    checks["stats identical"] = (same.sigma_g + same.sigma_c, 0.0)
    bad = [k for k, (got, want) in checks.items() if not abs(got - want) <= 1e-9]
    grid = np.linspace(1e-6, 1 - 1e-6, 60)
    dg, dc = np.meshgrid(grid, grid)
    real = G.gold_batch(dg.ravel(), dc.ravel(), G.REAL).conditional
    gen = G.gold_batch(dg.ravel(), dc.ravel(), G.GENERATED).conditional
    signs = bool(np.all(real >= 0) and np.all(gen <= 0))
    degenerate = False
    try:
        G.gold_balanced(0.5, 0.5, G.REAL, st(1, 0, 2))
    except G.DegenerateStatsError:
        degenerate = True
    verdict(3, not bad and signs and degenerate,
            f"{len(checks) - len(bad)}/{len(checks)} scalar examples within 1e-9; sign convention on "
            f"{dg.size} grid points {'holds' if signs else 'violated'}; sigma_C = 0 raises: {degenerate}"
            + (f"; failing {bad}" if bad else ""))


# -- 4 -----------------------------------------------------------------------------

@pytest.fixture(scope="module")
def reweight_runs():
    t = time.perf_counter()
    runs = [reweight_pair(s) for s in SEEDS]
    return runs, time.perf_counter() - t


def test_criterion_4_reweighting_direction(reweight_runs):
    runs, elapsed = reweight_runs
    lower = sum(r.reweight_gold < r.baseline_gold for r in runs)
    cap_b = float(np.mean([r.baseline_capacity for r in runs]))
    cap_r = float(np.mean([r.reweight_capacity for r in runs]))
    verdict(4, lower >= 4 and cap_r >= cap_b and elapsed < 1800,
            f"|mean GOLD| lower with re-weighting in {lower}/5 pairs; mean fitting capacity "
            f"re-weighted {cap_r:.4f} vs baseline {cap_b:.4f}; |GOLD| baseline/re-weighted "
            + ", ".join(f"{r.baseline_gold:.3f}/{r.reweight_gold:.3f}" for r in runs) + f"; {elapsed:.0f} s")


def test_reweighted_gold_settles_at_omega(reweight_runs):
    # with p_g = p_data and a confident class head, the weighted discriminator
    # is stationary where (1 - D) = d * D with d = logit(D), i.e. e^-d = d
    omega = float(lambertw(1.0).real)
    runs, _ = reweight_runs
    got = [r.reweight_gold for r in runs]
    assert all(abs(g - omega) < 0.05 for g in got), (omega, got)


# -- 5 -----------------------------------------------------------------------------

def test_criterion_5_rejection_direction():
    t = time.perf_counter()
    runs = [rejection_trial(s, train_steps=REJECTION_TRAIN_STEPS) for s in SEEDS]
    elapsed = time.perf_counter() - t
    better = sum(r.reject_capacity > r.plain_capacity for r in runs)
    dominance = sum(r.accepted_mean_dbal > r.candidate_mean_dbal for r in runs)
    caps = ", ".join(f"{r.plain_capacity:.3f}->{r.reject_capacity:.3f}" for r in runs)
    verdict(5, better >= 4 and dominance == 5 and elapsed < 1200,
            f"rejection beats plain in {better}/5 seeds ({caps}); accepted mean d_bal above "
            f"candidates in {dominance}/5; {REJECTION_TRAIN_STEPS} training steps; {elapsed:.0f} s")


# -- 6 -----------------------------------------------------------------------------

def test_criterion_6_active_learning_direction():
    t = time.perf_counter()
    cfg = ActiveConfig()
    mix = D.SyntheticMixture.circle()
    gold, rand = [], []
    for seed in range(25):
        arms = paired_trial(mix.sample, cfg, seed)
        gold.append(arms["gold"].final_fitting_capacity)
        rand.append(arms["random"].final_fitting_capacity)
    elapsed = time.perf_counter() - t
    st = sign_test(gold, rand)
    mg, mr = float(np.mean(gold)), float(np.mean(rand))
    verdict(6, mg >= mr and st["p_value"] < 0.1 and elapsed < 7200,
            f"triplet {cfg.triplet}, 25 paired trials: mean final fitting capacity GOLD {mg:.4f} vs "
            f"random {mr:.4f}; sign test {st['wins']}-{st['losses']} ({st['ties']} ties), "
            f"p = {st['p_value']:.3f}; {elapsed:.0f} s")


# -- 7 -----------------------------------------------------------------------------

def test_criterion_7_beta_zero_equivalence():
    rng = np.random.default_rng(0)
    x, c = rng.standard_normal((64, 2)), rng.integers(0, 2, 64)
    xu = rng.standard_normal((64, 2))
    cfg = TrainConfig(beta_d=0.0, beta_g=0.0)
    states = []
    for step in (C.train_step, C.reweighted_train_step):
        m = CGanModel(ModelConfig(), np.random.default_rng(1), cfg)
        for _ in range(3):
            step(m, (x, c), xu, cfg, np.random.default_rng(2))
        nets = (m.generator, *m.discriminator_nets)
        states.append((np.concatenate([n.grads for n in nets]), m.parameter_vector()))
    same_g = np.array_equal(states[0][0], states[1][0])
    same_p = np.array_equal(states[0][1], states[1][1])
    verdict(7, same_g and same_p, f"gradients bit-identical: {same_g}; parameters after 3 steps "
                                  f"bit-identical: {same_p}")


# -- 8 -----------------------------------------------------------------------------

def test_criterion_8_scale_imbalance():
    runs = [scale_imbalance(s) for s in SEEDS]
    hits = sum(g > c for g, c in runs)
    pairs = ", ".join(f"{g:.3f}/{c:.3f}" for g, c in runs)
    verdict(8, hits >= 4, f"sigma_G > sigma_C in {hits}/5 seeds (sigma_G/sigma_C: {pairs})")


# -- 9 -----------------------------------------------------------------------------

def test_criterion_9_infrastructure(tmp_path):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, (50, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, 50, dtype=np.uint8)
    D.write_idx(tmp_path / "img", tmp_path / "lab", imgs, labels)
    x, c = D.load_idx(tmp_path / "img", tmp_path / "lab")
    idx_ok = np.array_equal(np.rint(x * 255).astype(np.uint8).reshape(imgs.shape), imgs) and \
        np.array_equal(c, labels)

    m = CGanModel(ModelConfig(), rng)
    for net in (m.generator, *m.discriminator_nets):
        net.params[...] = rng.normal(0, 0.5, net.params.size)
    C.save_checkpoint(tmp_path / "m.ckpt", m)
    back, _ = C.load_checkpoint(tmp_path / "m.ckpt")
    z, cz = m.sample_latent(100, rng)
    xs = rng.standard_normal((100, 2))
    ckpt_ok = np.array_equal(back.generate(z, cz), m.generate(z, cz)) and all(
        np.array_equal(a, b) for a, b in zip(back.discriminate(xs), m.discriminate(xs)))

    fast = ["--set", "schedule.trend_interval=25", "--set", "eval.epochs=3", "-q"]
    run = tmp_path / "run"
    rc = [cli.main(["train", "--out", str(run / "train"), "--steps", "100", "--reweight-steps", "100", *fast])]
    ck = str(run / "train" / "model.ckpt")
    rc.append(cli.main(["sample", "--checkpoint", ck, "--out", str(run / "sample"), "--n", "500",
                        "--reject", "--p-sweep", "-q"]))
    rc.append(cli.main(["eval", "--checkpoint", ck, "--out", str(run / "eval"), *fast]))
    replays = [cli.main(["replay", str(run / sub / "manifest.json"), "--out", str(tmp_path / "re" / sub), "-q"])
               for sub in ("train", "sample", "eval")]
    replay_ok = rc == [0, 0, 0] and replays == [0, 0, 0]
    verdict(9, idx_ok and ckpt_ok and replay_ok,
            f"IDX round trip exact: {idx_ok}; checkpoint forward-identical: {ckpt_ok}; "
            f"manifest replay bit-exact for train/sample/eval: {replay_ok}")
