"""ACGAN-style conditional GAN on the dense-network core.

The generator maps ``z ++ onehot(c)`` to a sample; the discriminator is a
spectrally normalized trunk feeding a sigmoid real/generated head (D_G)
and a softmax class head (D_C). Probabilities are clamped to
[1e-7, 1 - 1e-7] before every loss log; gradients through a clamped entry
are zero, so loss values and gradients always agree. GOLD values clamp
D_C from below only, so D_C = 1 scores exactly zero.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .nncore import (AdamState, CheckpointFormatError, DenseLayer, DimensionError, Network,
                     PROB_CLAMP, adam_step, clamp_prob, read_network, write_network)

CGAN_MAGIC = b"CGAN"
CGAN_HEADER_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Non-finite loss; ``snapshot`` holds the offending metrics and batch sizes."""

    def __init__(self, message, snapshot):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass
class ModelConfig:
    data_dim: int = 2
    class_count: int = 2
    latent_dim: int = 8
    g_hidden: tuple = (64, 64)
    d_hidden: tuple = (64, 64)
    g_output: str = "identity"
    spectral_norm: bool = True


@dataclass
class TrainConfig:
    lambda_c: float = 0.1
    batch_size: int = 64
    baseline_steps: int = 2000
    reweight_steps: int = 0
    beta_d: float = 1.0
    beta_g: float = 0.0
    literal_beta_zero: bool = False
    # generator's class term at unit weight; lambda_c then only scales what
    # D_C learns from generated samples
    g_class_unit_weight: bool = False
    lr_g: float = 1e-3
    lr_d: float = 4e-3
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    power_iterations: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.lambda_c < 0:
            raise ValueError("lambda_c must be >= 0")
        if self.beta_d < 0 or self.beta_g < 0:
            raise ValueError("beta must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def steps(self):
        return self.baseline_steps + self.reweight_steps


def config_hash(*configs) -> str:
    payload = json.dumps([asdict(c) if hasattr(c, "__dataclass_fields__") else c
                          for c in configs], sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def one_hot(c, K):
    c = np.asarray(c, dtype=np.int64)
    out = np.zeros((c.size, K))
    out[np.arange(c.size), c] = 1.0
    return out


class CGanModel:
    def __init__(self, config: ModelConfig, rng, train_config: TrainConfig | None = None):
        self.config = config
        self.train_config = train_config or TrainConfig()
        self.extra = {}
        K, dim = config.class_count, config.data_dim
        self.generator = Network.mlp(
            [config.latent_dim + K, *config.g_hidden, dim], "relu", config.g_output, rng)
        self.opt_g = self._adam(self.generator, self.train_config.lr_g)
        self.reinit_discriminator(rng)

    def _adam(self, net, lr):
        tc = self.train_config
        return AdamState(net.params.size, lr, tc.adam_beta1, tc.adam_beta2, tc.adam_eps)

    @property
    def latent_dim(self):
        return self.config.latent_dim

    @property
    def class_count(self):
        return self.config.class_count

    @property
    def discriminator_nets(self):
        return (self.trunk, self.head_dg, self.head_dc)

    def reinit_discriminator(self, rng):
        """Fresh discriminator and optimizer state; the generator is untouched."""
        cfg = self.config
        self.trunk = Network.mlp([cfg.data_dim, *cfg.d_hidden], "leaky_relu", "leaky_relu",
                                 rng, spectral=cfg.spectral_norm)
        feat = cfg.d_hidden[-1]
        self.head_dg = Network([DenseLayer(feat, 1, "sigmoid")])
        self.head_dc = Network([DenseLayer(feat, cfg.class_count, "softmax")])
        self.opt_d = [self._adam(n, self.train_config.lr_d) for n in self.discriminator_nets]

    # -- evaluation --------------------------------------------------------

    def sample_latent(self, n, rng, classes=None):
        z = rng.standard_normal((n, self.latent_dim))
        c = rng.integers(0, self.class_count, size=n) if classes is None else np.asarray(classes)
        return z, c

    def _g_input(self, z, c):
        c = np.asarray(c, dtype=np.int64)
        if c.size and (c.min() < 0 or c.max() >= self.class_count):
            raise ValueError(f"class labels must lie in [0, {self.class_count})")
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[1] != self.latent_dim:
            raise DimensionError(f"latent dim {z.shape[1]} != {self.latent_dim}")
        return np.hstack([z, one_hot(c, self.class_count)])

    def generate(self, z, c):
        return self.generator(self._g_input(z, c))

    def sample(self, n, rng, classes=None):
        z, c = self.sample_latent(n, rng, classes)
        return self.generate(z, c), c

    def discriminate(self, x):
        """Return ``(d_g, d_c)``: clamped real-probabilities (n,) and class rows (n, K)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.config.data_dim:
            raise DimensionError(f"data dim {x.shape[1]} != {self.config.data_dim}")
        h = self.trunk(x)
        return clamp_prob(self.head_dg(h)[:, 0]), self.head_dc(h)

    # -- state -------------------------------------------------------------

    def snapshot(self):
        return {
            "generator": self.generator.snapshot(),
            "disc": [n.snapshot() for n in self.discriminator_nets],
            "opt_g": self.opt_g.copy(),
            "opt_d": [o.copy() for o in self.opt_d],
        }

    def restore(self, snap):
        self.generator.restore(snap["generator"])
        for n, s in zip(self.discriminator_nets, snap["disc"]):
            n.restore(s)
        self.opt_g = snap["opt_g"].copy()
        self.opt_d = [o.copy() for o in snap["opt_d"]]

    def parameter_vector(self):
        return np.concatenate([self.generator.params] + [n.params for n in self.discriminator_nets])


# -- losses -------------------------------------------------------------------

def loss_gan(d_g_real, d_g_fake):
    """Return ``(discriminator_loss, generator_loss)`` (non-saturating generator)."""
    r = clamp_prob(np.asarray(d_g_real, dtype=float))
    f = clamp_prob(np.asarray(d_g_fake, dtype=float))
    d_loss = np.mean(-np.log(r)) + np.mean(-np.log1p(-f))
    g_loss = np.mean(-np.log(f))
    return float(d_loss), float(g_loss)


def loss_ac(d_c_real, c_real, d_c_fake, c_fake, lambda_c):
    """Cross-entropy on real labeled samples plus lambda_c times that on generated ones."""
    def ce(p, c):
        p = np.atleast_2d(p)
        c = np.asarray(c, dtype=np.int64)
        if c.size == 0:
            return 0.0
        return float(np.mean(-np.log(clamp_prob(p[np.arange(c.size), c]))))
    if lambda_c < 0:
        raise ValueError("lambda_c must be >= 0")
    fake = ce(d_c_fake, c_fake) if lambda_c > 0 else 0.0
    return ce(d_c_real, c_real) + lambda_c * fake


def _in_band(p):
    return (p >= PROB_CLAMP) & (p <= 1.0 - PROB_CLAMP)


def _nll_real(p):
    """-log clamp(p) and its gradient w.r.t. the sigmoid logit."""
    return -np.log(clamp_prob(p)), np.where(_in_band(p), p - 1.0, 0.0)


def _nll_fake(p):
    """-log(1 - clamp(p)) and its gradient w.r.t. the sigmoid logit."""
    return -np.log1p(-clamp_prob(p)), np.where(_in_band(p), p, 0.0)


def _ce(probs, c):
    """Per-row -log clamp(p_c) and gradient w.r.t. the softmax logits."""
    rows = np.arange(len(c))
    pc = probs[rows, c]
    grad = probs.copy()
    grad[rows, c] -= 1.0
    grad *= _in_band(pc)[:, None]
    return -np.log(clamp_prob(pc)), grad


def gold_weight(d, beta, literal_beta_zero=False):
    """Per-sample weight sign(d)|d|^beta; beta = 0 gives 1 unless the literal reading is asked for."""
    d = np.asarray(d, dtype=float)
    if beta == 0 and not literal_beta_zero:
        return np.ones_like(d)
    return np.sign(d) * np.abs(d) ** beta


def generated_gold(p_fake, pc_fake, c_fake):
    """Raw GOLD of generated samples from head outputs (no gradient)."""
    p = clamp_prob(p_fake)
    pc = np.maximum(pc_fake[np.arange(len(c_fake)), c_fake], PROB_CLAMP)
    return np.log(p) - np.log1p(-p) + np.log(pc)


def _heads_forward(model, x):
    h, tcache = model.trunk.forward(x)
    p, gcache = model.head_dg.forward(h)
    pc, ccache = model.head_dc.forward(h)
    return h, p[:, 0], pc, (tcache, gcache, ccache)


def _heads_backward(model, caches, grad_logit, grad_class_logits, need_input_grad):
    tcache, gcache, ccache = caches
    gh = model.head_dg.backward(gcache, grad_logit[:, None], from_preact=True)
    gh = gh + model.head_dc.backward(ccache, grad_class_logits, from_preact=True)
    return model.trunk.backward(tcache, gh, need_input_grad=need_input_grad)


def discriminator_loss_and_grads(model, x_lab, c_lab, x_unl, x_fake, c_fake, lambda_c,
                                 fake_weights=None, parts=("gan", "ac")):
    """Discriminator objective and its gradients (left in each net's ``grads``).

    Real labeled and unlabeled samples both enter the GAN term; only labeled
    ones enter the classifier term. ``fake_weights`` multiply every
    generated-sample term and are treated as constants.
    """
    x_lab = np.atleast_2d(np.asarray(x_lab, dtype=float)).reshape(-1, model.config.data_dim)
    if x_unl is None:
        x_unl = np.zeros((0, model.config.data_dim))
    x_unl = np.atleast_2d(np.asarray(x_unl, dtype=float)).reshape(-1, model.config.data_dim)
    c_lab = np.asarray(c_lab, dtype=np.int64)
    c_fake = np.asarray(c_fake, dtype=np.int64)
    n_l, n_u, n_f = len(x_lab), len(x_unl), len(x_fake)
    n_r = n_l + n_u
    x = np.vstack([x_lab, x_unl, x_fake])
    _, p, pc, caches = _heads_forward(model, x)
    fake_gold = generated_gold(p[n_r:], pc[n_r:], c_fake) if n_f else np.zeros(0)
    if fake_weights is None:
        w = np.ones(n_f)
    elif callable(fake_weights):
        w = np.asarray(fake_weights(fake_gold), dtype=float)
    else:
        w = np.asarray(fake_weights, dtype=float)

    g_logit = np.zeros(len(x))
    g_class = np.zeros_like(pc)
    out = {"mean_dg_real": float(np.mean(p[:n_r])) if n_r else float("nan"),
           "mean_dg_fake": float(np.mean(p[n_r:])) if n_f else float("nan")}
    gan = ac = 0.0
    if "gan" in parts:
        lr_, gr = _nll_real(p[:n_r])
        lf, gf = _nll_fake(p[n_r:])
        gan = (lr_.mean() if n_r else 0.0) + (np.mean(w * lf) if n_f else 0.0)
        if n_r:
            g_logit[:n_r] = gr / n_r
        if n_f:
            g_logit[n_r:] = w * gf / n_f
    if "ac" in parts:
        if n_l:
            l_cr, g_cr = _ce(pc[:n_l], c_lab)
            ac += l_cr.mean()
            g_class[:n_l] = g_cr / n_l
        if n_f and lambda_c > 0:
            l_cf, g_cf = _ce(pc[n_r:], c_fake)
            ac += lambda_c * np.mean(w * l_cf)
            g_class[n_r:] = lambda_c * w[:, None] * g_cf / n_f
    _heads_backward(model, caches, g_logit, g_class, need_input_grad=False)
    out.update(d_gan=float(gan), ac_loss=float(ac), d_loss=float(gan + ac))
    out["fake_gold"] = fake_gold
    out["fake_weights"] = w
    return out


def generator_loss_and_grads(model, z, c_fake, lambda_c, weight_fn=None):
    """Non-saturating generator objective; gradients land in ``model.generator.grads``.

    ``weight_fn`` maps the batch's raw GOLD values to per-sample weights.
    """
    c_fake = np.asarray(c_fake, dtype=np.int64)
    x_fake, gcache = model.generator.forward(model._g_input(z, c_fake))
    _, p, pc, caches = _heads_forward(model, x_fake)
    n = len(x_fake)
    d = generated_gold(p, pc, c_fake)
    w = np.ones(n) if weight_fn is None else weight_fn(d)
    l_g, g_g = _nll_real(p)
    g_logit = w * g_g / n
    loss = float(np.mean(w * l_g))
    g_class = np.zeros_like(pc)
    if lambda_c > 0:
        l_c, g_c = _ce(pc, c_fake)
        loss += lambda_c * float(np.mean(w * l_c))
        g_class = lambda_c * w[:, None] * g_c / n
    gx = _heads_backward(model, caches, g_logit, g_class, need_input_grad=True)
    model.generator.backward(gcache, gx)
    return {"g_loss": loss, "fake_gold_g": d}


def _check_finite(metrics, model, x_lab, x_unl):
    bad = [k for k in ("d_loss", "g_loss", "ac_loss") if not np.isfinite(metrics.get(k, 0.0))]
    if bad:
        snap = {k: v for k, v in metrics.items() if np.isscalar(v)}
        snap.update(n_labeled=len(x_lab), n_unlabeled=len(x_unl),
                    param_norm=float(np.linalg.norm(model.parameter_vector())))
        raise TrainingDivergedError(f"non-finite loss in {bad}", snap)


def train_step(model: CGanModel, labeled, unlabeled, config: TrainConfig, rng,
               beta_d=0.0, beta_g=0.0):
    """One discriminator update then one generator update.

    ``labeled`` is ``(x, c)``; ``unlabeled`` is an x array (may be empty).
    With ``beta_d``/``beta_g`` > 0 (or the literal beta-zero flag) the
    generated-sample terms are re-weighted by their GOLD values.
    """
    x_lab, c_lab = labeled
    x_unl = np.zeros((0, model.config.data_dim)) if unlabeled is None else unlabeled
    reweight_d = beta_d > 0 or config.literal_beta_zero
    reweight_g = beta_g > 0 or config.literal_beta_zero
    for net in model.discriminator_nets:
        net.power_step(config.power_iterations)

    n = config.batch_size
    z, c_fake = model.sample_latent(n, rng)
    x_fake = model.generate(z, c_fake)
    weights = None
    if reweight_d:
        weights = lambda d: gold_weight(d, beta_d, config.literal_beta_zero)  # noqa: E731
    m = discriminator_loss_and_grads(model, x_lab, c_lab, x_unl, x_fake, c_fake,
                                     config.lambda_c, weights)
    if np.isfinite(m["d_loss"]):
        for net, opt in zip(model.discriminator_nets, model.opt_d):
            adam_step(net.params, net.grads, opt)

    z, c_fake = model.sample_latent(n, rng)
    weight_fn = None
    if reweight_g:
        weight_fn = lambda d: gold_weight(d, beta_g, config.literal_beta_zero)  # noqa: E731
    g_lambda = 1.0 if config.g_class_unit_weight else config.lambda_c
    mg = generator_loss_and_grads(model, z, c_fake, g_lambda, weight_fn)
    m.update(mg)
    _check_finite(m, model, x_lab, x_unl)
    adam_step(model.generator.params, model.generator.grads, model.opt_g)
    m["mean_fake_gold"] = float(np.mean(m.pop("fake_gold")))
    m.pop("fake_gold_g")
    m["mean_weight"] = float(np.mean(m.pop("fake_weights")))
    return m


def reweighted_train_step(model, labeled, unlabeled, config: TrainConfig, rng):
    """Training step with GOLD example re-weighting (beta_d / beta_g from config)."""
    return train_step(model, labeled, unlabeled, config, rng,
                      beta_d=config.beta_d, beta_g=config.beta_g)


def reinit_discriminator(model: CGanModel, rng):
    model.reinit_discriminator(rng)
    return model


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(path, model: CGanModel, chash="", extra=None):
    """Write the four networks; ``extra`` is a JSON-able dict (e.g. data scaling)."""
    cfg = model.config
    buf = io.BytesIO()
    buf.write(CGAN_MAGIC)
    buf.write(struct.pack("<IIII", CGAN_HEADER_VERSION, cfg.latent_dim, cfg.class_count, cfg.data_dim))
    buf.write(chash.encode("ascii")[:16].ljust(16, b"\0"))
    meta = json.dumps({"g_output": cfg.g_output, "spectral_norm": cfg.spectral_norm,
                       "extra": extra or {}}, sort_keys=True).encode()
    buf.write(struct.pack("<I", len(meta)))
    buf.write(meta)
    for net in (model.generator, *model.discriminator_nets):
        write_network(buf, net)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path, train_config: TrainConfig | None = None):
    """Return ``(model, config_hash)``; optimizer state starts fresh."""
    with open(path, "rb") as f:
        if f.read(4) != CGAN_MAGIC:
            raise CheckpointFormatError(f"{path}: not a cGAN checkpoint (bad magic at byte 0)")
        header = f.read(16)
        if len(header) != 16:
            raise CheckpointFormatError(f"{path}: truncated header at byte 4")
        version, latent, K, dim = struct.unpack("<IIII", header)
        if version != CGAN_HEADER_VERSION:
            raise CheckpointFormatError(f"{path}: unsupported cGAN header version {version}")
        chash = f.read(16).rstrip(b"\0").decode("ascii")
        (mlen,) = struct.unpack("<I", f.read(4))
        meta = json.loads(f.read(mlen))
        nets = [read_network(f) for _ in range(4)]
    g, trunk, dg, dc = nets
    cfg = ModelConfig(data_dim=dim, class_count=K, latent_dim=latent,
                      g_hidden=tuple(l.n_out for l in g.layers[:-1]),
                      d_hidden=tuple(l.n_out for l in trunk.layers),
                      g_output=meta["g_output"], spectral_norm=meta["spectral_norm"])
    model = CGanModel.__new__(CGanModel)
    model.config = cfg
    model.train_config = train_config or TrainConfig()
    model.generator, model.trunk, model.head_dg, model.head_dc = g, trunk, dg, dc
    model.opt_g = model._adam(g, model.train_config.lr_g)
    model.opt_d = [model._adam(n, model.train_config.lr_d) for n in model.discriminator_nets]
    model.extra = meta.get("extra", {})
    return model, chash
