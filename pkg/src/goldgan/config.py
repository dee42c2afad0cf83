"""Experiment configuration: INI sections, one flat namespace per module."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field

from .apps import ActiveConfig, RejectionConfig
from .cgan import ModelConfig, TrainConfig
from .evaluation import FitConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field(s)."""


@dataclass
class DataConfig:
    kind: str = "synthetic"
    n_clusters: int = 6
    radius: float = 4.0
    variance: float = 0.2
    n_classes: int = 2
    layout: str = "grouped"
    n_train: int = 4000
    n_test: int = 1000
    idx_images: str = ""
    idx_labels: str = ""
    idx_test_images: str = ""
    idx_test_labels: str = ""
    csv_train: str = ""
    csv_test: str = ""


@dataclass
class ScheduleConfig:
    trend_interval: int = 50
    probe_n: int = 512
    histogram_bins: int = 30


@dataclass
class ActiveSection:
    triplet: tuple = (4, 1, 8)
    trials: int = 25
    round_steps: int = 2000
    eval_every: int = 200
    balanced: bool = True
    data_n: int = 2000
    test_n: int = 1000
    validation_n: int = 100
    lambda_c: float = 0.01
    val_epochs: int = 10
    val_samples_per_epoch: int = 1000


@dataclass
class RunConfig:
    seeds: tuple = (0,)
    output_dir: str = "run"


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(baseline_steps=2000, reweight_steps=2000))
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    rejection: RejectionConfig = field(default_factory=RejectionConfig)
    active: ActiveSection = field(default_factory=ActiveSection)
    eval: FitConfig = field(default_factory=FitConfig)
    run: RunConfig = field(default_factory=RunConfig)

    SECTIONS = ("data", "model", "train", "schedule", "rejection", "active", "eval", "run")

    # -- (de)serialization -------------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for name in self.SECTIONS:
            sec = getattr(self, name)
            cp[name] = {f.name: _format(getattr(sec, f.name)) for f in dataclasses.fields(sec)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def hash(self):
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:16]

    @classmethod
    def from_ini(cls, text="", overrides=()):
        """Parse INI text then apply ``section.key=value`` overrides."""
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"config parse error: {e}") from None
        values = {s: dict(cp[s]) for s in cp.sections()}
        for item in overrides:
            key, sep, val = item.partition("=")
            section, dot, name = key.strip().partition(".")
            if not sep or not dot:
                raise ConfigError(f"override {item!r}: expected section.key=value")
            values.setdefault(section, {})[name] = val.strip()
        return cls.from_dict(values)

    @classmethod
    def from_dict(cls, values):
        base = cls()
        errors = []
        unknown = set(values) - set(cls.SECTIONS)
        if unknown:
            errors.append(f"unknown sections {sorted(unknown)}")
        kwargs = {}
        for name in cls.SECTIONS:
            sec = getattr(base, name)
            fields = {f.name: f for f in dataclasses.fields(sec)}
            given = values.get(name, {})
            args = {}
            for key, raw in given.items():
                if key not in fields:
                    errors.append(f"{name}.{key}: unknown field")
                    continue
                try:
                    args[key] = _parse(raw, getattr(sec, key))
                except ValueError as e:
                    errors.append(f"{name}.{key}: {e}")
            try:
                kwargs[name] = dataclasses.replace(sec, **args)
            except (TypeError, ValueError) as e:
                errors.append(f"{name}: {e}")
        if errors:
            raise ConfigError("; ".join(errors))
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self):
        e = []
        d, a = self.data, self.active
        if d.kind not in ("synthetic", "idx", "csv"):
            e.append(f"data.kind: must be synthetic, idx or csv (got {d.kind!r})")
        if d.layout not in ("alternating", "grouped"):
            e.append(f"data.layout: must be alternating or grouped (got {d.layout!r})")
        if d.kind == "synthetic":
            if d.n_clusters < 1 or d.n_classes < 1 or d.n_classes > d.n_clusters:
                e.append("data.n_classes: need 1 <= n_classes <= n_clusters")
            if d.variance <= 0:
                e.append("data.variance: must be > 0")
            if self.model.class_count != d.n_classes:
                e.append(f"model.class_count: {self.model.class_count} != data.n_classes {d.n_classes}")
        if d.kind == "idx" and not (d.idx_images and d.idx_labels):
            e.append("data.idx_images/idx_labels: required for kind = idx")
        if d.kind == "csv" and not d.csv_train:
            e.append("data.csv_train: required for kind = csv")
        if d.n_train < 2 or d.n_test < 1:
            e.append("data.n_train/n_test: too small")
        for name in ("latent_dim", "class_count", "data_dim"):
            if getattr(self.model, name) < 1:
                e.append(f"model.{name}: must be >= 1")
        if self.model.g_output not in ("identity", "sigmoid", "tanh"):
            e.append("model.g_output: must be identity, sigmoid or tanh")
        if self.train.baseline_steps < 0 or self.train.reweight_steps < 0:
            e.append("train.baseline_steps/reweight_steps: must be >= 0")
        if self.schedule.trend_interval < 0 or self.schedule.probe_n < 2:
            e.append("schedule: trend_interval >= 0 and probe_n >= 2 required")
        if len(a.triplet) != 3:
            e.append("active.triplet: expected initial,query,final")
        else:
            i, q, f = a.triplet
            if i < 1 or q < 1 or f < i or (f - i) % q:
                e.append(f"active.triplet: {a.triplet} needs final - initial to be a multiple of query")
        if a.trials < 1:
            e.append("active.trials: must be >= 1")
        if a.eval_every < 1 or a.round_steps < 1:
            e.append("active.eval_every/round_steps: must be >= 1")
        if self.rejection.batch_size < 1 or self.rejection.target_accept_count < 1:
            e.append("rejection.batch_size/target_accept_count: must be >= 1")
        if self.eval.epochs < 1 or self.eval.samples_per_epoch < 1:
            e.append("eval.epochs/samples_per_epoch: must be >= 1")
        if not self.run.seeds:
            e.append("run.seeds: at least one seed")
        if e:
            raise ConfigError("; ".join(e))

    def active_config(self) -> ActiveConfig:
        a = self.active
        return ActiveConfig(
            triplet=tuple(a.triplet), round_steps=a.round_steps, eval_every=a.eval_every,
            balanced=a.balanced, data_n=a.data_n, test_n=a.test_n, validation_n=a.validation_n,
            val_fit=dataclasses.replace(self.eval, epochs=a.val_epochs,
                                        samples_per_epoch=a.val_samples_per_epoch),
            test_fit=self.eval, model=self.model,
            train=dataclasses.replace(self.train, lambda_c=a.lambda_c))


def _format(v):
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def _parse(raw, default):
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(x) for x in raw.split(",") if x.strip())
    return raw
