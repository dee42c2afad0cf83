"""goldgan command line: train, sample, active, eval, plot, replay.

Exit codes: 0 success, 1 configuration or input error, 2 runtime error,
3 rejection-sampling starvation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import gold as G
from . import plots
from .apps import (RejectionConfig, StarvationError, paired_trial, plain_sample,
                   rejection_sample, sign_test, train_schedule)
from .cgan import CGanModel, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig
from .data import (IdxFormatError, Standardizer, SyntheticMixture, export_csv, import_csv,
                   load_idx)
from .evaluation import (HISTOGRAM_COLUMNS, TrendLog, export_histogram, fitting_capacity,
                         model_sampler, read_commented_csv, score_generated, write_histogram_csv)
from .nncore import CheckpointFormatError

log = logging.getLogger("goldgan")

OUTPUT_ROOT_ENV = "GOLDGAN_OUTPUT_ROOT"
P_SWEEP = (0.1, 0.3, 0.5, 0.7, 0.9)
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_STARVED = 0, 1, 2, 3


class InputError(ValueError):
    """Unreadable or schema-invalid input file."""


# -- manifest ---------------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    config_hash: str
    code_version: str = __version__
    seeds: list = field(default_factory=list)
    options: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    durations: dict = field(default_factory=dict)

    def add(self, out: Path, path: Path):
        data = Path(path).read_bytes()
        self.artifacts[str(Path(path).relative_to(out))] = hashlib.sha256(data).hexdigest()

    def write(self, out: Path):
        path = out / "manifest.json"
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, path):
        return cls(**json.loads(Path(path).read_text()))


class _Timer:
    def __init__(self, manifest, name):
        self.manifest, self.name = manifest, name

    def __enter__(self):
        self.t = time.perf_counter()

    def __exit__(self, *exc):
        self.manifest.durations[self.name] = round(time.perf_counter() - self.t, 3)


# -- helpers ------------------------------------------------------------------------

def _streams(seed, n=4):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def load_dataset(cfg: ExperimentConfig, rng):
    """Return ``(x_train, c_train, x_test, c_test)`` in original units."""
    d = cfg.data
    if d.kind == "synthetic":
        mix = SyntheticMixture.circle(d.n_clusters, d.radius, d.variance, d.n_classes, d.layout)
        x, c = mix.sample(d.n_train + d.n_test, rng)
        return x[:d.n_train], c[:d.n_train], x[d.n_train:], c[d.n_train:]
    if d.kind == "idx":
        x, c = load_idx(d.idx_images, d.idx_labels)
        if d.idx_test_images:
            xt, ct = load_idx(d.idx_test_images, d.idx_test_labels)
        else:
            x, c, xt, ct = x[d.n_test:], c[d.n_test:], x[:d.n_test], c[:d.n_test]
        return x[:d.n_train], c[:d.n_train], xt, ct
    x, c = import_csv(d.csv_train)
    if d.csv_test:
        xt, ct = import_csv(d.csv_test)
    else:
        x, c, xt, ct = x[d.n_test:], c[d.n_test:], x[:d.n_test], c[:d.n_test]
    return x, c, xt, ct


def _check_dims(cfg, x, c):
    if x.shape[1] != cfg.model.data_dim:
        raise ConfigError(f"model.data_dim: {cfg.model.data_dim} but data has {x.shape[1]} columns")
    if c.max() >= cfg.model.class_count:
        raise ConfigError(f"model.class_count: {cfg.model.class_count} but labels reach {c.max()}")


def _standardizer(model):
    extra = getattr(model, "extra", {}) or {}
    if "mean" in extra:
        return Standardizer(np.array(extra["mean"]), np.array(extra["std"]))
    return Standardizer(np.zeros(model.config.data_dim), np.ones(model.config.data_dim))


def _write_rows(path, columns, rows, config_hash):
    with open(path, "w", newline="") as f:
        f.write(f"# config_hash: {config_hash}\n")
        w = csv.writer(f)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (r[k] for k in columns)])


def _class_counts(n, K):
    base = np.full(K, n // K)
    base[:n % K] += 1
    return base


def _load_model(path, cfg):
    try:
        return load_checkpoint(path, cfg.train)
    except FileNotFoundError:
        raise ConfigError(f"checkpoint not found: {path}") from None


# -- commands ------------------------------------------------------------------------

def cmd_train(args, cfg: ExperimentConfig, out: Path, manifest: RunManifest):
    seed = cfg.run.seeds[0]
    data_rng, init_rng, train_rng, probe_rng = _streams(seed)
    x, c, xt, ct = load_dataset(cfg, data_rng)
    _check_dims(cfg, x, c)
    std = Standardizer.fit(x)
    model = CGanModel(cfg.model, init_rng, cfg.train)
    with _Timer(manifest, "train"):
        rows, trend = train_schedule(model, (std.transform(x), c), None, cfg.train, train_rng,
                                     cfg.schedule.trend_interval, cfg.schedule.probe_n, probe_rng)
    h = manifest.config_hash
    ckpt = out / "model.ckpt"
    save_checkpoint(ckpt, model, h, {"mean": std.mean.tolist(), "std": std.std.tolist(),
                                      "train_steps": len(rows)})
    columns = ["step", "phase"] + sorted(k for k in rows[0] if k not in ("step", "phase")) if rows else ["step", "phase"]
    _write_rows(out / "metrics.csv", columns, rows, h)
    trend.write_csv(out / "trend.csv", h)
    scores = score_generated(model, cfg.schedule.probe_n, probe_rng)
    write_histogram_csv(out / "histogram.csv", export_histogram(scores, cfg.schedule.histogram_bins), h)
    export_csv(out / "test.csv", xt, ct)
    st = scores.stats()
    log.info("trained %d steps; generated sigma_G %.4f sigma_C %.4f", len(rows), st.sigma_g, st.sigma_c)
    return ["model.ckpt", "metrics.csv", "trend.csv", "histogram.csv", "test.csv"]


def _write_samples(path, x, c, d_bal=None):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"x{i + 1}" for i in range(x.shape[1])] + ["class"] + (["d_bal"] if d_bal is not None else []))
        for i in range(len(c)):
            row = [repr(float(v)) for v in x[i]] + [int(c[i])]
            if d_bal is not None:
                row.append(repr(float(d_bal[i])))
            w.writerow(row)


def cmd_sample(args, cfg: ExperimentConfig, out: Path, manifest: RunManifest):
    model, _ = _load_model(args.checkpoint, cfg)
    std = _standardizer(model)
    n = args.n if args.n is not None else cfg.rejection.target_accept_count
    counts = _class_counts(n, model.class_count)
    files = []
    if not args.reject:
        x, c = plain_sample(model, counts, _streams(cfg.run.seeds[0])[0])
        jobs = [("samples.csv", x, c, None)]
    else:
        ps = P_SWEEP if args.p_sweep else [args.p if args.p is not None else cfg.rejection.p]
        jobs = []
        for p in ps:
            rc = dataclasses.replace(cfg.rejection, p=p, target_accept_count=n)
            with _Timer(manifest, f"reject_p{p}"):
                res = rejection_sample(model, counts, rc, _streams(cfg.run.seeds[0])[0])
            log.info("p = %.2f: accepted %d of %d candidates (%.3f); mean d_bal accepted %.4f vs candidates %.4f",
                     p, len(res.c), res.n_candidates, res.acceptance,
                     res.accepted_dbal.mean(), res.candidate_dbal.mean())
            name = f"samples_p{p:g}.csv" if args.p_sweep else "samples.csv"
            jobs.append((name, res.x, res.c, res.accepted_dbal))
    for name, x, c, d in jobs:
        xo = std.inverse(x)
        _write_samples(out / name, xo, c, d)
        files.append(name)
        if args.svg and xo.shape[1] >= 2:
            svg = Path(name).with_suffix(".svg").name
            groups = [(f"class {k}", xo[c == k][:, :2], plots.PALETTE[k % len(plots.PALETTE)])
                      for k in range(model.class_count)]
            (out / svg).write_text(plots.scatter_plot(groups, title=name))
            files.append(svg)
    return files


def cmd_eval(args, cfg: ExperimentConfig, out: Path, manifest: RunManifest):
    model, chash = _load_model(args.checkpoint, cfg)
    data = args.data or str(Path(args.checkpoint).with_name("test.csv"))
    try:
        xt, ct = import_csv(data)
    except FileNotFoundError:
        raise ConfigError(f"test data not found: {data}") from None
    if xt.shape[1] != model.config.data_dim:
        raise ConfigError(f"incompatible dims: checkpoint expects {model.config.data_dim} features, "
                          f"{data} has {xt.shape[1]}")
    if len(ct) and ct.max() >= model.class_count:
        raise ConfigError(f"incompatible classes: checkpoint has {model.class_count}, data reaches {ct.max()}")
    seed = cfg.run.seeds[0]
    with _Timer(manifest, "eval"):
        rep = fitting_capacity(model_sampler(model), _standardizer(model).transform(xt), ct,
                               model.class_count, cfg.eval, rng=np.random.default_rng(seed),
                               seed=seed, config_hash=chash)
    if model.extra.get("train_steps") == 0:
        rep.warnings.append("untrained checkpoint: zero training steps recorded")
        log.warning(rep.warnings[-1])
    (out / "report.json").write_text(rep.to_json() + "\n")
    log.info("fitting capacity %.4f", rep.accuracy)
    return ["report.json"]


def _active_observer(out, files, trial_idx):
    def observe(state, model, pool, std):
        if trial_idx != 0 or state.strategy != "gold" or pool.x.shape[1] != 2:
            return
        d_g, d_c = model.discriminate(std.transform(pool.unlabeled))
        scores = G.gold_unlabeled_batch(d_g, d_c)
        try:
            scores = G.gold_unlabeled_batch(d_g, d_c, scores.stats())
        except (G.DegenerateStatsError, ValueError):
            pass
        gen_x, _ = model.sample(200, np.random.default_rng(state.round))
        x_l, _ = pool.labeled
        groups = [("pool", pool.unlabeled, plots.value_colors(scores.combined)),
                  ("generated", std.inverse(gen_x), "#999999"),
                  ("labeled", x_l, "#000000")]
        name = f"query_round{state.round}.svg"
        (out / name).write_text(plots.scatter_plot(groups, title=f"round {state.round}"))
        files.append(name)
    return observe


def cmd_active(args, cfg: ExperimentConfig, out: Path, manifest: RunManifest):
    a = cfg.active
    acfg = cfg.active_config()
    if args.rounds is not None:
        i, q, _ = acfg.triplet
        acfg = dataclasses.replace(acfg, triplet=(i, q, i + q * args.rounds))
    trials = args.trials if args.trials is not None else a.trials
    seeds = list(cfg.run.seeds)
    seeds = seeds[:trials] if len(seeds) >= trials else [seeds[0] + t for t in range(trials)]
    manifest.seeds = seeds
    if cfg.data.kind == "synthetic":
        d = cfg.data
        mix = SyntheticMixture.circle(d.n_clusters, d.radius, d.variance, d.n_classes, d.layout)
        data = mix.sample
    else:
        x, c, _, _ = load_dataset(cfg, np.random.default_rng(seeds[0]))
        _check_dims(cfg, x, c)
        data = (x, c)
    files, records, curve = [], [], []
    for t, seed in enumerate(seeds):
        with _Timer(manifest, f"trial{t}"):
            arms = paired_trial(data, acfg, seed, observer=_active_observer(out, files, t))
        rec = {"trial": t, "seed": seed, "arms": {}}
        for name, state in arms.items():
            rec["arms"][name] = [dataclasses.asdict(r) for r in state.history]
            for r in state.history:
                curve.append({"trial": t, "seed": seed, "arm": name, "round": r.round,
                              "labeled_size": r.labeled_size, "fitting_capacity": r.fitting_capacity,
                              "val_fitting_capacity": r.val_fitting_capacity})
        records.append(rec)
        log.info("trial %d: gold %.4f random %.4f", t, arms["gold"].final_fitting_capacity,
                 arms["random"].final_fitting_capacity)
    gold_final = [r["arms"]["gold"][-1]["fitting_capacity"] for r in records]
    rand_final = [r["arms"]["random"][-1]["fitting_capacity"] for r in records]
    summary = {"triplet": list(acfg.triplet), "trials": trials,
               "mean_final_gold": float(np.mean(gold_final)),
               "mean_final_random": float(np.mean(rand_final)),
               **sign_test(gold_final, rand_final)}
    doc = {"config_hash": manifest.config_hash, "summary": summary, "trials": records}
    (out / "active.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    cols = ["trial", "seed", "arm", "round", "labeled_size", "fitting_capacity", "val_fitting_capacity"]
    _write_rows(out / "capacity_curve.csv", cols, curve, manifest.config_hash)
    return ["active.json", "capacity_curve.csv", *files]


def cmd_plot(args, cfg: ExperimentConfig, out: Path, manifest: RunManifest):
    name = args.output or f"{args.kind}.svg"
    try:
        svg = _render_plot(args)
    except FileNotFoundError as e:
        raise InputError(str(e)) from None
    except (ValueError, KeyError) as e:
        raise InputError(f"schema mismatch: {e}") from None
    (out / name).write_text(svg)
    return [name]


def _render_plot(args):
    if args.kind == "trend":
        series = []
        for path in args.inputs:
            t = TrendLog.read_csv(path)
            series.append((Path(path).parent.name or Path(path).stem,
                           [r.step for r in t], [getattr(r, args.column) for r in t]))
        if all(len(s[1]) == 0 for s in series):
            log.warning("trend input is empty; writing axes only")
            series = []
        return plots.line_plot(series, "GOLD on generated samples", "step", args.column)
    if args.kind == "histogram":
        rows = read_commented_csv(args.inputs[0], HISTOGRAM_COLUMNS)
        rows = [r for r in rows if r["term"] == args.term]
        if not rows:
            log.warning("no %s rows in histogram input; writing axes only", args.term)
            return plots.histogram_plot([], [], args.term, args.term)
        edges = [float(rows[0]["bin_left"])] + [float(r["bin_right"]) for r in rows]
        return plots.histogram_plot(edges, [int(r["count"]) for r in rows], args.term, args.term)
    if args.kind == "capacity-curve":
        rows = []
        for path in args.inputs:
            rows += read_commented_csv(path, ["arm", "labeled_size", "fitting_capacity"])
        series = []
        for arm in sorted({r["arm"] for r in rows}):
            sizes = sorted({int(r["labeled_size"]) for r in rows if r["arm"] == arm})
            means = [np.mean([float(r["fitting_capacity"]) for r in rows
                              if r["arm"] == arm and int(r["labeled_size"]) == s]) for s in sizes]
            series.append((arm, sizes, means))
        if not series:
            log.warning("capacity input is empty; writing axes only")
        return plots.line_plot(series, "fitting capacity", "labeled samples", "accuracy")
    rows = read_commented_csv(args.inputs[0], ["x1", "x2", "class"])
    if not rows:
        log.warning("scatter input is empty; writing axes only")
        return plots.scatter_plot([])
    xy = np.array([[float(r["x1"]), float(r["x2"])] for r in rows])
    c = np.array([int(r["class"]) for r in rows])
    groups = [(f"class {k}", xy[c == k], plots.PALETTE[k % len(plots.PALETTE)]) for k in np.unique(c)]
    return plots.scatter_plot(groups)


COMMANDS = {"train": cmd_train, "sample": cmd_sample, "active": cmd_active,
            "eval": cmd_eval, "plot": cmd_plot}
_COMMON = ("command", "config", "out", "set", "verbose", "quiet", "manifest")


# -- parser ----------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="goldgan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI file (sections: data, model, train, schedule, "
                                         "rejection, active, eval, run)")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config field (repeatable)")
        sp.add_argument("--out", help=f"output directory (relative paths resolve under ${OUTPUT_ROOT_ENV})")
        sp.add_argument("-q", "--quiet", action="store_true")
        return sp

    t = common(sub.add_parser("train", help="baseline then re-weighted training"))
    t.add_argument("--steps", type=int, help="baseline steps (shorthand for train.baseline_steps)")
    t.add_argument("--reweight-steps", type=int, help="re-weighted steps; 0 disables re-weighting")
    t.add_argument("--seed", type=int)

    s = common(sub.add_parser(
        "sample", help="plain or GOLD rejection sampling",
        description="Acceptance probabilities are relative to each candidate batch: M is the "
                    "batch maximum of exp(d_bal) and gamma the p-th quantile of the batch logits."))
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--n", type=int, help="samples to write (default rejection.target_accept_count)")
    s.add_argument("--reject", action="store_true", help="GOLD rejection sampling")
    s.add_argument("--p", type=float, help="acceptance shift percentile in [0, 1)")
    s.add_argument("--p-sweep", action="store_true", help=f"one file per p in {P_SWEEP}")
    s.add_argument("--svg", action="store_true", help="also write a scatter plot")
    s.add_argument("--seed", type=int)

    a = common(sub.add_parser("active", help="paired GOLD / random acquisition trials"))
    a.add_argument("--trials", type=int)
    a.add_argument("--rounds", type=int, help="acquisition rounds (overrides the triplet's final size)")
    a.add_argument("--seed", type=int)

    e = common(sub.add_parser("eval", help="fitting capacity of a checkpoint"))
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", help="test CSV (x1..xd,class); default test.csv beside the checkpoint")
    e.add_argument("--seed", type=int)

    pl = common(sub.add_parser("plot", help="SVG from trend/histogram/capacity/sample CSVs"))
    pl.add_argument("kind", choices=["trend", "histogram", "capacity-curve", "scatter"])
    pl.add_argument("inputs", nargs="+")
    pl.add_argument("--output", help="SVG file name inside the output directory")
    pl.add_argument("--column", default="mean_gold", help="trend column to draw")
    pl.add_argument("--term", default="marginal", choices=["marginal", "conditional"])

    r = sub.add_parser("replay", help="re-run a manifest and compare artifact hashes")
    r.add_argument("manifest")
    r.add_argument("--out", required=True)
    r.add_argument("-q", "--quiet", action="store_true")
    return p


def resolve_out(path):
    path = Path(path)
    if not path.is_absolute():
        path = Path(os.environ.get(OUTPUT_ROOT_ENV, ".")) / path
    return path


def _config_from_args(args):
    text = Path(args.config).read_text() if args.config else ""
    overrides = list(args.set)
    cmd = args.command
    if getattr(args, "seed", None) is not None:
        overrides.append(f"run.seeds={args.seed}")
    if cmd == "train":
        if args.steps is not None:
            overrides.append(f"train.baseline_steps={args.steps}")
        if args.reweight_steps is not None:
            overrides.append(f"train.reweight_steps={args.reweight_steps}")
    if cmd == "sample" and args.p is not None and not 0 <= args.p < 1:
        raise ConfigError(f"--p: must lie in [0, 1), got {args.p}")
    return ExperimentConfig.from_ini(text, overrides)


def run(args):
    try:
        cfg = _config_from_args(args)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {e.filename}") from None
    out = resolve_out(args.out or cfg.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini())
    options = {k: v for k, v in vars(args).items() if k not in _COMMON}
    manifest = RunManifest(args.command, cfg.hash(), seeds=list(cfg.run.seeds), options=options)
    files = COMMANDS[args.command](args, cfg, out, manifest)
    for name in ["config.ini", *files]:
        manifest.add(out, out / name)
    manifest.write(out)
    log.info("wrote %d artifacts to %s", len(manifest.artifacts), out)
    return out, manifest


def replay(args):
    src = Path(args.manifest)
    old = RunManifest.read(src)
    ns = argparse.Namespace(command=old.command, config=str(src.parent / "config.ini"), set=[],
                            out=args.out, quiet=args.quiet, **old.options)
    _, new = run(ns)
    diff = sorted(k for k in set(old.artifacts) | set(new.artifacts)
                  if old.artifacts.get(k) != new.artifacts.get(k))
    if diff:
        log.error("replay differs in %s", diff)
        return EXIT_RUNTIME
    log.info("replay reproduced %d artifacts bit-exactly", len(new.artifacts))
    return EXIT_OK


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # usage errors are configuration errors; --help exits 0
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        if args.command == "replay":
            return replay(args)
        run(args)
        return EXIT_OK
    except (ConfigError, InputError, CheckpointFormatError, IdxFormatError) as e:
        log.error("%s", e)
        return EXIT_CONFIG
    except StarvationError as e:
        log.error("%s", e)
        return EXIT_STARVED
    except Exception as e:  # noqa: BLE001
        log.error("runtime error: %s: %s", type(e).__name__, e)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
