"""Training runs, repeated-seed selection, lambda sweeps and artifact export."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import data as D
from .classifier_losses import LogitsBatch, softmax, softmax_cross_entropy
from .config import ConfigError, ExperimentConfig
from .metrics import MetricsReport, compute_report, knn_cosine_accuracy, score_histogram
from .network import NetworkParams, backward, forward, init_params, load_checkpoint, save_checkpoint
from .ole_loss import FeatureBatch, ole_value_and_grad
from .optim import OptimizerState, adam_step, sgd_nesterov_step, step_schedule

log = logging.getLogger(__name__)

NOVELTY_THRESHOLDS = np.round(np.linspace(0.0, 1.0, 101), 2)


class TrainingDivergedError(RuntimeError):
    """Activations or losses stopped being finite; lower the learning rate."""


@dataclass
class EpochRecord:
    epoch: int
    ls: float
    lo: float
    total: float
    val_acc: float
    lr: float


@dataclass
class RunRecord:
    seed: int
    history: list[EpochRecord] = field(default_factory=list)
    val_acc: float = float("nan")
    test_acc: float = float("nan")
    report: MetricsReport | None = None
    params: NetworkParams | None = None
    # training split the run was fit on; 1-NN evaluation uses it as reference set
    reference: D.Dataset | None = None

    @property
    def lo_curve(self) -> np.ndarray:
        return np.array([e.lo for e in self.history])


@dataclass
class Splits:
    train: D.Dataset
    test: D.Dataset
    novel: D.Dataset | None = None


def load_splits(cfg: ExperimentConfig) -> Splits:
    """Materialize the train/test data (and held-out novel classes, if any)."""
    if cfg.dataset == "blobs":
        args = (cfg.blob_dim, cfg.blob_classes)
        train = D.make_gaussian_blobs(*args, cfg.blob_train_per_class, cfg.blob_spread, cfg.blob_seed, "train")
        test = D.make_gaussian_blobs(*args, cfg.blob_test_per_class, cfg.blob_spread, cfg.blob_seed, "test")
    elif cfg.dataset == "csv":
        if not cfg.train_path or not cfg.test_path:
            raise ConfigError("dataset=csv needs train_path and test_path")
        train = D.load_csv(cfg.train_path)
        test = D.load_csv(cfg.test_path, split="test")
    else:
        paths = (cfg.train_images, cfg.train_labels, cfg.test_images, cfg.test_labels)
        if not all(paths):
            raise ConfigError("dataset=idx needs train_images, train_labels, test_images, test_labels")
        train = D.load_idx(cfg.train_images, cfg.train_labels)
        test = D.load_idx(cfg.test_images, cfg.test_labels, split="test")
    C = max(train.class_count, test.class_count)
    train = D.Dataset(train.samples, train.labels, C, "train")
    test = D.Dataset(test.samples, test.labels, C, "test")
    if train.dim != test.dim:
        raise D.DataError(f"train dim {train.dim} differs from test dim {test.dim}")
    known = cfg.known_class_ids
    if not known:
        return Splits(train, test)
    if any(c < 0 or c >= C for c in known):
        raise ConfigError(f"known_classes {known} out of range for {C} classes")
    novel_ids = [c for c in range(C) if c not in known]
    novel_idx = np.flatnonzero(np.isin(test.labels, novel_ids))
    return Splits(train.only_classes(known), test.only_classes(known), test.subset(novel_idx))


def eval_rule(cfg: ExperimentConfig) -> str:
    if cfg.eval_rule != "auto":
        return cfg.eval_rule
    return "knn" if cfg.mode == "ole" else "argmax"


def embed(params: NetworkParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    trace = forward(params, x, "eval")
    return trace.features, trace.logits


def accuracy(params: NetworkParams, ref: D.Dataset, ds: D.Dataset, rule: str) -> float:
    feats, logits = embed(params, ds.samples)
    if rule == "argmax":
        return float(np.mean(np.argmax(logits, axis=0) == ds.labels))
    ref_feats, _ = embed(params, ref.samples)
    alive_ref = np.linalg.norm(ref_feats, axis=0) > 0
    alive = np.linalg.norm(feats, axis=0) > 0
    if not alive_ref.any() or not alive.any():
        return 0.0
    # dead (all-zero) queries have no direction and count as misses
    acc = knn_cosine_accuracy(ref_feats[:, alive_ref], ref.labels[alive_ref], feats[:, alive], ds.labels[alive])
    return acc * alive.sum() / alive.size


def train_run(cfg: ExperimentConfig, train: D.Dataset, val: D.Dataset | None, seed: int) -> RunRecord:
    """One training run from a fresh initialization seeded by ``seed``."""
    spec = cfg.network_spec(train.dim, train.class_count)
    params = init_params(spec, seed)
    sampler = D.BatchSampler(cfg.batch_size, seed, stratified=cfg.stratified)
    state = OptimizerState(cfg.optimizer)
    no_decay = frozenset() if cfg.decay_all else frozenset(k for k in params.trainable if not k.endswith(".W"))
    ole_cfg = cfg.ole
    rule = eval_rule(cfg)
    record = RunRecord(seed)
    for epoch in range(cfg.epochs):
        lr = step_schedule(epoch, cfg.epochs, cfg.lr) if cfg.lr_schedule else cfg.lr
        sums = np.zeros(3)
        batches = sampler.epoch_batches(train)
        for x, y in batches:
            with np.errstate(over="ignore", invalid="ignore"):
                trace = forward(params, x, "train")
            if not np.all(np.isfinite(trace.logits)):
                raise TrainingDivergedError(f"non-finite activations at seed {seed}, epoch {epoch}")
            ls, logit_grad = softmax_cross_entropy(LogitsBatch(trace.logits, y))
            lo, ole_grad = ole_value_and_grad(FeatureBatch(trace.features, y), ole_cfg)
            if cfg.mode == "softmax":
                total, feature_grad = ls, None
            elif cfg.mode == "ole":
                total, feature_grad, logit_grad = lo, ole_grad, None
            else:
                total, feature_grad = ls + cfg.lam * lo, cfg.lam * ole_grad
            grads = backward(params, trace, feature_grad, logit_grad)
            if cfg.optimizer == "sgd_nesterov":
                new = sgd_nesterov_step(params.trainable, grads, state, lr, cfg.momentum, cfg.weight_decay, no_decay)
            else:
                new = adam_step(params.trainable, grads, state, lr, weight_decay=cfg.weight_decay, no_decay=no_decay)
            params = params.with_trainable(new)
            sums += (ls, lo, total)
        ls_m, lo_m, tot_m = sums / len(batches)
        val_acc = accuracy(params, train, val, rule) if val is not None else float("nan")
        record.history.append(EpochRecord(epoch, ls_m, lo_m, tot_m, val_acc, lr))
        log.debug("seed %d epoch %d: ls=%.4f lo=%.4f val=%.4f", seed, epoch, ls_m, lo_m, val_acc)
    record.val_acc = record.history[-1].val_acc
    record.params = params
    record.reference = train
    return record


def best_of_repeats(cfg: ExperimentConfig, train: D.Dataset) -> tuple[RunRecord, list[RunRecord]]:
    """Train ``cfg.repeats`` seeds on a fixed 90/10 split and keep the best by validation accuracy."""
    fit, val = D.train_val_split(train, cfg.seed, cfg.val_fraction)
    runs = [train_run(cfg, fit, val, cfg.seed + r) for r in range(cfg.repeats)]
    # max() keeps the first of equal scores, i.e. the lower seed index
    return max(runs, key=lambda r: r.val_acc), runs


def evaluate(cfg: ExperimentConfig, params: NetworkParams, ref: D.Dataset, splits: Splits) -> tuple[float, MetricsReport, dict]:
    """Test accuracy, the metrics report and the raw arrays behind the files."""
    rule = eval_rule(cfg)
    test = splits.test
    ref_feats, _ = embed(params, ref.samples)
    feats, logits = embed(params, test.samples)
    known_scores = softmax(logits)
    novel_scores = None
    if splits.novel is not None and len(splits.novel):
        novel_scores = softmax(embed(params, splits.novel.samples)[1])
    report = compute_report(
        feats,
        test.labels,
        test.class_count,
        ref_features=ref_feats,
        ref_labels=ref.labels,
        known_scores=known_scores,
        known_labels=test.labels,
        novel_scores=novel_scores,
        thresholds=NOVELTY_THRESHOLDS,
    )
    acc = report.knn_accuracy if rule == "knn" else float(np.mean(np.argmax(logits, axis=0) == test.labels))
    hist_scores = (novel_scores if novel_scores is not None else known_scores).max(axis=0)
    arrays = {"features": feats, "labels": test.labels, "hist": score_histogram(hist_scores)}
    return acc, report, arrays


def write_report_files(out_dir, report: MetricsReport, arrays: dict, extra: dict | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    feats, labels = arrays["features"], arrays["labels"]
    order = np.argsort(labels, kind="stable")
    D.write_matrix(os.path.join(out_dir, "angles.csv"), report.angle_matrix)
    D.write_table(
        os.path.join(out_dir, "spectrum.csv"),
        ["index", "normalized_sv"],
        [(i, v) for i, v in enumerate(report.spectrum)],
    )
    D.write_features(os.path.join(out_dir, "features.csv"), feats[:, order], labels[order])
    D.write_table(os.path.join(out_dir, "hist.csv"), ["bin_lo", "bin_hi", "count"], arrays["hist"])
    if report.novelty_curve:
        D.write_table(os.path.join(out_dir, "novelty.csv"), ["threshold", "known_acc", "fpr"], report.novelty_curve)
    summary = {
        "knn_accuracy": report.knn_accuracy,
        "mean_intra_angle": report.mean_intra_angle,
        "mean_inter_angle": report.mean_inter_angle,
        "energy_top_C": report.energy_top_C,
        **(extra or {}),
    }
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump({k: float(f"{v:.9g}") if isinstance(v, float) else v for k, v in summary.items()}, f, indent=2, sort_keys=True)


def write_history(path, history: list[EpochRecord]) -> None:
    D.write_table(
        path,
        ["epoch", "ls", "lo", "total", "val_acc", "lr"],
        [(e.epoch, e.ls, e.lo, e.total, e.val_acc, e.lr) for e in history],
    )


def cmd_train(cfg: ExperimentConfig, out_dir: str | None = None) -> RunRecord:
    """Train, keep the best of the repeats, evaluate on test and write every artifact."""
    out_dir = out_dir or cfg.output_dir
    splits = load_splits(cfg)
    best, runs = best_of_repeats(cfg, splits.train)
    acc, report, arrays = evaluate(cfg, best.params, best.reference, splits)
    best.test_acc = acc
    best.report = report
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w") as f:
        f.write(cfg.to_text())
    write_history(os.path.join(out_dir, "metrics.csv"), best.history)
    write_report_files(
        out_dir,
        report,
        arrays,
        {"test_acc": acc, "val_acc": best.val_acc, "seed": best.seed, "eval_rule": eval_rule(cfg)},
    )
    save_checkpoint(best.params, os.path.join(out_dir, "model.ckpt"))
    log.info("best seed %d of %d: val %.4f test %.4f", best.seed, len(runs), best.val_acc, acc)
    return best


@dataclass
class SweepRow:
    lam: float
    mean_acc: float
    std_acc: float
    accs: list[float]


def cmd_sweep_lambda(cfg: ExperimentConfig, lambdas, out_dir: str | None = None) -> tuple[list[SweepRow], float]:
    """Validation accuracy per lambda, averaged over ``cfg.repeats`` seeds.

    Every lambda sees the same split and the same seeds. Returns the rows and
    the lambda with the best mean (first one on ties).
    """
    lambdas = [float(v) for v in lambdas]
    if not lambdas:
        raise ConfigError("need at least one lambda value")
    splits = load_splits(cfg)
    fit, val = D.train_val_split(splits.train, cfg.seed, cfg.val_fraction)
    rows = []
    for lam in lambdas:
        run_cfg = cfg.replace(lam=lam)
        accs = [train_run(run_cfg, fit, val, cfg.seed + r).val_acc for r in range(cfg.repeats)]
        rows.append(SweepRow(lam, float(np.mean(accs)), float(np.std(accs)), accs))
        log.info("lambda %g: %.4f +- %.4f", lam, rows[-1].mean_acc, rows[-1].std_acc)
    best = max(rows, key=lambda r: r.mean_acc).lam
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    D.write_table(os.path.join(out_dir, "sweep.csv"), ["lambda", "mean_acc", "std_acc"], [(r.lam, r.mean_acc, r.std_acc) for r in rows])
    return rows, best


def cmd_metrics(checkpoint_path, cfg: ExperimentConfig, out_dir: str | None = None) -> MetricsReport:
    """Recompute the report for a saved model on the configured test split."""
    params = load_checkpoint(checkpoint_path)
    splits = load_splits(cfg)
    if params.spec.input_dim != splits.test.dim or params.spec.class_count != splits.train.class_count:
        raise D.DataError(
            f"checkpoint expects {params.spec.input_dim}-dim inputs and {params.spec.class_count} classes, "
            f"data has {splits.test.dim}-dim inputs and {splits.train.class_count} classes"
        )
    acc, report, arrays = evaluate(cfg, params, splits.train, splits)
    write_report_files(out_dir or cfg.output_dir, report, arrays, {"test_acc": acc, "eval_rule": eval_rule(cfg)})
    return report
