"""Experiment orchestration: training loops, checkpoint metrics, the
learning-speed statistic, noise-robustness sweeps, and the loss x depth grid.

Determinism contract: (config, seeds, data) fully determine every record and
every byte of every result file.  Grid cells share no mutable state, so the
serial and parallel paths produce identical outputs.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from multiprocessing import get_context
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import nn
from .data import Dataset, add_input_noise, corrupt_labels
from .losses import DEFAULT_HINGE_MARGIN, LossId, evaluate
from .numerics import NonFiniteError
from .optim import NonFiniteGradError, init_adam, adam_step
from .rng import Rng

RESULTS_DIR_ENV = "LOSSFORGE_RESULTS_DIR"

CURVE_HEADER = "iteration,train_loss,train_acc,test_acc"
INPUT_NOISE_HEADER = "epsilon,accuracy"
LABEL_NOISE_HEADER = "fraction,iteration,test_acc"


def results_root() -> Path:
    return Path(os.environ.get(RESULTS_DIR_ENV, "results"))


class TrainingDiverged(RuntimeError):
    """Training hit a non-finite loss or gradient; carries the last good
    checkpoint so grid cells can persist partial curves."""

    def __init__(self, iteration: int, records: list):
        self.iteration = iteration
        self.records = records
        last = records[-1].iteration if records else 0
        super().__init__(f"non-finite value at iteration {iteration}; "
                         f"last good checkpoint at {last}")


@dataclass(frozen=True)
class TrainConfig:
    loss: LossId = LossId.LOG
    hidden_layers: int = 0
    hidden_width: int = 512
    dropout_keep: float = 1.0
    lr: float = 3e-5
    iterations: int = 10000
    batch_size: int = 100
    seed: int = 0
    eval_every: int = 500
    sigma: str | None = None  # None = per-loss default
    hinge_margin: float = DEFAULT_HINGE_MARGIN
    negate_squared_log: bool = False

    def __post_init__(self):
        if not 0 <= self.hidden_layers <= 5:
            raise ValueError("hidden_layers must be in 0..5")
        if self.iterations <= 0 or self.batch_size <= 0:
            raise ValueError("iterations and batch_size must be positive")
        if self.eval_every <= 0 or self.iterations % self.eval_every != 0:
            raise ValueError("eval_every must divide iterations")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must be in (0, 1]")
        object.__setattr__(self, "loss", LossId(self.loss))

    def manifest_items(self) -> list[tuple[str, str]]:
        items = [(f.name, str(getattr(self, f.name))) for f in fields(self)]
        return sorted(items)


@dataclass
class RunRecord:
    iteration: int
    train_loss: float
    train_acc: float
    test_acc: float


@dataclass
class TrainResult:
    records: list[RunRecord]
    model: nn.MlpModel


def accuracy(model: nn.MlpModel, dataset: Dataset) -> float:
    mode = model.mode
    model.eval()
    pred = nn.predict_classes(model, dataset.x)
    model.mode = mode
    return float(np.mean(pred == dataset.labels))


def train(config: TrainConfig, train_set: Dataset, test_set: Dataset) -> TrainResult:
    """Minibatch training with shuffled epochs and periodic checkpoints.

    Batches walk a fresh permutation of the training set each epoch
    (partial tail batches are dropped); checkpoints are written every
    ``eval_every`` iterations.  The returned model is in eval mode.

    BLAS is pinned to one thread for the duration: the matrices here are
    far too small for threaded GEMM to win, and grid cells parallelise at
    the process level instead.
    """
    if config.batch_size > train_set.n:
        raise ValueError("batch_size exceeds training set size")
    with threadpool_limits(limits=1, user_api="blas"):
        return _train_inner(config, train_set, test_set)


def _train_inner(config: TrainConfig, train_set: Dataset, test_set: Dataset) -> TrainResult:
    root = Rng(config.seed)
    model = nn.init(nn.mlp_specs(train_set.d, train_set.k, config.hidden_layers,
                                 config.hidden_width, config.dropout_keep),
                    root.spawn("init"))
    batch_rng = root.spawn("batches")
    dropout_rng = root.spawn("dropout")
    params = model.parameters()
    opt = init_adam(params, lr=config.lr, names=model.parameter_names())

    y_full = train_set.one_hot()
    per_epoch = train_set.n // config.batch_size
    records: list[RunRecord] = []
    loss_sum, loss_count = 0.0, 0
    perm, pos = None, per_epoch  # force a reshuffle on the first iteration

    for it in range(1, config.iterations + 1):
        if pos >= per_epoch:
            perm = batch_rng.permutation(train_set.n)
            pos = 0
        idx = perm[pos * config.batch_size:(pos + 1) * config.batch_size]
        pos += 1
        xb, yb = train_set.x[idx], y_full[idx]
        try:
            out, cache = nn.forward(model, xb, dropout_rng)
            ev = evaluate(config.loss, yb, out, sigma=config.sigma,
                          hinge_margin=config.hinge_margin,
                          negate_squared_log=config.negate_squared_log)
            if not np.isfinite(ev.value):
                raise TrainingDiverged(it, records)
            adam_step(opt, params, nn.backward(model, cache, ev.grad))
        except (NonFiniteError, NonFiniteGradError):
            raise TrainingDiverged(it, records) from None
        loss_sum += ev.value
        loss_count += 1
        if it % config.eval_every == 0:
            records.append(RunRecord(it, loss_sum / loss_count,
                                     accuracy(model, train_set),
                                     accuracy(model, test_set)))
            loss_sum, loss_count = 0.0, 0
    model.eval()
    return TrainResult(records, model)


def speed_metric(records: list[RunRecord], lo: int = 10_000,
                 hi: int = 100_000) -> tuple[float, float]:
    """Expected (train, test) accuracy when the evaluation iteration is
    drawn uniformly from [lo, hi]: the mean over the checkpoints in the
    window, one weight per distinct iteration."""
    window = {r.iteration: r for r in records if lo <= r.iteration <= hi}
    if not window:
        raise ValueError(f"no checkpoints in [{lo}, {hi}]")
    recs = [window[i] for i in sorted(window)]
    return (float(np.mean([r.train_acc for r in recs])),
            float(np.mean([r.test_acc for r in recs])))


def input_noise_sweep(model: nn.MlpModel, train_set: Dataset, epsilons,
                      seed: int = 0, interpretation: str = "sd") -> list[tuple[float, float]]:
    """Accuracy of a trained model on noise-perturbed copies of its training
    set, one fresh (but per-epsilon seeded) draw per epsilon."""
    base = Rng(seed).spawn("input-noise")
    out = []
    for i, eps in enumerate(epsilons):
        noisy = add_input_noise(train_set, float(eps), base.spawn(i), interpretation)
        out.append((float(eps), accuracy(model, noisy)))
    return out


def label_noise_sweep(config: TrainConfig, train_set: Dataset, test_set: Dataset,
                      fractions) -> list[tuple[float, list[RunRecord]]]:
    """Retrain from scratch per corruption fraction and collect the curves.

    The training seed is identical across fractions (so fraction 0
    reproduces the clean baseline bit-exactly); only the corruption draw
    depends on the fraction.
    """
    out = []
    for frac in fractions:
        frac = float(frac)
        corrupt_rng = Rng(config.seed).spawn(f"label-noise/{frac!r}")
        corrupted = corrupt_labels(train_set, frac, corrupt_rng)
        result = train(config, corrupted, test_set)
        out.append((frac, result.records))
    return out


# ---------------------------------------------------------------------------
# Result persistence (atomic, byte-deterministic)
# ---------------------------------------------------------------------------

def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, newline="\n")
    os.replace(tmp, path)


def curve_csv_text(records: list[RunRecord]) -> str:
    lines = [CURVE_HEADER]
    for r in records:
        lines.append(f"{r.iteration},{r.train_loss!r},{r.train_acc!r},{r.test_acc!r}")
    return "\n".join(lines) + "\n"


def input_noise_csv_text(rows: list[tuple[float, float]]) -> str:
    lines = [INPUT_NOISE_HEADER]
    for eps, acc in rows:
        lines.append(f"{eps!r},{acc!r}")
    return "\n".join(lines) + "\n"


def label_noise_csv_text(sweeps: list[tuple[float, list[RunRecord]]]) -> str:
    lines = [LABEL_NOISE_HEADER]
    for frac, records in sweeps:
        for r in records:
            lines.append(f"{frac!r},{r.iteration},{r.test_acc!r}")
    return "\n".join(lines) + "\n"


def manifest_text(config: TrainConfig, extra: dict[str, str]) -> str:
    items = dict(config.manifest_items())
    items.update({k: str(v) for k, v in extra.items()})
    return "".join(f"{k}={items[k]}\n" for k in sorted(items))


def write_run(out_dir: Path, config: TrainConfig, records: list[RunRecord],
              status: str, dataset_name: str) -> None:
    out_dir = Path(out_dir)
    _atomic_write_text(out_dir / "curve.csv", curve_csv_text(records))
    _atomic_write_text(out_dir / "manifest.txt",
                       manifest_text(config, {"dataset": dataset_name, "status": status}))


# ---------------------------------------------------------------------------
# Grid runner
# ---------------------------------------------------------------------------

@dataclass
class CellOutcome:
    dataset: str
    loss: LossId
    depth: int
    status: str  # "ok" | "diverged"
    final_train_acc: float
    final_test_acc: float
    out_dir: Path


def _run_cell(args) -> CellOutcome:
    dataset_name, train_set, test_set, config, out_dir = args
    out_dir = Path(out_dir)
    try:
        result = train(config, train_set, test_set)
        records, status = result.records, "ok"
    except TrainingDiverged as exc:
        records, status = exc.records, "diverged"
    write_run(out_dir, config, records, status, dataset_name)
    last = records[-1] if records else RunRecord(0, float("nan"), 0.0, 0.0)
    return CellOutcome(dataset_name, config.loss, config.hidden_layers, status,
                       last.train_acc, last.test_acc, out_dir)


def grid_run(losses, depths, base_config: TrainConfig,
             datasets: dict[str, tuple[Dataset, Dataset]],
             out_root: Path | None = None, jobs: int = 1) -> list[CellOutcome]:
    """Independent train() per (dataset, loss, depth) cell.

    Results land under ``<out_root>/<dataset>/<loss>/<depth>/curve.csv``.
    Divergence in a cell is recorded in its manifest, not fatal to the grid.
    Cells may run on a bounded worker pool (``jobs`` > 1).
    """
    out_root = Path(out_root) if out_root is not None else results_root()
    tasks = []
    for name in sorted(datasets):
        train_set, test_set = datasets[name]
        for loss in losses:
            for depth in depths:
                config = replace(base_config, loss=LossId(loss), hidden_layers=depth)
                out_dir = out_root / name / str(config.loss) / str(depth)
                tasks.append((name, train_set, test_set, config, out_dir))
    if jobs <= 1:
        return [_run_cell(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs, mp_context=get_context("spawn")) as pool:
        return list(pool.map(_run_cell, tasks))
