"""Command-line entry point.

Subcommands: gradcheck, verify-theory, train, grid, noise-input,
noise-label, plot.  Exit codes: 0 success, 1 failed checks, 2 usage error.
All randomness flows from --seed flags; reruns with identical flags write
byte-identical files.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import data, harness, nn, svgplot
from .losses import (
    ALL_LOSS_IDS,
    LossId,
    binary_sigmoid_expectation_grad,
    expectation_identity_residuals,
    gradient_check,
    sample_onehot,
    sample_prob_batch,
    verify_cs_decomposition,
)
from .rng import Rng

LOSS_CHOICES = [str(l) for l in ALL_LOSS_IDS]
GRADCHECK_TOL = 1e-5
EXPECTATION_TOL = 1e-12
CS_TOL = 1e-10
PROBE_CENTER = -0.25
PROBE_TAIL_TOL = 1e-10

MNIST_DIR_ENV = "LOSSFORGE_MNIST_DIR"
MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class UsageError(Exception):
    pass


def _find_mnist_file(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        p = directory / name
        if p.exists():
            return p
    raise UsageError(f"MNIST file {stem}[.gz] not found under {directory}")


def load_mnist_split(directory: Path, split: str) -> data.Dataset:
    images, labels = MNIST_FILES[split]
    return data.load_mnist(_find_mnist_file(directory, images),
                           _find_mnist_file(directory, labels))


def build_dataset(args) -> tuple[str, data.Dataset, data.Dataset]:
    rng = Rng(args.data_seed).spawn(f"dataset/{args.dataset}")
    if args.dataset == "checkerboard":
        train, test = data.gen_checkerboard(args.n_per_split, rng)
    elif args.dataset == "spiral":
        train, test = data.gen_spiral(args.n_per_split, rng, noise_sd=args.spiral_noise_sd)
    elif args.dataset == "random":
        train = data.gen_random_labels(args.n_per_split, rng.spawn("train"))
        test = data.gen_random_labels(args.n_per_split, rng.spawn("test"))
    else:
        directory = Path(args.mnist_dir or os.environ.get(MNIST_DIR_ENV, "data/mnist"))
        train = load_mnist_split(directory, "train")
        test = load_mnist_split(directory, "test")
    if args.subset:
        train = train.take(args.subset)
    return args.dataset, train, test


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", choices=["checkerboard", "spiral", "random", "mnist"],
                   default="checkerboard")
    p.add_argument("--data-seed", type=int, default=42)
    p.add_argument("--n-per-split", type=int, default=800,
                   help="samples per split for the toy generators")
    p.add_argument("--spiral-noise-sd", type=float, default=0.02)
    p.add_argument("--mnist-dir", default=None,
                   help=f"directory with the IDX files (default ${MNIST_DIR_ENV} or data/mnist)")
    p.add_argument("--subset", type=int, default=0,
                   help="truncate the training split to this many samples (0 = all)")


_CONFIG_FLAGS = ["loss", "hidden_layers", "hidden_width", "dropout_keep", "lr",
                 "iterations", "batch_size", "seed", "eval_every", "sigma",
                 "hinge_margin", "negate_squared_log"]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    sup = argparse.SUPPRESS
    p.add_argument("--config", default=None,
                   help="manifest-style key=value file; flags override it")
    p.add_argument("--loss", choices=LOSS_CHOICES, default=sup)
    p.add_argument("--hidden-layers", type=int, default=sup)
    p.add_argument("--hidden-width", type=int, default=sup)
    p.add_argument("--dropout-keep", type=float, default=sup)
    p.add_argument("--lr", type=float, default=sup)
    p.add_argument("--iterations", type=int, default=sup)
    p.add_argument("--batch-size", type=int, default=sup)
    p.add_argument("--seed", type=int, default=sup)
    p.add_argument("--eval-every", type=int, default=sup)
    p.add_argument("--sigma", choices=["softmax", "sigmoid"], default=sup)
    p.add_argument("--hinge-margin", type=float, default=sup)
    p.add_argument("--negate-squared-log", action="store_true", default=sup,
                   help="use the sign-flipped (unbounded below) squared log loss")


def _coerce_config_value(name: str, raw: str):
    types = {f.name: f.type for f in fields(harness.TrainConfig)}
    t = types[name]
    if name == "loss":
        return LossId(raw)
    if name == "sigma":
        return None if raw in ("None", "") else raw
    if t in ("int", int):
        return int(raw)
    if t in ("float", float):
        return float(raw)
    if t in ("bool", bool):
        return raw == "True"
    return raw


def read_config_file(path) -> dict:
    out = {}
    known = {f.name for f in fields(harness.TrainConfig)}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        if key in known:
            out[key] = _coerce_config_value(key, value)
    return out


def build_config(args) -> harness.TrainConfig:
    """Precedence: built-in defaults < --config file < explicit flags."""
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config))
    for name in _CONFIG_FLAGS:
        if hasattr(args, name):
            merged[name] = getattr(args, name)
    return harness.TrainConfig(**merged)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    losses = list(ALL_LOSS_IDS) if args.loss == "all" else [LossId(args.loss)]
    failed = False
    for loss in losses:
        err = gradient_check(loss, trials=args.trials, seed=args.seed, h=args.h)
        ok = err < args.tol
        failed |= not ok
        print(f"{'PASS' if ok else 'FAIL'} {str(loss):16s} max_rel_err={err:.3e}")
    return 1 if failed else 0


def cmd_verify_theory(args) -> int:
    rng = Rng(args.seed).spawn("verify-theory")
    worst1 = worst2 = worst_cs = 0.0
    for _ in range(args.trials):
        k = 2 + rng.integers(9)
        y = sample_onehot(rng, args.batch, k)
        p = sample_prob_batch(rng, args.batch, k)
        r1, r2 = expectation_identity_residuals(y, p)
        worst1, worst2 = max(worst1, r1), max(worst2, r2)
        worst_cs = max(worst_cs, verify_cs_decomposition(y, p))
    ok1 = worst1 < EXPECTATION_TOL and worst2 < EXPECTATION_TOL
    ok_cs = worst_cs < CS_TOL
    print(f"{'PASS' if ok1 else 'FAIL'} expectation-identity  "
          f"L1 residual={worst1:.3e}  L2 residual={worst2:.3e}  (tol {EXPECTATION_TOL:g})")
    print(f"{'PASS' if ok_cs else 'FAIL'} cs-decomposition      "
          f"residual={worst_cs:.3e}  (tol {CS_TOL:g})")
    probes = {o: binary_sigmoid_expectation_grad(o) for o in (-30.0, 0.0, 30.0)}
    ok_probe = (abs(probes[0.0] - PROBE_CENTER) < 1e-12
                and abs(probes[-30.0]) < PROBE_TAIL_TOL
                and abs(probes[30.0]) < PROBE_TAIL_TOL
                and abs(probes[0.0]) > abs(probes[-30.0])
                and abs(probes[0.0]) > abs(probes[30.0]))
    print(f"{'PASS' if ok_probe else 'FAIL'} sigmoid-grad probe    "
          + "  ".join(f"o={o:+g}: {g:.3e}" for o, g in sorted(probes.items())))
    return 0 if (ok1 and ok_cs and ok_probe) else 1


def cmd_train(args) -> int:
    config = build_config(args)
    name, train_set, test_set = build_dataset(args)
    try:
        result = harness.train(config, train_set, test_set)
        records, status = result.records, "ok"
    except harness.TrainingDiverged as exc:
        records, status = exc.records, "diverged"
        result = None
    out_dir = Path(args.out) if args.out else (
        harness.results_root() / name / str(config.loss) / str(config.hidden_layers))
    harness.write_run(out_dir, config, records, status, name)
    if status == "diverged":
        print(f"DIVERGED after {records[-1].iteration if records else 0} iterations; "
              f"partial curve in {out_dir}")
        return 1
    if args.save_model:
        nn.save_model(result.model, args.save_model)
    last = records[-1]
    print(f"{name} {config.loss} depth={config.hidden_layers} "
          f"train_acc={last.train_acc:.4f} test_acc={last.test_acc:.4f} -> {out_dir}")
    return 0


def cmd_grid(args) -> int:
    config = build_config(args)
    datasets = {}
    for ds in args.datasets:
        ns = argparse.Namespace(**{**vars(args), "dataset": ds})
        name, train_set, test_set = build_dataset(ns)
        datasets[name] = (train_set, test_set)
    losses = list(ALL_LOSS_IDS) if args.losses == ["all"] else [LossId(l) for l in args.losses]
    out_root = Path(args.out) if args.out else harness.results_root()
    outcomes = harness.grid_run(losses, args.depths, config, datasets,
                                out_root=out_root, jobs=args.jobs)
    for c in outcomes:
        print(f"{c.status:8s} {c.dataset}/{c.loss}/{c.depth} "
              f"train_acc={c.final_train_acc:.4f} test_acc={c.final_test_acc:.4f}")
    return 0


def cmd_noise_input(args) -> int:
    model = nn.load_model(args.model)
    _, train_set, _ = build_dataset(args)
    rows = harness.input_noise_sweep(model, train_set, args.epsilons,
                                     seed=args.seed, interpretation=args.noise_interpretation)
    text = harness.input_noise_csv_text(rows)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, newline="\n")
    for eps, acc in rows:
        print(f"epsilon={eps:g} accuracy={acc:.4f}")
    return 0


def cmd_noise_label(args) -> int:
    config = build_config(args)
    _, train_set, test_set = build_dataset(args)
    sweeps = harness.label_noise_sweep(config, train_set, test_set, args.fractions)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(harness.label_noise_csv_text(sweeps), newline="\n")
    for frac, records in sweeps:
        print(f"fraction={frac:g} final_test_acc={records[-1].test_acc:.4f}")
    return 0


def _label_for_csv(path: Path) -> str:
    manifest = path.parent / "manifest.txt"
    if manifest.exists():
        kv = dict(line.partition("=")[::2] for line in manifest.read_text().splitlines()
                  if "=" in line)
        if "loss" in kv:
            return f"{kv['loss']}/{kv.get('hidden_layers', '?')}"
    return path.stem


def read_curve_csv(path: Path, metric: str) -> tuple[np.ndarray, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise UsageError(f"{path}: empty file")
    header = lines[0].split(",")
    if metric not in header:
        raise UsageError(f"{path}: no column {metric!r} in header {header}")
    xi, yi = 0, header.index(metric)
    xs, ys = [], []
    for line in lines[1:]:
        parts = line.split(",")
        xs.append(float(parts[xi]))
        ys.append(float(parts[yi]))
    if not xs:
        raise UsageError(f"{path}: no data rows")
    return np.asarray(xs), np.asarray(ys)


def cmd_plot(args) -> int:
    series = []
    for raw in args.input:
        path = Path(raw)
        xs, ys = read_curve_csv(path, args.metric)
        series.append((_label_for_csv(path), xs, ys))
    svg = svgplot.render_curves(series, title=args.title,
                                x_label=args.x_label, y_label=args.metric)
    svgplot.write_svg(args.output, svg)
    print(f"wrote {args.output} ({len(series)} series)")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lossforge",
        description="Loss-function laboratory: gradient checks, theory "
                    "verification, training experiments, noise sweeps, plots.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradcheck", help="analytic gradients vs central differences")
    p.add_argument("--loss", choices=LOSS_CHOICES + ["all"], default="all")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-5, help="finite-difference step")
    p.add_argument("--tol", type=float, default=GRADCHECK_TOL)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("verify-theory", help="check the loss identities and probe values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--trials", type=int, default=1000, help="number of random batches")
    p.set_defaults(func=cmd_verify_theory)

    p = sub.add_parser("train", help="single training run, writes curve.csv + manifest")
    _add_dataset_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--save-model", default=None, help="write a model checkpoint here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="loss x depth grid of independent runs")
    _add_dataset_flags(p)
    _add_config_flags(p)
    p.add_argument("--datasets", nargs="+",
                   choices=["checkerboard", "spiral", "random", "mnist"],
                   default=["checkerboard"])
    p.add_argument("--losses", nargs="+", choices=LOSS_CHOICES + ["all"], default=["all"])
    p.add_argument("--depths", nargs="+", type=int, default=[0, 1, 2, 3, 4, 5])
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--out", default=None, help="results root")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("noise-input", help="accuracy of a trained model under input noise")
    _add_dataset_flags(p)
    p.add_argument("--model", required=True, help="model checkpoint path")
    p.add_argument("--epsilons", nargs="+", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-interpretation", choices=["sd", "variance"], default="sd")
    p.add_argument("--out", required=True, help="output CSV (epsilon,accuracy)")
    p.set_defaults(func=cmd_noise_input)

    p = sub.add_parser("noise-label", help="retrain under corrupted labels")
    _add_dataset_flags(p)
    _add_config_flags(p)
    p.add_argument("--fractions", nargs="+", type=float, required=True)
    p.add_argument("--out", required=True, help="output CSV (fraction,iteration,test_acc)")
    p.set_defaults(func=cmd_noise_label)

    p = sub.add_parser("plot", help="render curve CSVs to a static SVG")
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--metric", default="test_acc")
    p.add_argument("--title", default="")
    p.add_argument("--x-label", default="iteration")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
