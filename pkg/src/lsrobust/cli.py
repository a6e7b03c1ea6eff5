"""Command-line entry point.

Subcommands cover the full workflow: train models, run single attacks,
evaluate robust accuracy (including attack ensembles), transfer-test between
checkpoints, sweep smoothing factors, run the step-size/step-count ablation
of the tanh-interval attack, and emit the analysis bundle (logit-range
statistics, stationary-margin comparison, 1-D toy demo curves).

Every run writes a manifest JSON capturing the resolved configuration, the
seed, and SHA-256 hashes of its input files, so outputs are reproducible
from the manifest alone. Exit codes: 0 success, 1 usage error, 2 runtime
error, 3 attack-invariant breach.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import ValidationError
from .attacks import PRESET_NAMES, AttackConfig, CWConfig, make_attack
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, load_idx, subset, synth_blobs, synth_digits
from .evaluation import (
    FeasibilityError,
    alpha_sweep,
    robust_accuracy,
    step_ablation,
    toy_demo_1d,
    transfer_eval,
    write_eval_report,
    write_rows_tsv,
    write_transfer_report,
)
from .losses import optimal_margin
from .network import init_model
from .training import TrainConfig, logit_range_stats, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_INVARIANT = 3

OUTDIR_ENV = "LSROBUST_OUTDIR"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(out_dir: Path, name: str, config: dict, inputs) -> Path:
    manifest = {
        "command": name,
        "package_version": __version__,
        "config": config,
        "input_hashes": {str(p): _sha256(p) for p in inputs if Path(p).is_file()},
    }
    path = out_dir / f"{name}_manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    return path


def _parse_range(spec: str):
    """'a:b:step' inclusive range, or comma-separated values."""
    if ":" in spec:
        lo, hi, step = (float(v) for v in spec.split(":"))
        n = int(round((hi - lo) / step)) + 1
        return [round(lo + i * step, 10) for i in range(n)]
    return [float(v) for v in spec.split(",")]


def _load_data(args, split: str) -> Dataset:
    seed = args.data_seed + (0 if split == "train" else 1)
    if args.data == "digits":
        n = args.train_per_class if split == "train" else args.eval_per_class
        return synth_digits(n, seed=seed, split=split)
    if args.data == "blobs":
        n = args.train_per_class if split == "train" else args.eval_per_class
        return synth_blobs(args.blob_classes, n, args.blob_dim,
                           separation=args.blob_separation, seed=seed,
                           split=split)
    if args.data == "mnist":
        root = Path(args.data_dir)
        prefix = "train" if split == "train" else "t10k"
        return load_idx(root / f"{prefix}-images-idx3-ubyte",
                        root / f"{prefix}-labels-idx1-ubyte", split=split)
    raise ValidationError(f"unknown dataset {args.data!r}")


def _add_data_flags(p):
    p.add_argument("--data", default="digits",
                   choices=("digits", "blobs", "mnist"))
    p.add_argument("--data-dir", default="./data",
                   help="directory with IDX files for --data mnist")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--train-per-class", type=int, default=500)
    p.add_argument("--eval-per-class", type=int, default=100)
    p.add_argument("--blob-classes", type=int, default=4)
    p.add_argument("--blob-dim", type=int, default=16)
    p.add_argument("--blob-separation", type=float, default=4.0)
    p.add_argument("--eval-n", type=int, default=1000,
                   help="fixed evaluation subset size (seeded shuffle)")


def _add_attack_flags(p):
    p.add_argument("--attack", default="pgd20",
                   help=f"preset name ({', '.join(PRESET_NAMES)}) or "
                        "comma-separated list for an ensemble")
    p.add_argument("--eps", type=float, default=0.3)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--init", default=None,
                   choices=("original", "random_in_ball", "odi"))
    p.add_argument("--loss", default=None,
                   choices=("cross_entropy", "margin"))
    p.add_argument("--cw-c", type=float, default=None)
    p.add_argument("--cw-kappa", type=float, default=None)
    p.add_argument("--cw-lr", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=256)


def _build_attack(name: str, args):
    name = name.strip()
    attack = make_attack(name, args.eps, args.seed)
    if isinstance(attack.config, AttackConfig):
        over = {}
        for flag, field_name in (("steps", "steps"), ("step_size", "step_size"),
                                 ("restarts", "restarts"), ("init", "init"),
                                 ("loss", "loss")):
            value = getattr(args, flag)
            if value is not None:
                over[field_name] = value
        if over:
            attack.config = replace(attack.config, **over)
    elif isinstance(attack.config, CWConfig):
        over = {}
        if args.cw_c is not None:
            over["c"] = args.cw_c
        if args.cw_kappa is not None:
            over["kappa"] = args.cw_kappa
        if args.cw_lr is not None:
            over["learning_rate"] = args.cw_lr
        if args.steps is not None:
            over["steps"] = args.steps
        if over:
            attack.config = replace(attack.config, **over)
    elif attack.kind == "ours":
        if args.steps is not None:
            attack.config["steps"] = args.steps
        if args.step_size is not None:
            attack.config["step_size"] = args.step_size
    return attack


def _attacks_from_arg(args):
    names = [n for n in args.attack.split(",") if n.strip()]
    attacks = [_build_attack(n, args) for n in names]
    return attacks[0] if len(attacks) == 1 else attacks


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_config_file(args, parser, argv):
    """key=value file; explicit command-line flags win."""
    if not args.config:
        return
    path = Path(args.config)
    if not path.is_file():
        parser.error(f"config file not found: {path}")
    given = {a.lstrip("-").replace("-", "_").split("=")[0]
             for a in argv if a.startswith("--")}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                parser.error(f"bad config line: {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key in given or not hasattr(args, key):
                continue
            current = getattr(args, key)
            if isinstance(current, bool):
                value = value.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                value = int(value)
            elif isinstance(current, float):
                value = float(value)
            setattr(args, key, value)


def cmd_train(args) -> int:
    out = _out_dir(args)
    hidden = [int(h) for h in args.hidden.split(",") if h]
    try:
        cfg = TrainConfig(
            epochs=args.epochs, batch_size=args.train_batch_size,
            learning_rate=args.lr, momentum=args.momentum,
            label_mode=args.label_mode, alpha=args.alpha,
            adv_eps=args.adv_eps, adv_steps=args.adv_steps,
            rng_seed=args.seed,
        )
    except ValidationError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    train_set = _load_data(args, "train")
    test_set = _load_data(args, "test")
    model = init_model([train_set.dim, *hidden, train_set.num_classes],
                       seed=args.seed)
    trained, log = train(model, train_set, cfg, test_set)
    ckpt_path = out / args.ckpt
    meta = {
        "label_mode": cfg.label_mode,
        "alpha": cfg.alpha,
        "seed": cfg.rng_seed,
        "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate,
        "momentum": cfg.momentum,
        "adv_eps": cfg.adv_eps if cfg.label_mode == "adversarial" else None,
        "dataset": train_set.name,
        "init": "uniform sqrt(6/(fan_in+fan_out))",
        "train_acc": log[-1].train_acc,
        "test_acc": log[-1].test_acc,
    }
    save_checkpoint(trained, meta, ckpt_path)
    log_path = out / (ckpt_path.stem + "_train_log.tsv")
    with open(log_path, "w") as f:
        f.write("epoch\tloss\ttrain_acc\ttest_acc\n")
        for record in log:
            f.write(record.as_line() + "\n")
    _write_manifest(out, f"train_{ckpt_path.stem}", {
        "train": vars(cfg).copy(), "hidden": hidden, "data": args.data,
        "outputs": [str(ckpt_path), str(log_path)],
    }, [])
    print(f"saved {ckpt_path} (train_acc={log[-1].train_acc:.4f}, "
          f"test_acc={log[-1].test_acc:.4f})")
    return EXIT_OK


def _eval_subset(args) -> Dataset:
    test_set = _load_data(args, "test")
    return subset(test_set, args.eval_n, seed=1234)


def cmd_eval(args, per_example: bool) -> int:
    out = _out_dir(args)
    ckpt = load_checkpoint(args.model)
    data = _eval_subset(args)
    attack = _attacks_from_arg(args)
    report = robust_accuracy(
        ckpt.model, data, attack, eps=args.eps, seed=args.seed,
        model_id=Path(args.model).stem, model_meta=ckpt.meta,
        batch_size=args.batch_size, workers=args.workers)
    stem_name = f"{'attack' if per_example else 'eval'}_" \
                f"{Path(args.model).stem}_{args.attack.replace(',', '+')}"
    tsv, js = write_eval_report(report, out / stem_name)
    _write_manifest(out, stem_name, {
        "model": args.model, "attack": report.attack, "eps": args.eps,
        "seed": args.seed, "eval_n": args.eval_n,
        "outputs": [tsv, js],
    }, [args.model])
    print(f"{report.model_id} vs {args.attack}: natural "
          f"{report.natural_accuracy:.2f}%, robust {report.robust_accuracy:.2f}%")
    return EXIT_OK


def cmd_transfer(args) -> int:
    out = _out_dir(args)
    source = load_checkpoint(args.source)
    target = load_checkpoint(args.target)
    data = _eval_subset(args)
    attack = _attacks_from_arg(args)
    report = transfer_eval(
        source.model, target.model, data, attack, eps=args.eps,
        seed=args.seed, source_id=Path(args.source).stem,
        target_id=Path(args.target).stem, batch_size=args.batch_size,
        workers=args.workers)
    stem_name = f"transfer_{report.source_id}_to_{report.target_id}_{args.attack}"
    path = write_transfer_report(report, out / stem_name)
    _write_manifest(out, stem_name, {
        "source": args.source, "target": args.target,
        "attack": report.attack, "eps": args.eps, "seed": args.seed,
        "outputs": [path],
    }, [args.source, args.target])
    print(f"transfer {report.source_id} -> {report.target_id}: "
          f"{report.transfer_robust_accuracy:.2f}% (clean "
          f"{report.natural_accuracy:.2f}%)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    train_set = _load_data(args, "train")
    data = _eval_subset(args)
    alphas = _parse_range(args.alphas)
    cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                      batch_size=args.train_batch_size,
                      momentum=args.momentum, label_mode="smoothed",
                      rng_seed=args.seed)
    hidden = [int(h) for h in args.hidden.split(",") if h]
    attack = _attacks_from_arg(args)
    rows = alpha_sweep(alphas, train_set, data,
                       [train_set.dim, *hidden, train_set.num_classes],
                       cfg, attack, eps=args.eps, seed=args.seed,
                       batch_size=args.batch_size, workers=args.workers)
    path = write_rows_tsv(rows, ("alpha", "natural_accuracy",
                                 "robust_accuracy"), out / "alpha_sweep.tsv")
    _write_manifest(out, "sweep", {
        "alphas": alphas, "attack": args.attack, "eps": args.eps,
        "epochs": args.epochs, "seed": args.seed, "outputs": [path],
    }, [])
    for row in rows:
        print(f"alpha={row.alpha:<5g} natural={row.natural_accuracy:6.2f}% "
              f"robust={row.robust_accuracy:6.2f}%")
    return EXIT_OK


def cmd_ablate(args) -> int:
    out = _out_dir(args)
    data = _eval_subset(args)
    models = {}
    for path in args.model:
        ckpt = load_checkpoint(path)
        models[Path(path).stem] = ckpt.model
    rows = step_ablation(
        models, data, args.eps,
        step_sizes=_parse_range(args.step_sizes),
        step_counts=[int(v) for v in _parse_range(args.step_counts)],
        full_steps=args.full_steps)
    path = write_rows_tsv(rows, ("model_id", "step_size", "step_count",
                                 "robust_accuracy"), out / "step_ablation.tsv")
    _write_manifest(out, "ablate", {
        "models": list(args.model), "eps": args.eps,
        "step_sizes": args.step_sizes, "step_counts": args.step_counts,
        "outputs": [path],
    }, list(args.model))
    print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


def cmd_analyze(args) -> int:
    out = _out_dir(args)
    outputs = []
    if args.model:
        ckpt = load_checkpoint(args.model)
        data = _eval_subset(args)
        stats = logit_range_stats(ckpt.model, data)
        payload = {"model_id": Path(args.model).stem, **stats.as_dict()}
        alpha = ckpt.meta.get("alpha") or 0.0
        if ckpt.meta.get("label_mode") == "smoothed" and alpha > 0:
            m_star = optimal_margin(alpha, ckpt.model.num_classes)
            payload["optimal_margin"] = m_star
            payload["mean_margin_over_optimal"] = stats.mean_margin / m_star
        stats_path = out / f"logit_stats_{Path(args.model).stem}.json"
        with open(stats_path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        outputs.append(str(stats_path))
        print(f"logit range [{stats.logit_min:.3f}, {stats.logit_max:.3f}], "
              f"mean margin {stats.mean_margin:.4f}")
    if args.toy_demo:
        demo = _run_toy_demo(args.seed, args.toy_alpha, args.toy_epochs)
        demo_path = out / "toy_demo_1d.tsv"
        with open(demo_path, "w") as f:
            f.write("x\thard_correct\thard_other\tsmooth_correct\tsmooth_other\n")
            for i, x in enumerate(demo.xs):
                f.write(f"{x:.6f}\t{demo.hard_correct[i]:.6f}\t"
                        f"{demo.hard_other[i]:.6f}\t{demo.smooth_correct[i]:.6f}\t"
                        f"{demo.smooth_other[i]:.6f}\n")
        cross_path = out / "toy_demo_crossings.json"
        with open(cross_path, "w") as f:
            json.dump({"hard": demo.hard_crossings,
                       "smooth": demo.smooth_crossings}, f, indent=2)
            f.write("\n")
        outputs += [str(demo_path), str(cross_path)]
        print(f"toy demo: {len(demo.hard_crossings)} hard / "
              f"{len(demo.smooth_crossings)} smoothed crossings")
    _write_manifest(out, "analyze", {
        "model": args.model, "toy_demo": args.toy_demo, "seed": args.seed,
        "outputs": outputs,
    }, [args.model] if args.model else [])
    return EXIT_OK


def make_demo_models(seed: int = 0, alpha: float = 0.9, epochs: int = 300):
    """Train the pair of 1-D, 2-class models used by the toy demo."""
    rng = np.random.default_rng(seed)
    n = 400
    x0 = np.clip(rng.normal(0.3, 0.06, n // 2), 0, 1)
    x1 = np.clip(rng.normal(0.7, 0.06, n // 2), 0, 1)
    X = np.concatenate([x0, x1])[:, None]
    y = np.concatenate([np.zeros(n // 2, dtype=np.int64),
                        np.ones(n // 2, dtype=np.int64)])
    order = rng.permutation(n)
    data = Dataset(X[order], y[order], 2, "toy1d", "train")
    hard_cfg = TrainConfig(epochs=epochs, learning_rate=0.05,
                           label_mode="hard", rng_seed=seed)
    smooth_cfg = replace(hard_cfg, label_mode="smoothed", alpha=alpha)
    hard, _ = train(init_model([1, 16, 2], seed=seed), data, hard_cfg)
    smooth, _ = train(init_model([1, 16, 2], seed=seed), data, smooth_cfg)
    return hard, smooth


def _run_toy_demo(seed, alpha, epochs):
    hard, smooth = make_demo_models(seed, alpha, epochs)
    return toy_demo_1d(hard, smooth, t=0)


def build_parser() -> _Parser:
    parser = _Parser(prog="lsrobust",
                     description="Label-smoothing robustness toolkit")
    parser.add_argument("--out-dir",
                        default=os.environ.get(OUTDIR_ENV, "./runs"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", default=None,
                        help="key=value config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_data_flags(p)
    p.add_argument("--label-mode", default="hard",
                   choices=("hard", "smoothed", "adversarial"))
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--train-batch-size", type=int, default=64)
    p.add_argument("--hidden", default="256")
    p.add_argument("--adv-eps", type=float, default=0.3)
    p.add_argument("--adv-steps", type=int, default=7)
    p.add_argument("--ckpt", default="model.ckpt")

    for name, per_example in (("attack", True), ("eval", False)):
        p = sub.add_parser(name, help=("run one attack, write per-example "
                                       "outcomes" if per_example else
                                       "evaluate robust accuracy"))
        _add_data_flags(p)
        _add_attack_flags(p)
        p.add_argument("--model", required=True)
        p.set_defaults(per_example=per_example)

    p = sub.add_parser("transfer", help="craft on source, evaluate on target")
    _add_data_flags(p)
    _add_attack_flags(p)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)

    p = sub.add_parser("sweep", help="train/evaluate across smoothing factors")
    _add_data_flags(p)
    _add_attack_flags(p)
    p.add_argument("--alphas", default="0.0:0.9:0.1")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--train-batch-size", type=int, default=64)
    p.add_argument("--hidden", default="256")

    p = sub.add_parser("ablate", help="step-size/step-count ablation grid")
    _add_data_flags(p)
    p.add_argument("--model", action="append", required=True,
                   help="checkpoint; repeat for several models")
    p.add_argument("--eps", type=float, default=0.3)
    p.add_argument("--step-sizes", default="0.01:0.1:0.01")
    p.add_argument("--step-counts", default="50:500:50")
    p.add_argument("--full-steps", type=int, default=500)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=256)

    p = sub.add_parser("analyze", help="logit stats, margin law, toy demo")
    _add_data_flags(p)
    p.add_argument("--model", default=None)
    p.add_argument("--toy-demo", action="store_true", default=True)
    p.add_argument("--no-toy-demo", dest="toy_demo", action="store_false")
    p.add_argument("--toy-alpha", type=float, default=0.9)
    p.add_argument("--toy-epochs", type=int, default=300)
    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    argv = [str(a) for a in argv]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        _apply_config_file(args, parser, argv)
        if args.command == "train":
            return cmd_train(args)
        if args.command in ("attack", "eval"):
            return cmd_eval(args, args.per_example)
        if args.command == "transfer":
            return cmd_transfer(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "ablate":
            return cmd_ablate(args)
        if args.command == "analyze":
            return cmd_analyze(args)
        parser.error(f"unknown command {args.command!r}")
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except FeasibilityError as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ValidationError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
