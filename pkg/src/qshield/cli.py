"""Command-line entry points.

    qshield train-qvc   train a classifier, write a checkpoint
    qshield attack      craft an adversarial batch against a checkpoint
    qshield train-ae    train the purifier on an adversarial batch
    qshield eval        score a classifier on clean/attacked/purified data
    qshield run         full experiment grid, report CSV + JSON (+ SVG)
    qshield plot        render an accuracy-vs-epsilon SVG from a report
    qshield inspect     dump checkpoint or report metadata as JSON

The data directory defaults to $QSHIELD_DATA_DIR, then ./data. Exit codes:
0 success, 1 runtime failure (with a diagnostic on stderr), 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

from . import cednet, dataio, pipeline, qvc
from .attacks import AttackConfig, attack_batch, linf_distance
from .errors import QShieldError
from .rng import derive


def default_data_dir() -> str:
    return os.environ.get("QSHIELD_DATA_DIR", "data")


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data-dir", default=None, help="IDX data root (default: $QSHIELD_DATA_DIR or ./data)")
    p.add_argument("--dataset", default="mnist", choices=list(dataio.DATASET_NAMES))


def _load_subset(args, per_class: tuple, seed: int):
    data_dir = args.data_dir or default_data_dir()
    split = dataio.load_split(data_dir, args.dataset)
    return dataio.subset(split, per_class, seed)


def cmd_train_qvc(args) -> int:
    sub = _load_subset(args, (args.subset_per_class, args.eval_per_class), derive(args.seed, "subset"))
    cfg = qvc.TrainConfig(args.lr, args.batch_size, args.epochs, args.seed)
    params, metrics = qvc.train_qvc(
        sub.train_images.pixels,
        sub.train_labels.labels,
        args.layers,
        cfg,
        sub.test_images.pixels,
        sub.test_labels.labels,
        topology=args.topology,
        grad_mode=args.grad_mode,
        workers=args.workers,
    )
    pipeline.save_qvc(
        args.out,
        params,
        {
            "train": asdict(cfg),
            "dataset": args.dataset,
            "epoch_losses": metrics.epoch_losses,
            "epoch_accuracies": metrics.epoch_accuracies,
            "n_steps": metrics.n_steps,
        },
    )
    final_acc = metrics.epoch_accuracies[-1] if metrics.epoch_accuracies else None
    print(json.dumps({"checkpoint": args.out, "eval_accuracy": final_acc, "epochs": args.epochs}))
    return 0


def cmd_attack(args) -> int:
    params, _ = pipeline.load_qvc(args.model)
    model = qvc.QvcModel(params, workers=args.workers)
    sub = _load_subset(args, (0, args.subset_per_class) if args.split == "test" else (args.subset_per_class, 0), derive(args.seed, "subset"))
    if args.split == "test":
        images, labels = sub.test_images.pixels, sub.test_labels.labels
    else:
        images, labels = sub.train_images.pixels, sub.train_labels.labels
    cfg = AttackConfig(
        kind=args.kind,
        epsilon=args.epsilon,
        steps=args.steps,
        alpha=args.alpha,
        clip_pixels=not args.no_clip_pixels,
        random_start=args.random_start,
        seed=args.seed,
    )
    batch = attack_batch(model, images, labels, cfg)
    # Post-check the budget independently of attack_batch's own verification;
    # a violated bound here means the artifact must not be written.
    worst = linf_distance(batch.adversarials, batch.originals)
    if worst > cfg.epsilon + 1e-12:
        print(f"attack exceeded epsilon: L-inf {worst} > {cfg.epsilon}", file=sys.stderr)
        return 1
    pipeline.save_adversarial(args.out, batch)
    adv_acc = model.accuracy(batch.adversarials, batch.labels)
    clean_acc = model.accuracy(batch.originals, batch.labels)
    print(
        json.dumps(
            {
                "checkpoint": args.out,
                "count": int(batch.labels.shape[0]),
                "linf": worst,
                "clean_accuracy": clean_acc,
                "adv_accuracy": adv_acc,
            }
        )
    )
    return 0


def cmd_train_ae(args) -> int:
    batch, _ = pipeline.load_adversarial(args.adv)
    cfg = cednet.AeTrainConfig(args.lr, args.batch_size, args.epochs, args.seed)
    params, losses = cednet.train_autoencoder(batch.adversarials, batch.originals, cfg)
    pipeline.save_autoencoder(args.out, params, {"train": asdict(cfg), "losses": losses})
    print(json.dumps({"checkpoint": args.out, "initial_loss": losses[0], "final_loss": losses[-1]}))
    return 0


def cmd_eval(args) -> int:
    params, _ = pipeline.load_qvc(args.model)
    model = qvc.QvcModel(params, workers=args.workers)
    out = {}
    if args.adv:
        batch, _ = pipeline.load_adversarial(args.adv)
        images, labels = batch.adversarials, batch.labels
        out["clean_accuracy"] = model.accuracy(batch.originals, labels)
        out["adv_accuracy"] = model.accuracy(images, labels)
    else:
        sub = _load_subset(args, (0, args.subset_per_class), derive(args.seed, "subset"))
        images, labels = sub.test_images.pixels, sub.test_labels.labels
        out["clean_accuracy"] = model.accuracy(images, labels)
    if args.ae:
        ae_params, _ = pipeline.load_autoencoder(args.ae)
        recon = cednet.reconstruct_batch(ae_params, images)
        out["recon_accuracy"] = model.accuracy(recon, labels)
    print(json.dumps(out, sort_keys=True))
    return 0


def _grid_from_arg(text: str) -> tuple:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def cmd_run(args) -> int:
    data_dir = args.data_dir or default_data_dir()
    out_dir = args.out_dir or "runs/latest"
    if args.config:
        with open(args.config) as fh:
            cfg = config_from_dict(json.load(fh))
        cfg.data_dir = args.data_dir or cfg.data_dir
        cfg.out_dir = args.out_dir or cfg.out_dir
    elif args.desk_scale:
        cfg = pipeline.desk_config(
            data_dir, out_dir, box=args.box, attack_kind=args.attack, dataset=args.dataset, seed=args.seed
        )
    else:
        attacker = pipeline.ModelSpec(args.layers, derive(args.seed, "attacker"))
        evaluator = (
            attacker
            if args.box == "white"
            else pipeline.ModelSpec(args.evaluator_layers, derive(args.seed, "evaluator"))
        )
        cfg = pipeline.ExperimentConfig(
            data_dir=data_dir,
            out_dir=out_dir,
            dataset=args.dataset,
            box=args.box,
            attack=AttackConfig(kind=args.attack, steps=args.steps),
            attacker=attacker,
            evaluator=evaluator,
            qvc_train=qvc.TrainConfig(args.lr, args.batch_size, args.epochs, 0),
            ae_train=cednet.AeTrainConfig(args.ae_lr, args.batch_size, args.ae_epochs, 0),
            train_per_class=args.train_per_class,
            test_per_class=args.test_per_class,
            seed=args.seed,
        )
    if args.eps_grid:
        cfg.epsilon_grid = _grid_from_arg(args.eps_grid)
    if args.shared_ae:
        cfg.shared_ae = True
    cfg.workers = args.workers
    report = pipeline.run_experiment(cfg)
    paths = pipeline.write_report(report, cfg.out_dir)
    if args.plot:
        svg_path = os.path.join(cfg.out_dir, "report.svg")
        with open(svg_path, "w") as fh:
            fh.write(render_report_svg(report))
        paths["svg"] = svg_path
    print(json.dumps({"rows": len(report.rows), **paths}))
    return 0


def cmd_plot(args) -> int:
    with open(args.report) as fh:
        report = pipeline.report_from_json(fh.read())
    with open(args.out, "w") as fh:
        fh.write(render_report_svg(report))
    print(json.dumps({"svg": args.out, "rows": len(report.rows)}))
    return 0


def cmd_inspect(args) -> int:
    if args.path.endswith(".json"):
        with open(args.path) as fh:
            report = pipeline.report_from_json(fh.read())
        info = {
            "kind": "report",
            "rows": [asdict(r) for r in report.rows],
            "metadata": report.metadata,
        }
    else:
        kind, meta, arrays = dataio.read_checkpoint(args.path)
        info = {
            "kind": dataio.KIND_NAMES[kind],
            "metadata": meta,
            "arrays": {name: list(arr.shape) for name, arr in sorted(arrays.items())},
        }
    print(json.dumps(info, sort_keys=True, indent=2))
    return 0


# ------------------------------------------------------------ config (de)ser

def config_to_dict(cfg: pipeline.ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["epsilon_grid"] = list(cfg.epsilon_grid)
    return d


def config_from_dict(d: dict) -> pipeline.ExperimentConfig:
    d = dict(d)
    known = {
        "data_dir", "out_dir", "dataset", "box", "attack", "attacker", "evaluator",
        "epsilon_grid", "qvc_train", "ae_train", "train_per_class", "test_per_class",
        "shared_ae", "grad_mode", "workers", "seed",
    }
    unknown = set(d) - known
    if unknown:
        raise QShieldError(f"unknown config keys: {sorted(unknown)}")
    if "attack" in d:
        d["attack"] = AttackConfig(**d["attack"])
    for key in ("attacker", "evaluator"):
        if key in d:
            d[key] = pipeline.ModelSpec(**d[key])
    if "qvc_train" in d:
        d["qvc_train"] = qvc.TrainConfig(**d["qvc_train"])
    if "ae_train" in d:
        d["ae_train"] = cednet.AeTrainConfig(**d["ae_train"])
    if "epsilon_grid" in d:
        d["epsilon_grid"] = tuple(d["epsilon_grid"])
    return pipeline.ExperimentConfig(**d)


# --------------------------------------------------------------------- plots

SERIES = (("clean_acc", "#2b6cb0"), ("adv_acc", "#c53030"), ("recon_acc", "#2f855a"))


def render_report_svg(report: pipeline.RunReport, width: int = 640, height: int = 420) -> str:
    """Accuracy-vs-epsilon chart: one polyline per series plus point markers.

    Hand-rolled SVG so reports render anywhere without a plotting stack.
    """
    rows = sorted(report.rows, key=lambda r: r.epsilon)
    if not rows:
        raise QShieldError("report has no rows to plot")
    left, right, top, bottom = 60, 20, 30, 50
    plot_w, plot_h = width - left - right, height - top - bottom
    eps_max = max(r.epsilon for r in rows) or 1.0

    def x_of(eps: float) -> float:
        return left + plot_w * (eps / eps_max)

    def y_of(acc: float) -> float:
        return top + plot_h * (1.0 - acc)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="#444"/>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" stroke="#444"/>',
    ]
    for i in range(6):
        acc = i / 5.0
        y = y_of(acc)
        parts.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="#444"/>')
        parts.append(f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end">{acc:.1f}</text>')
    for r in rows:
        x = x_of(r.epsilon)
        parts.append(
            f'<line x1="{x:.1f}" y1="{top + plot_h}" x2="{x:.1f}" y2="{top + plot_h + 4}" stroke="#444"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{top + plot_h + 18}" text-anchor="middle">{r.epsilon:g}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 12}" text-anchor="middle">epsilon</text>'
    )
    parts.append(
        f'<text x="16" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + plot_h / 2:.1f})">accuracy</text>'
    )
    for idx, (name, color) in enumerate(SERIES):
        pts = " ".join(f"{x_of(r.epsilon):.2f},{y_of(getattr(r, name)):.2f}" for r in rows)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        for r in rows:
            parts.append(
                f'<circle cx="{x_of(r.epsilon):.2f}" cy="{y_of(getattr(r, name)):.2f}" '
                f'r="3" fill="{color}"/>'
            )
        lx = left + 10 + idx * 110
        parts.append(f'<rect x="{lx}" y="{top - 22}" width="12" height="12" fill="{color}"/>')
        parts.append(f'<text x="{lx + 16}" y="{top - 12}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


# ---------------------------------------------------------------- arg wiring

def build_parser() -> argparse.ArgumentParser:
    root = argparse.ArgumentParser(prog="qshield", description=__doc__.splitlines()[0])
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-qvc", help="train the variational classifier")
    _add_data_args(p)
    p.add_argument("--layers", type=int, default=20)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--subset-per-class", type=int, default=200)
    p.add_argument("--eval-per-class", type=int, default=50)
    p.add_argument("--topology", default="ring", choices=["ring", "chain"])
    p.add_argument("--grad-mode", default="adjoint", choices=list(qvc.GRAD_MODES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_qvc)

    p = sub.add_parser("attack", help="craft an adversarial batch")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--kind", default="pgd", choices=["fgsm", "pgd"])
    p.add_argument("--epsilon", type=float, default=0.3)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--no-clip-pixels", action="store_true")
    p.add_argument("--random-start", action="store_true")
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--subset-per-class", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("train-ae", help="train the purifier on an adversarial batch")
    p.add_argument("--adv", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_ae)

    p = sub.add_parser("eval", help="score a classifier checkpoint")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--adv", default=None, help="adversarial batch checkpoint")
    p.add_argument("--ae", default=None, help="purifier checkpoint")
    p.add_argument("--subset-per-class", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="full experiment grid")
    _add_data_args(p)
    p.add_argument("--out-dir", default=None, help="output directory (default: runs/latest, or the config file's)")
    p.add_argument("--box", default="white", choices=["white", "black"])
    p.add_argument("--attack", default="pgd", choices=["fgsm", "pgd"])
    p.add_argument("--desk-scale", action="store_true", help="use the desk-scale preset")
    p.add_argument("--config", default=None, help="JSON config file (flags override)")
    p.add_argument("--layers", type=int, default=20)
    p.add_argument("--evaluator-layers", type=int, default=40)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--ae-epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--ae-lr", type=float, default=0.001)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--train-per-class", type=int, default=200)
    p.add_argument("--test-per-class", type=int, default=50)
    p.add_argument("--eps-grid", default=None, help="comma-separated epsilon values")
    p.add_argument("--shared-ae", action="store_true")
    p.add_argument("--plot", action="store_true")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="render a report to SVG")
    p.add_argument("--report", required=True, help="report JSON path")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("inspect", help="dump checkpoint/report metadata")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    return root


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except QShieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
