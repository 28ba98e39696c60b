#!/usr/bin/env python3
"""Run the desk-scale experiment arms and render their reports.

Arms are (box, attack) pairs sharing one output directory, so the stage
cache reuses classifiers and attack batches across arms: the white and
black PGD arms train the same 20-layer attacker once, and the black arm
adds only the 40-layer evaluator plus its evaluations.

Usage:
    python scripts/run_desk.py [--arms white:pgd,white:fgsm,black:pgd] \
        [--data-dir DIR] [--out-dir runs/desk] [--seed N] [--workers N]

Each arm writes <out-dir>/<box>-<attack>.{csv,json,svg}.
"""

import argparse
import json
import os
import sys
import time

from qshield import cli, pipeline

DEFAULT_ARMS = "white:pgd,white:fgsm,black:pgd"


def parse_arms(text: str):
    arms = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        box, _, kind = token.partition(":")
        if box not in ("white", "black") or kind not in ("pgd", "fgsm"):
            raise SystemExit(f"bad arm {token!r}, expected box:attack like white:pgd")
        arms.append((box, kind))
    if not arms:
        raise SystemExit("no arms requested")
    return arms


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data-dir", default=None, help="IDX data root (default: $QSHIELD_DATA_DIR or ./data)")
    parser.add_argument("--out-dir", default="runs/desk")
    parser.add_argument("--arms", default=DEFAULT_ARMS)
    parser.add_argument("--dataset", default="mnist")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args(argv)

    data_dir = args.data_dir or cli.default_data_dir()
    arms = parse_arms(args.arms)
    os.makedirs(args.out_dir, exist_ok=True)

    for box, kind in arms:
        stem = f"{box}-{kind}"
        cfg = pipeline.desk_config(
            data_dir, args.out_dir, box=box, attack_kind=kind,
            dataset=args.dataset, seed=args.seed,
        )
        cfg.workers = args.workers
        print(f"[{stem}] attacker {cfg.attacker.tag}, evaluator {cfg.evaluator.tag}, "
              f"grid {list(cfg.epsilon_grid)}")
        start = time.time()
        report = pipeline.run_experiment(cfg)
        paths = pipeline.write_report(report, args.out_dir, stem=stem)
        svg_path = os.path.join(args.out_dir, f"{stem}.svg")
        with open(svg_path, "w") as fh:
            fh.write(cli.render_report_svg(report))
        paths["svg"] = svg_path
        print(f"[{stem}] done in {time.time() - start:.0f}s")
        for row in report.rows:
            print(f"[{stem}]   eps {row.epsilon:>4}: clean {row.clean_acc:.3f} "
                  f"adv {row.adv_acc:.3f} recon {row.recon_acc:.3f}")
        print(f"[{stem}] " + json.dumps(paths))
    return 0


if __name__ == "__main__":
    sys.exit(main())
