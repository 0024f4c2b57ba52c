#!/usr/bin/env python3
"""Loss-term and combination-mode ablation grid on the toy dataset.

Emits the ablation table as CSV (run, combine_mode, weights, recalls).
"""

import argparse
from pathlib import Path

from sketchquery.config import TrainConfig
from sketchquery.data import Vocabulary, generate_toy_dataset, load_manifest
from sketchquery.trainer import ablation_to_csv, run_ablation

from run_toy_experiment import TOY_AUGMENT, toy_model_config


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", required=True)
    parser.add_argument("--train-n", type=int, default=64)
    parser.add_argument("--eval-n", type=int, default=32)
    parser.add_argument("--steps", type=int, default=150)
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out)
    train_dir, eval_dir = out / "train_data", out / "eval_data"
    if not (train_dir / "manifest.jsonl").exists():
        generate_toy_dataset(args.train_n, seed=31, out_dir=train_dir)
        generate_toy_dataset(args.eval_n, seed=32, out_dir=eval_dir)
    train_m = load_manifest(train_dir / "manifest.jsonl")
    eval_m = load_manifest(eval_dir / "manifest.jsonl")
    vocab = Vocabulary.load(train_dir / "vocab.json")

    rows = run_ablation(train_m, eval_m, vocab, toy_model_config(len(vocab)),
                        TrainConfig(batch_size=args.batch_size, lr=args.lr,
                                    steps=args.steps,
                                    checkpoint_every=args.steps),
                        TOY_AUGMENT, seed=args.seed)
    csv_text = ablation_to_csv(rows)
    (out / "ablation.csv").write_text(csv_text)
    print(csv_text, end="")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
