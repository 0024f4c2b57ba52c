"""Operator command line: every subcommand is a thin wrapper over one
library call, so results match library usage exactly for equal seeds.

Config file (JSON or TOML with optional ``model``/``train``/``augment``
sections) plus flag overrides; flags win. The effective config is echoed
into the output directory for provenance.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import (AugmentConfig, ModelConfig, TrainConfig,
                     load_config_file)


def _fail(message: str, code: int = 1) -> int:
    print(json.dumps({"error": message}), file=sys.stderr)
    return code


def _load_sections(args) -> tuple[dict, dict, dict]:
    raw = load_config_file(args.config) if args.config else {}
    return (dict(raw.get("model", {})), dict(raw.get("train", {})),
            dict(raw.get("augment", {})))


def _echo_config(out_dir: Path, model_cfg, train_cfg, augment_cfg,
                 seed: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "effective_config.json").write_text(json.dumps(
        {"model": model_cfg.to_dict(), "train": train_cfg.to_dict(),
         "augment": augment_cfg.to_dict(), "seed": seed}, indent=2))


def _load_dataset(manifest_path: str):
    from .data import Vocabulary, load_manifest
    manifest = load_manifest(manifest_path)
    vocab_path = Path(manifest_path).parent / "vocab.json"
    if not vocab_path.exists():
        raise FileNotFoundError(f"vocab.json not found next to {manifest_path}")
    return manifest, Vocabulary.load(vocab_path)


def cmd_gen_toy(args) -> int:
    from .data import generate_toy_dataset
    manifest = generate_toy_dataset(args.n, seed=args.seed, out_dir=args.out,
                                    canvas=args.canvas)
    print(json.dumps({"records": len(manifest), "out": str(args.out)}))
    return 0


def cmd_synthesize(args) -> int:
    from .data import load_image, save_sketch
    from .sketchgen import synthesize_sketch
    sketch = synthesize_sketch(load_image(args.image))
    save_sketch(sketch, args.out)
    print(json.dumps({"strokes": len(sketch), "out": str(args.out)}))
    return 0


def _model_config_for(vocab, manifest, model_overrides: dict) -> ModelConfig:
    base = {"vocab_size": len(vocab), "num_labels": len(manifest.label_names)}
    base.update(model_overrides)
    return ModelConfig.from_dict(base)


def cmd_train(args) -> int:
    from .encoders import CombinationMode
    from .trainer import train
    manifest, vocab = _load_dataset(args.manifest)
    model_d, train_d, augment_d = _load_sections(args)
    if args.steps is not None:
        train_d["steps"] = args.steps
    if args.batch_size is not None:
        train_d["batch_size"] = args.batch_size
    if args.lr is not None:
        train_d["lr"] = args.lr
    model = None
    if args.init:
        # warm start from externally supplied weights (e.g. a warmup or
        # pretrained checkpoint matching the config)
        from .checkpoint import load_checkpoint
        bundle = load_checkpoint(args.init)
        model, model_d = bundle.model, bundle.config.to_dict()
        model.train()
    model_cfg = _model_config_for(vocab, manifest, model_d)
    train_cfg = TrainConfig.from_dict(train_d)
    augment_cfg = AugmentConfig.from_dict(augment_d)
    out_dir = Path(args.out)
    _echo_config(out_dir, model_cfg, train_cfg, augment_cfg, args.seed)
    result = train(manifest, vocab, model_cfg, train_cfg, augment_cfg,
                   seed=args.seed, out_dir=out_dir,
                   mode=CombinationMode.parse(args.mode), model=model)
    last = result.metrics[-1] if result.metrics else {}
    print(json.dumps({"checkpoint": str(result.checkpoint_path),
                      "steps": len(result.metrics),
                      "final_total": last.get("total")}))
    return 0


def cmd_warmup(args) -> int:
    from .checkpoint import save_checkpoint
    from .trainer import warmup_classifier
    manifest, vocab = _load_dataset(args.manifest)
    model_d, train_d, augment_d = _load_sections(args)
    model_cfg = _model_config_for(vocab, manifest, model_d)
    train_cfg = TrainConfig.from_dict(train_d)
    out_dir = Path(args.out)
    _echo_config(out_dir, model_cfg, train_cfg,
                 AugmentConfig.from_dict(augment_d), args.seed)
    model = warmup_classifier(manifest, vocab, model_cfg, train_cfg,
                              seed=args.seed, steps=args.steps)
    ckpt = out_dir / "warmup.sqckpt"
    save_checkpoint(ckpt, model, vocab)
    print(json.dumps({"checkpoint": str(ckpt), "steps": args.steps}))
    return 0


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .data import load_manifest
    from .encoders import CombinationMode
    from .trainer import evaluate
    manifest = load_manifest(args.manifest)
    bundle = load_checkpoint(args.checkpoint)
    out = evaluate(manifest, bundle, eval_mode=args.mode,
                   combine_mode=CombinationMode.parse(args.combine))
    print("r1,r5,r10")
    print(f"{out['r1']},{out['r5']},{out['r10']}")
    return 0


def cmd_index(args) -> int:
    from .checkpoint import file_sha256, load_checkpoint
    from .data import load_manifest
    from .retrieval import build_index, save_index
    manifest = load_manifest(args.manifest)
    bundle = load_checkpoint(args.checkpoint)
    index = build_index(manifest, bundle,
                        checkpoint_hash=file_sha256(args.checkpoint))
    save_index(index, args.out)
    print(json.dumps({"count": len(index), "dim": index.dim,
                      "out": str(args.out)}))
    return 0


def cmd_serve(args) -> int:
    from .service import serve
    serve(args.checkpoint, args.index, args.images_dir, port=args.port,
          host=args.host)
    return 0


def _run_sweep(args, sweep_fn) -> int:
    from .checkpoint import load_checkpoint
    from .data import load_manifest
    from .retrieval import sweep_to_csv
    manifest = load_manifest(args.manifest)
    bundle = load_checkpoint(args.checkpoint)
    fractions = (tuple(float(f) for f in args.fractions.split(","))
                 if args.fractions else None)
    kwargs = {"seed": args.seed}
    if fractions:
        kwargs["fractions"] = fractions
    rows = sweep_fn(manifest, bundle, **kwargs)
    csv_text = sweep_to_csv(rows)
    if args.out:
        Path(args.out).write_text(csv_text)
    print(csv_text, end="")
    return 0


def cmd_sweep_sketch(args) -> int:
    from .retrieval import sketch_completeness_sweep
    return _run_sweep(args, sketch_completeness_sweep)


def cmd_sweep_text(args) -> int:
    from .retrieval import text_completeness_sweep
    return _run_sweep(args, text_completeness_sweep)


def cmd_caption(args) -> int:
    from .captioner import generate_caption
    from .checkpoint import load_checkpoint
    from .data import detokenize, load_image, load_sketch
    from .encoders import encode_image, encode_sketch
    bundle = load_checkpoint(args.checkpoint)
    if args.sketch:
        cond = encode_sketch(load_sketch(args.sketch), bundle.model)
    elif args.image:
        cond = encode_image(load_image(args.image), bundle.model)
    else:
        return _fail("caption requires --sketch or --image")
    seq = generate_caption(cond, bundle.model.decoder, max_len=args.max_len)
    print(detokenize(seq, bundle.vocab))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sketchquery")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True, config=False, out=None):
        if seed:
            p.add_argument("--seed", type=int, default=0)
        if config:
            p.add_argument("--config", default=None,
                           help="JSON/TOML config; flags override")
        if out is not None:
            p.add_argument("--out", required=out == "required")

    p = sub.add_parser("gen-toy", help="generate the synthetic toy dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--canvas", type=int, default=64)
    common(p, out="required")
    p.set_defaults(fn=cmd_gen_toy)

    p = sub.add_parser("synthesize", help="trace an image into a sketch JSON")
    p.add_argument("--image", required=True)
    common(p, seed=False, out="required")
    p.set_defaults(fn=cmd_synthesize)

    p = sub.add_parser("train", help="train the full objective")
    p.add_argument("--manifest", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--mode", default="sum",
                   help="query combination: sum|max|concat")
    p.add_argument("--init", default=None,
                   help="checkpoint to initialize weights from")
    common(p, config=True, out="required")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("warmup", help="train the classifier head only")
    p.add_argument("--manifest", required=True)
    p.add_argument("--steps", type=int, default=500)
    common(p, config=True, out="required")
    p.set_defaults(fn=cmd_warmup)

    p = sub.add_parser("eval", help="recall@{1,5,10} for one query mode")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mode", default="sketch+text",
                   choices=["sketch+text", "sketch-only", "text-only"])
    p.add_argument("--combine", default="sum")
    common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("index", help="build and save an embedding index")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    common(p, seed=False, out="required")
    p.set_defaults(fn=cmd_index)

    import os
    p = sub.add_parser("serve", help="run the retrieval HTTP service")
    p.add_argument("--checkpoint",
                   default=os.environ.get("SKETCHQUERY_CHECKPOINT"),
                   required="SKETCHQUERY_CHECKPOINT" not in os.environ)
    p.add_argument("--index", default=os.environ.get("SKETCHQUERY_INDEX"),
                   required="SKETCHQUERY_INDEX" not in os.environ)
    p.add_argument("--images-dir",
                   default=os.environ.get("SKETCHQUERY_IMAGES_DIR"),
                   required="SKETCHQUERY_IMAGES_DIR" not in os.environ)
    p.add_argument("--port", type=int,
                   default=int(os.environ.get("SKETCHQUERY_PORT", "8000")))
    p.add_argument("--host", default="127.0.0.1")
    common(p, seed=False)
    p.set_defaults(fn=cmd_serve)

    for name, fn in (("sweep-sketch", cmd_sweep_sketch),
                     ("sweep-text", cmd_sweep_text)):
        p = sub.add_parser(name, help=f"{name} completeness sweep (CSV)")
        p.add_argument("--manifest", required=True)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--fractions", default=None,
                       help="comma-separated kept fractions")
        common(p, out="optional")
        p.set_defaults(fn=fn)

    p = sub.add_parser("caption", help="greedy caption from a sketch or image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sketch", default=None)
    p.add_argument("--image", default=None)
    p.add_argument("--max-len", type=int, default=32)
    common(p, seed=False)
    p.set_defaults(fn=cmd_caption)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, ValueError, RuntimeError) as exc:
        return _fail(f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
