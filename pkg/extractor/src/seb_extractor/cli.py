"""Command-line entry point mirroring the ExtractJob fields."""

from __future__ import annotations

import argparse
import sys

from .extract import DEFAULT_TEMPLATE, DatasetError, ExtractJob, run_extract


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seb-extract",
                                description="Encode an image dataset and its "
                                            "class prompts into SEB1 files")
    p.add_argument("--dataset-dir", required=True)
    p.add_argument("--corruption", default=None)
    p.add_argument("--severity", type=int, default=None)
    p.add_argument("--out-images", required=True)
    p.add_argument("--out-anchors", required=True)
    p.add_argument("--prompt-template", default=DEFAULT_TEMPLATE)
    p.add_argument("--sample-cap", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--encoder", choices=("stub", "clip"), default="stub")
    p.add_argument("--checkpoint", default=None,
                   help="clip encoder checkpoint name (encoder=clip only)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    kwargs = {}
    if args.encoder == "clip" and args.checkpoint:
        kwargs["checkpoint"] = args.checkpoint
    try:
        job = ExtractJob(
            dataset_dir=args.dataset_dir, corruption=args.corruption,
            severity=args.severity, out_images=args.out_images,
            out_anchors=args.out_anchors, prompt_template=args.prompt_template,
            sample_cap=args.sample_cap, batch_size=args.batch_size,
            encoder=args.encoder, encoder_kwargs=kwargs,
        )
        summary = run_extract(job)
    except (DatasetError, ValueError, OSError) as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {summary['n_images']} image embeddings "
          f"({summary['n_classes']} classes, dim {summary['dim']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
