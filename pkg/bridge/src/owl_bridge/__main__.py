"""Command-line entry point: load the model, then serve on stdin/stdout."""

from __future__ import annotations

import argparse
import sys

from .config import MODEL_IDS, BridgeConfig
from .server import serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="owl-bridge",
        description="Serve open-vocabulary detections over the line-delimited wire protocol",
    )
    parser.add_argument("--model", choices=sorted(MODEL_IDS), default="base")
    parser.add_argument("--score-floor", type=float, default=0.1)
    parser.add_argument("--device", default="cpu")
    parser.add_argument(
        "--no-prompt-cache",
        action="store_true",
        help="recompute text embeddings on every request",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = BridgeConfig(
            model=args.model,
            score_floor=args.score_floor,
            device=args.device,
            cache_prompts=not args.no_prompt_cache,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    from .model import ModelLoadError, Owlv2Detector

    try:
        detector = Owlv2Detector(config)
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return serve(detector)


if __name__ == "__main__":
    sys.exit(main())
