"""Command line front end mirroring ExportSpec."""

import argparse
import sys

from .capture import CAPTURE_POINTS, ExportSpec, export
from .errors import ExportError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="moee-export",
        description="Export MoE router activations to a MOEA container",
    )
    p.add_argument("--model", required=True, help="checkpoint path or identifier")
    p.add_argument("--texts", required=True, help="file with one text per line")
    p.add_argument("--prompt", type=int, default=0)
    p.add_argument("--tokens", choices=("all", "last"), default="last")
    p.add_argument("--capture", choices=CAPTURE_POINTS, default="pre_topk_softmax")
    p.add_argument("--include-shared", action="store_true")
    p.add_argument("--name", default="", help="model name recorded in the fingerprint")
    p.add_argument("-o", "--output", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.texts, "r", encoding="utf-8") as f:
            texts = [line.rstrip("\n") for line in f if line.strip()]
        spec = ExportSpec(
            model_path=args.model,
            texts=texts,
            output_path=args.output,
            prompt_id=args.prompt,
            token_mode=args.tokens,
            capture=args.capture,
            include_shared=args.include_shared,
            model_name=args.name,
        )
        path = export(spec)
    except (ExportError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
