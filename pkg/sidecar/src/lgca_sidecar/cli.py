"""Command line: serve the encoder or generate description files."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .backends import load_backend
from .descriptions import gen_descriptions, read_labels
from .server import EncoderServer


def cmd_serve(args: argparse.Namespace) -> int:
    backend = load_backend(args.backend, device=args.device)
    server = EncoderServer(
        backend, host=args.host, port=args.port, batch_size=args.batch_size
    )
    print(
        f"serving {backend.model_name} (dim {backend.dim}) "
        f"on {server.host}:{server.port}"
    )
    server.serve_forever()
    return 0


def cmd_gen_descriptions(args: argparse.Namespace) -> int:
    labels = read_labels(args.labels)
    descriptions = gen_descriptions(labels, args.count, endpoint=args.llm_endpoint)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(descriptions, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.count} descriptions for {len(labels)} labels to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lgca-sidecar")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the embedding service")
    p_serve.add_argument(
        "--backend",
        default="clip:openai/clip-vit-base-patch32",
        help="clip:<checkpoint> or hashed:<dim>",
    )
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=9944)
    p_serve.add_argument("--batch-size", type=int, default=8)
    p_serve.add_argument("--device", default="cpu")
    p_serve.set_defaults(func=cmd_serve)

    p_gen = sub.add_parser("gen-descriptions", help="write a description JSON file")
    p_gen.add_argument("--labels", required=True, help="text file (one label per line) or JSON list")
    p_gen.add_argument("--count", type=int, default=10)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--llm-endpoint", default=None)
    p_gen.set_defaults(func=cmd_gen_descriptions)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
