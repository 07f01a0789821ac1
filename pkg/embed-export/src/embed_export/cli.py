"""embed-export command line: batch corpus export or one-off query embedding.

    embed-export --config job.json
    embed-export --query "some text" --out q.emb [--encoder hashing:384]

Exit codes: 0 ok, 1 usage/config, 2 encoder failure, 3 write failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .emb1 import Emb1WriteError
from .encoders import EncoderLoadError, make_encoder
from .export import ExportJob, embed_query, export


def _encoder_spec_from_flag(flag: str | None) -> dict:
    if flag is None:
        return {}
    if flag.startswith("hashing"):
        _, _, dim = flag.partition(":")
        return {"name": "hashing", "dim": int(dim) if dim else 384}
    name, _, revision = flag.partition("@")
    spec = {"name": name}
    if revision:
        spec["revision"] = revision
    return spec


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("EMBED_EXPORT_LOG", "WARNING").upper(), logging.WARNING),
        stream=sys.stderr,
    )
    parser = argparse.ArgumentParser(prog="embed-export", description=__doc__)
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", help="export job JSON")
    group.add_argument("--query", help="embed one query string")
    parser.add_argument("--out", help="output EMB1 path (query mode)")
    parser.add_argument("--encoder", help='encoder override, e.g. "hashing:384" or "model@revision"')
    parser.add_argument("--id", default="query", help="record id in query mode (default: query)")
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--device", default="cpu")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0

    try:
        if args.config:
            config_path = Path(args.config)
            config = json.loads(config_path.read_text(encoding="utf-8"))
            job = ExportJob.from_config(config, base_dir=config_path.parent)
            if args.encoder:
                job.encoder_spec = _encoder_spec_from_flag(args.encoder)
            encoder = make_encoder(job.encoder_spec, device=job.device, batch_size=job.batch_size)
            count = export(job, encoder)
            print(f"wrote {count} records (dim {encoder.dim}) to {job.out_path}")
        else:
            if not args.out:
                parser.print_usage(sys.stderr)
                print("embed-export: error: --query requires --out", file=sys.stderr)
                return 1
            encoder = make_encoder(
                _encoder_spec_from_flag(args.encoder), device=args.device, batch_size=args.batch_size
            )
            embed_query(args.query, args.out, encoder, record_id=args.id)
            print(f"wrote 1 record (dim {encoder.dim}) to {args.out}")
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return 1
    except EncoderLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (Emb1WriteError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
