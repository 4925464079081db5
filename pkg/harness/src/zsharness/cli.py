"""Command-line interface: ``zsharness embed`` writes description embeddings
in the ZSEMB exchange format; ``zsharness run`` scores a recommendations file
against classification tables and emits per-dataset result rows.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources

from .config import HarnessConfig, HarnessError
from .encoder import embed_texts, write_embedding_file
from .scoring import score_recommendations


def reference_tables() -> dict[str, str]:
    """The shipped example tables, as dataset_id -> CSV path."""
    base = resources.files("zsharness") / "data"
    return {
        p.name[: -len(".csv")]: str(p)
        for p in base.iterdir()
        if p.name.endswith(".csv")
    }


def _read_manifest(path: str) -> list[tuple[str, str]]:
    """Each line maps an id to a text file: ``id<TAB>txt`` or the five-column
    dataset manifest (``id  split  csv  labelfile  txt``), whose last column
    is the description path."""
    pairs: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            parts = ln.split("\t")
            if len(parts) not in (2, 5):
                raise HarnessError(f"{path}: bad manifest row {ln!r}")
            pairs.append((parts[0], parts[-1]))
    if not pairs:
        raise HarnessError(f"{path}: empty manifest")
    return pairs


def _cmd_embed(args: argparse.Namespace) -> int:
    cfg = HarnessConfig(
        encoder=args.encoder, embed_width=args.width, seed=args.seed
    )
    texts = []
    for did, txt_path in _read_manifest(args.manifest):
        with open(txt_path, "r", encoding="utf-8") as fh:
            texts.append((did, fh.read()))
    vectors = embed_texts(texts, cfg)
    write_embedding_file(vectors, args.out, cfg)
    print(f"wrote {len(vectors)} embeddings of width {cfg.embed_width} to {args.out}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    tables: dict[str, str] = {} if args.no_reference_tables else reference_tables()
    for spec_arg in args.table:
        if "=" not in spec_arg:
            raise HarnessError(f"--table expects id=path, got {spec_arg!r}")
        did, path = spec_arg.split("=", 1)
        tables[did] = path
    cfg = HarnessConfig(budget_s=args.budget, trials=args.trials, seed=args.seed)
    report = score_recommendations(
        tables, args.recommendations, cfg, runs=args.runs
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(report)
    print(f"wrote results for {args.recommendations} to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="zsharness",
        description="embed dataset descriptions and score recommended pipelines",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    em = sub.add_parser("embed", help="write description embeddings (ZSEMB)")
    em.add_argument("--manifest", required=True, help="id<TAB>textfile lines")
    em.add_argument("--out", required=True)
    em.add_argument("--encoder", default="hash")
    em.add_argument("--width", type=int, default=1024)
    em.add_argument("--seed", type=int, default=0)
    em.set_defaults(func=_cmd_embed)

    rn = sub.add_parser("run", help="execute and score recommended pipelines")
    rn.add_argument("--recommendations", required=True)
    rn.add_argument("--out", required=True)
    rn.add_argument(
        "--table",
        action="append",
        default=[],
        metavar="ID=CSV",
        help="extra tables beyond the shipped reference set (repeatable)",
    )
    rn.add_argument(
        "--no-reference-tables",
        action="store_true",
        help="only use tables given via --table",
    )
    rn.add_argument("--runs", type=int, default=5)
    rn.add_argument("--budget", type=float, default=60.0)
    rn.add_argument("--trials", type=int, default=20)
    rn.add_argument("--seed", type=int, default=0)
    rn.set_defaults(func=_cmd_run)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
