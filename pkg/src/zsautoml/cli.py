"""Command-line entry points: preprocess, train, recommend, eval, bench,
report, graph dump, metafeatures."""

from __future__ import annotations

import argparse
import sys
import time

from . import catalog as cat_mod
from .autodiff import AutodiffError
from .catalog import CatalogError, load_catalog, load_manifest, load_table, save_catalog
from .embedding import build_doc_store, hash_embed, load_embeddings
from .graph import GraphError, pairwise_distances
from .infer import (
    InferenceSession,
    InferError,
    bench,
    emit_report,
    load_report_rows,
)
from .metafeatures import META_WIDTH, compute_metafeatures
from .model import ModelConfig, ModelError, ZeroShotModel
from .trainer import (
    TrainConfig,
    TrainerError,
    build_checkpoint,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)

DATA_ERRORS = (
    CatalogError,
    TrainerError,
    GraphError,
    ModelError,
    AutodiffError,
    InferError,
    OSError,
    ValueError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="zsautoml", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("preprocess", help="manifest -> processed catalog")
    pp.add_argument("--manifest", required=True)
    pp.add_argument("--labels", required=True, help="performance records file")
    pp.add_argument("--out", required=True)
    pp.add_argument("--desc-width", type=int, default=1024)
    pp.add_argument("--embeddings", help="precomputed description embeddings (ZSEMB)")
    pp.add_argument("--doc-embeddings", help="precomputed primitive-doc embeddings (ZSEMB)")
    pp.add_argument("--seed", type=int, default=0)

    tr = sub.add_parser("train", help="train a model from a processed catalog")
    tr.add_argument("--catalog", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--iterations", type=int, default=20000)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--k", type=int, default=20)
    tr.add_argument("--lr", type=float, default=1e-3)
    tr.add_argument("--eval-every", type=int, default=500)
    tr.add_argument("--rebuild-every", type=int, default=1)
    tr.add_argument("--early-stop-patience", type=int, default=5)
    tr.add_argument("--d-fused", type=int, default=512)
    tr.add_argument("--d-node", type=int, default=512)
    tr.add_argument("--gat-layers", type=int, default=3)
    tr.add_argument("--gat-hidden", type=int, default=512)
    tr.add_argument("--no-description", action="store_true",
                    help="ablation: drop description embeddings (meta-features only)")
    tr.add_argument("--only-description", action="store_true",
                    help="ablation: drop meta-features (descriptions only)")
    tr.add_argument("--log", help="write per-step training log here")

    rc = sub.add_parser("recommend", help="zero-shot pipeline for a new dataset")
    rc.add_argument("--checkpoint", required=True)
    rc.add_argument("--table", required=True)
    rc.add_argument("--description", help="path to a description text file")
    rc.add_argument("--id", default="?", dest="dataset_id")
    rc.add_argument("--embeddings", help="ZSEMB file holding this dataset's embedding")
    rc.add_argument("--target-col")
    rc.add_argument("--out", help="append `id  fp  est` to this TSV")

    ev = sub.add_parser("eval", help="label-agreement metrics over a catalog split")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--catalog", required=True)
    ev.add_argument("--split", choices=["train", "test"], default="test")
    ev.add_argument("--trials", type=int, default=1)

    bn = sub.add_parser("bench", help="latency benchmark for recommend()")
    bn.add_argument("--checkpoint", required=True)
    bn.add_argument("--table", required=True)
    bn.add_argument("--description")
    bn.add_argument("--trials", type=int, default=100)

    rp = sub.add_parser("report", help="format per-dataset result rows as a table")
    rp.add_argument("--results", required=True)
    rp.add_argument("--out", required=True)
    rp.add_argument("--format", choices=["tsv", "text"], default="tsv")
    rp.add_argument("--method", default="")

    gr = sub.add_parser("graph", help="graph debugging")
    gsub = gr.add_subparsers(dest="graph_command", required=True)
    gd = gsub.add_parser("dump", help="emit the training graph edge list")
    gd.add_argument("--checkpoint", required=True)

    mf = sub.add_parser("metafeatures", help="print the meta-feature vector of a table")
    mf.add_argument("table")
    mf.add_argument("--target-col")
    mf.add_argument("--id", default="", dest="dataset_id")
    return p


def _cmd_preprocess(args) -> int:
    cat = load_manifest(args.manifest)
    missing = cat_mod.unresolved_tables(cat)
    if missing:
        raise CatalogError(f"table files missing for: {', '.join(missing)}")
    desc_store = load_embeddings(args.embeddings, args.desc_width) if args.embeddings else None
    cat.desc_width = args.desc_width
    cat.embedder = "precomputed" if desc_store else "hashed"
    cat.meta_names = None
    for rec in cat.records.values():
        table = load_table(rec.table_path, rec.target_col)
        mf = compute_metafeatures(table, rec.id)
        rec.meta = mf.values
        cat.meta_names = mf.names
        if desc_store is not None:
            rec.desc_embedding = desc_store.get(rec.id)
        else:
            rec.desc_embedding = hash_embed(rec.description, args.desc_width, args.seed)
    if args.doc_embeddings:
        cat.doc_embeddings = load_embeddings(args.doc_embeddings, args.desc_width)
    else:
        cat.doc_embeddings = build_doc_store(cat.vocabulary, args.desc_width, args.seed)
    records = cat_mod.load_performance_records(args.labels, cat.vocabulary)
    unlabeled = cat_mod.attach_labels(cat, records)
    save_catalog(cat, args.out)
    print(
        f"catalog written to {args.out}: {len(cat.train_records())} train, "
        f"{len(cat.test_records())} test"
        + (f"; unlabeled train: {', '.join(unlabeled)}" if unlabeled else "")
    )
    return 0


def _cmd_train(args) -> int:
    cat = load_catalog(args.catalog)
    if args.no_description and args.only_description:
        raise UsageError("--no-description and --only-description are exclusive")
    d_meta = 0 if args.only_description else len(cat.meta_names or []) or META_WIDTH
    d_desc = 0 if args.no_description else cat.desc_width
    config = ModelConfig(
        d_meta=d_meta,
        d_desc=d_desc,
        d_fused=args.d_fused,
        d_node=args.d_node,
        gat_layers=args.gat_layers,
        gat_hidden=args.gat_hidden,
        n_feature_processors=cat.vocabulary.n_feature_processors,
        n_estimators=cat.vocabulary.n_estimators,
        k_neighbors=args.k,
    )
    model = ZeroShotModel(config, seed=args.seed)
    cfg = TrainConfig(
        iterations=args.iterations,
        graph_rebuild_every=args.rebuild_every,
        lr=args.lr,
        seed=args.seed,
        eval_every=args.eval_every,
        early_stop_patience=args.early_stop_patience,
    )
    model, logbook, standardizer = train(model, cat, cfg)
    ckpt = build_checkpoint(
        model,
        cat,
        standardizer,
        provenance={"seed": args.seed, "iteration": len(logbook.losses), "hash_seed": 0},
    )
    save_checkpoint(ckpt, args.out)
    if args.log:
        evals = {e.step: e for e in logbook.evals}
        lines = []
        for i, loss in enumerate(logbook.losses, start=1):
            line = f"{i}\t{loss:.6f}"
            if i in evals:
                e = evals[i]
                line += f"\t{e.feat_acc:.4f}\t{e.est_acc:.4f}\t{e.joint_acc:.4f}"
            lines.append(line)
        with open(args.log, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    last = logbook.evals[-1] if logbook.evals else None
    print(f"checkpoint written to {args.out} ({config.ablation()})")
    if last:
        print(
            f"final: mean loss {last.mean_loss:.4f}, feat_acc {last.feat_acc:.3f}, "
            f"est_acc {last.est_acc:.3f}, joint_acc {last.joint_acc:.3f}"
        )
    return 0


def _read_description(path: str | None) -> str:
    if not path:
        return ""
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read().strip()


def _cmd_recommend(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    table = load_table(args.table, args.target_col)
    desc_vector = None
    if args.embeddings:
        store = load_embeddings(args.embeddings, ckpt.config.d_desc)
        desc_vector = store.get(args.dataset_id)
    session = InferenceSession(ckpt)
    rec = session.recommend(
        table, _read_description(args.description), args.dataset_id, desc_vector
    )
    print(f"dataset: {rec.dataset_id}")
    print(f"pipeline: {rec.feature_processor} + {rec.estimator}")
    print(
        f"p(feature_processor) = {rec.distribution.p_feat[rec.label.feature_processor]:.4f}, "
        f"p(estimator) = {rec.distribution.p_est[rec.label.estimator]:.4f}"
    )
    print(f"neighbors: {', '.join(rec.neighbor_ids)}")
    print(f"mode: {rec.ablation} (embedder: {rec.embedder})")
    print(
        "timings ms: "
        + ", ".join(f"{k.removesuffix('_ms')} {v:.2f}" for k, v in rec.timings.items())
    )
    if args.out:
        with open(args.out, "a", encoding="utf-8") as fh:
            fh.write(f"{rec.dataset_id}\t{rec.feature_processor}\t{rec.estimator}\n")
    return 0


def _cmd_eval(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    ckpt = load_checkpoint(args.checkpoint)
    cat = load_catalog(args.catalog)
    model = ckpt.model()
    # Inference is deterministic given a checkpoint, so repeated trials agree;
    # the loop exists so callers can confirm that.
    metrics = None
    for _ in range(args.trials):
        metrics = evaluate(model, cat, ckpt.standardizer(), split=args.split)
    print(f"split: {args.split} ({ckpt.config.ablation()})")
    print(f"feat_acc\t{metrics.feat_acc:.4f}")
    print(f"est_acc\t{metrics.est_acc:.4f}")
    print(f"joint_acc\t{metrics.joint_acc:.4f}")
    print(f"mean_loss\t{metrics.mean_loss:.4f}")
    return 0


def _cmd_bench(args) -> int:
    t0 = time.perf_counter()
    ckpt = load_checkpoint(args.checkpoint)
    load_ms = (time.perf_counter() - t0) * 1e3
    table = load_table(args.table)
    summary = bench(ckpt, table, _read_description(args.description), args.trials)
    print(f"checkpoint load: {load_ms:.1f} ms (not included below)")
    print(f"trials: {summary.trials}")
    print("phase\tmedian_ms\tmean_ms\tp95_ms")
    for phase, st in summary.phases.items():
        print(f"{phase.removesuffix('_ms')}\t{st.median_ms:.3f}\t{st.mean_ms:.3f}\t{st.p95_ms:.3f}")
    return 0


def _cmd_report(args) -> int:
    rows = load_report_rows(args.results)
    emit_report(rows, args.out, args.format, args.method)
    print(f"report written to {args.out}")
    return 0


def _cmd_graph_dump(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    dist = pairwise_distances(ckpt.fused)
    for i, nbrs in enumerate(ckpt.adjacency):
        for j in nbrs:
            if i < j:
                print(f"{ckpt.node_ids[i]}\t{ckpt.node_ids[j]}\t{dist[i, j]:.6f}")
    return 0


def _cmd_metafeatures(args) -> int:
    table = load_table(args.table, args.target_col)
    mf = compute_metafeatures(table, args.dataset_id)
    for name, value in zip(mf.names, mf.values):
        print(f"{name}\t{value!r}")
    return 0


_COMMANDS = {
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "recommend": _cmd_recommend,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "report": _cmd_report,
    "metafeatures": _cmd_metafeatures,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "graph":
            return _cmd_graph_dump(args)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
