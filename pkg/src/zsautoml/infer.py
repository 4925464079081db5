"""Zero-shot recommendation for a new dataset, latency benchmarking, and
result-table emission."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .catalog import DataTable, PipelineLabel
from .embedding import hash_embed
from .graph import DatasetGraph, attach_test_node
from .metafeatures import compute_metafeatures, standardize
from .model import PipelineDistribution, ZeroShotModel, select_pipeline
from .trainer import Checkpoint, TrainerError


class InferError(Exception):
    pass


@dataclass
class Recommendation:
    dataset_id: str
    label: PipelineLabel
    feature_processor: str
    estimator: str
    distribution: PipelineDistribution
    neighbor_ids: list[str]
    timings: dict[str, float]  # metafeature_ms, embed_ms, attach_ms, gnn_ms, total_ms
    ablation: str
    embedder: str


class InferenceSession:
    """A frozen checkpoint prepared for repeated read-only recommendations."""

    def __init__(self, ckpt: Checkpoint):
        self.ckpt = ckpt
        self.model: ZeroShotModel = ckpt.model()
        self.standardizer = ckpt.standardizer()
        self.base = DatasetGraph(
            node_ids=list(ckpt.node_ids), reps=ckpt.fused, adjacency=ckpt.adjacency
        )
        self.hash_seed = int(ckpt.provenance.get("hash_seed", 0))
        self._layer_cache = self._build_layer_cache()

    def _build_layer_cache(self) -> list[dict]:
        """Run the base graph through every attention layer once, keeping the
        per-layer transformed features and attention projections.

        Attaching one query node only perturbs rows within a few hops of it,
        so recommend() can reuse these rows instead of recomputing the whole
        graph on every call.
        """
        cfg = self.model.config
        slope = cfg.leaky_slope
        h = self.ckpt.node_features
        n = h.shape[0]
        mask = np.eye(n, dtype=bool)
        for i, nbrs in enumerate(self.ckpt.adjacency):
            mask[i, nbrs] = True
        cache = []
        for layer in range(cfg.gat_layers):
            w = self.model.params[f"gat{layer}.w"].value
            z_src = self.model.params[f"gat{layer}.z_src"].value.reshape(-1)
            z_dst = self.model.params[f"gat{layer}.z_dst"].value.reshape(-1)
            wu = h @ w
            a_src = wu @ z_src
            a_dst = wu @ z_dst
            cache.append({"wu": wu, "a_src": a_src, "a_dst": a_dst})
            logits = a_src[:, None] + a_dst[None, :]
            logits = np.where(logits >= 0.0, logits, slope * logits)
            neg = np.where(mask, logits, -np.inf)
            e = np.where(mask, np.exp(logits - neg.max(axis=1, keepdims=True)), 0.0)
            att = e / e.sum(axis=1, keepdims=True)
            h = att @ wu
            if layer < cfg.gat_layers - 1:
                h = np.where(h >= 0.0, h, slope * h)
        return cache

    def _gat_query_forward(
        self, u_new: np.ndarray, adjacency: list[list[int]], new_idx: int
    ) -> np.ndarray:
        """Query-node output of the attention stack over the extended graph.

        Equivalent to a full forward pass, but recomputes only the rows whose
        receptive field touches the new node, splicing everything else in from
        the cached base-graph pass.
        """
        cfg = self.model.config
        slope = cfg.leaky_slope
        n_layers = cfg.gat_layers

        def group(i: int) -> list[int]:
            return [i] + adjacency[i]

        # Rows of each layer's output that the query prediction depends on.
        needed: list[set[int]] = [set() for _ in range(n_layers + 1)]
        needed[n_layers] = {new_idx}
        for level in range(n_layers - 1, 0, -1):
            rows = set(needed[level + 1])
            for i in needed[level + 1]:
                rows.update(adjacency[i])
            needed[level] = rows

        changed: set[int] = {new_idx}  # rows whose input differs from the base pass
        cur: dict[int, np.ndarray] = {new_idx: u_new.reshape(-1)}
        for layer in range(n_layers):
            lc = self._layer_cache[layer]
            w = self.model.params[f"gat{layer}.w"].value
            z_src = self.model.params[f"gat{layer}.z_src"].value.reshape(-1)
            z_dst = self.model.params[f"gat{layer}.z_dst"].value.reshape(-1)
            changed_next = set(changed)
            for i in changed:
                changed_next.update(adjacency[i])
            compute = needed[layer + 1] & changed_next

            # Layer-input rows feeding the computed rows: cached unless changed.
            feed = set()
            for i in compute:
                feed.update(group(i))
            redo = sorted(feed & changed)
            wu = np.vstack([lc["wu"], np.zeros((1, w.shape[1]))])
            a_src = np.append(lc["a_src"], 0.0)
            a_dst = np.append(lc["a_dst"], 0.0)
            if redo:
                fresh = np.vstack([cur[j] for j in redo]) @ w
                wu[redo] = fresh
                a_src[redo] = fresh @ z_src
                a_dst[redo] = fresh @ z_dst

            nxt: dict[int, np.ndarray] = {}
            for i in compute:
                grp = group(i)
                logits = a_src[i] + a_dst[grp]
                logits = np.where(logits >= 0.0, logits, slope * logits)
                e = np.exp(logits - logits.max())
                alpha = e / e.sum()
                row = alpha @ wu[grp]
                if layer < n_layers - 1:
                    row = np.where(row >= 0.0, row, slope * row)
                nxt[i] = row
            cur = nxt
            changed = changed_next
        return cur[new_idx]

    def recommend(
        self,
        table: DataTable | None,
        description: str,
        dataset_id: str = "?",
        desc_vector: np.ndarray | None = None,
    ) -> Recommendation:
        cfg = self.model.config
        t_start = time.perf_counter()

        meta_row = np.zeros((1, 0))
        if cfg.d_meta > 0:
            if table is None or table.n_rows == 0:
                raise InferError("a nonempty table is required to compute meta-features")
            mf = compute_metafeatures(table, dataset_id)
            if mf.width != cfg.d_meta:
                raise InferError(
                    f"meta-feature width {mf.width} != checkpoint width {cfg.d_meta}"
                )
            meta_row = standardize(mf, self.standardizer).reshape(1, -1)
        t_meta = time.perf_counter()

        desc_row = np.zeros((1, 0))
        if cfg.d_desc > 0:
            if desc_vector is not None:
                v = np.asarray(desc_vector, dtype=np.float64).reshape(-1)
                if v.size != cfg.d_desc:
                    raise InferError(
                        f"description embedding width {v.size} != checkpoint {cfg.d_desc}"
                    )
                desc_row = v.reshape(1, -1)
            else:
                desc_row = hash_embed(description, cfg.d_desc, self.hash_seed).reshape(1, -1)
        t_embed = time.perf_counter()

        fused = self.model.fuse_datasets(
            ad.constant(meta_row), ad.constant(desc_row)
        ).value
        g_ext, new_idx = attach_test_node(
            self.base, fused[0], k=cfg.k_neighbors, node_id=dataset_id
        )
        t_attach = time.perf_counter()

        u_new = self.model.fuse_nodes(
            ad.constant(fused), ad.constant(np.zeros((1, cfg.d_pipe)))
        ).value
        h_new = self._gat_query_forward(u_new, g_ext.adjacency, new_idx)
        dist = self.model.head_distribution(ad.constant(h_new.reshape(1, -1)))
        t_gnn = time.perf_counter()

        label = select_pipeline(dist)
        fp_name, est_name = label.names(self.ckpt.vocab)
        return Recommendation(
            dataset_id=dataset_id,
            label=label,
            feature_processor=fp_name,
            estimator=est_name,
            distribution=dist,
            neighbor_ids=[self.ckpt.node_ids[j] for j in g_ext.adjacency[new_idx]],
            timings={
                "metafeature_ms": (t_meta - t_start) * 1e3,
                "embed_ms": (t_embed - t_meta) * 1e3,
                "attach_ms": (t_attach - t_embed) * 1e3,
                "gnn_ms": (t_gnn - t_attach) * 1e3,
                "total_ms": (t_gnn - t_start) * 1e3,
            },
            ablation=cfg.ablation(),
            embedder=self.ckpt.provenance.get("embedder", "hashed"),
        )


def recommend(
    ckpt: Checkpoint,
    table: DataTable | None,
    description: str,
    dataset_id: str = "?",
    desc_vector: np.ndarray | None = None,
) -> Recommendation:
    return InferenceSession(ckpt).recommend(table, description, dataset_id, desc_vector)


@dataclass
class PhaseStats:
    median_ms: float
    mean_ms: float
    p95_ms: float


@dataclass
class BenchSummary:
    trials: int
    phases: dict[str, PhaseStats] = field(default_factory=dict)


def bench(
    ckpt: Checkpoint, table: DataTable | None, description: str, trials: int = 100
) -> BenchSummary:
    """Repeated recommendation with warm caches; trials run sequentially."""
    if trials < 10:
        raise InferError(f"bench needs at least 10 trials, got {trials}")
    session = InferenceSession(ckpt)
    session.recommend(table, description)  # warm-up, not measured
    samples: dict[str, list[float]] = {}
    for _ in range(trials):
        rec = session.recommend(table, description)
        for phase, ms in rec.timings.items():
            samples.setdefault(phase, []).append(ms)
    summary = BenchSummary(trials=trials)
    for phase, vals in samples.items():
        arr = np.asarray(vals)
        summary.phases[phase] = PhaseStats(
            median_ms=float(np.median(arr)),
            mean_ms=float(arr.mean()),
            p95_ms=float(np.percentile(arr, 95)),
        )
    return summary


@dataclass
class ReportRow:
    dataset_id: str
    accuracy: float
    time_s: float


def format_report(rows: list[ReportRow], fmt: str = "tsv", method: str = "") -> str:
    """Per-dataset accuracy/time plus the aggregate row
    (Median, Min, Max, Mean, Std, Median time)."""
    if not rows:
        raise InferError("cannot emit a report from empty results")
    if fmt not in ("tsv", "text"):
        raise InferError(f"unknown report format {fmt!r}")
    acc = np.array([r.accuracy for r in rows])
    times = np.array([r.time_s for r in rows])
    agg = [
        float(np.median(acc)),
        float(acc.min()),
        float(acc.max()),
        float(acc.mean()),
        float(acc.std()),
        float(np.median(times)),
    ]
    if fmt == "tsv":
        out = ["dataset\taccuracy\ttime_s"]
        for r in rows:
            out.append(f"{r.dataset_id}\t{r.accuracy:.4f}\t{r.time_s:.4f}")
        out.append("")
        if method:
            out.append(f"# method\t{method}")
        out.append("method\tMedian\tMin\tMax\tMean\tStd\tMedian time (s)")
        out.append(
            (method or "aggregate")
            + "\t"
            + "\t".join(f"{v:.4f}" for v in agg)
        )
        return "\n".join(out) + "\n"

    width = max(len(r.dataset_id) for r in rows) + 2
    out = [f"{'Dataset':<{width}}{'Accuracy':>10}{'Time (s)':>12}"]
    for r in rows:
        out.append(f"{r.dataset_id:<{width}}{r.accuracy:>10.4f}{r.time_s:>12.4f}")
    out.append("")
    if method:
        out.append(f"Method: {method}")
    out.append(f"{'':<{width}}{'Median':>10}{'Min':>10}{'Max':>10}{'Mean':>10}{'Std':>10}{'Median time':>14}")
    out.append(
        f"{'aggregate':<{width}}"
        + "".join(f"{v:>10.4f}" for v in agg[:5])
        + f"{agg[5]:>14.4f}"
    )
    return "\n".join(out) + "\n"


def emit_report(rows: list[ReportRow], path: str, fmt: str = "tsv", method: str = "") -> None:
    from .serialize import atomic_write_text

    atomic_write_text(path, format_report(rows, fmt, method))


def load_report_rows(path: str) -> list[ReportRow]:
    """Read per-dataset result rows (``dataset  accuracy  time_s``; # comments)."""
    rows: list[ReportRow] = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#") or ln.startswith("dataset\t"):
                continue
            parts = ln.split("\t")
            if len(parts) > 3:
                continue  # aggregate row appended by format_report
            if len(parts) < 3:
                raise TrainerError(f"{path}: bad result row {ln!r}")
            try:
                rows.append(ReportRow(parts[0], float(parts[1]), float(parts[2])))
            except ValueError:
                continue  # aggregate / header rows
    if not rows:
        raise InferError(f"{path}: no result rows found")
    return rows
