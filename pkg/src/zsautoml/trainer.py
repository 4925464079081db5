"""Training loop: per-iteration graph rebuild from current fused reps, one
randomly masked node per backprop step, dual cross-entropy loss, Adam updates,
plus evaluation and versioned checkpointing."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import PROB_FLOOR
from .catalog import Catalog, CatalogError, PipelineLabel, PrimitiveVocabulary
from .embedding import embed_pipeline
from .graph import DatasetGraph, build_knn_graph, attach_test_node
from .metafeatures import Standardizer, standardize
from .model import (
    ModelConfig,
    PipelineDistribution,
    ZeroShotModel,
    adjacency_mask,
    select_pipeline,
)
from .serialize import atomic_write_text, esc, unesc, vec_from_hex, vec_to_hex

log = logging.getLogger(__name__)

CKPT_MAGIC = "ZSCKPT"
CKPT_VERSION = 1


class TrainerError(Exception):
    pass


@dataclass
class TrainConfig:
    iterations: int = 20000
    graph_rebuild_every: int = 1
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    eval_every: int = 1000
    # Eval periods without held-out improvement before stopping (0 = off).
    # Small catalogs saturate long before the full iteration budget, so
    # stopping at the best evaluated model is the default.
    early_stop_patience: int = 5

    def validate(self) -> None:
        if self.iterations < 1:
            raise TrainerError(f"iterations must be >= 1, got {self.iterations}")
        if self.graph_rebuild_every < 1:
            raise TrainerError(
                f"graph_rebuild_every must be >= 1, got {self.graph_rebuild_every}"
            )


@dataclass
class NodeData:
    """Dense per-node arrays for one split, in record order."""

    ids: list[str]
    meta: np.ndarray  # n x d_meta, standardized
    desc: np.ndarray  # n x d_desc
    pipe: np.ndarray  # n x d_pipe (unmasked pipeline embeddings)
    labels_fp: np.ndarray  # int, -1 when unknown
    labels_est: np.ndarray

    @property
    def n(self) -> int:
        return len(self.ids)


@dataclass
class EvalMetrics:
    feat_acc: float
    est_acc: float
    joint_acc: float
    mean_loss: float


@dataclass
class TrainLogEntry:
    step: int
    mean_loss: float
    feat_acc: float
    est_acc: float
    joint_acc: float


@dataclass
class TrainLog:
    losses: list[float] = field(default_factory=list)
    evals: list[TrainLogEntry] = field(default_factory=list)


def loss_value(d: PipelineDistribution, label: PipelineLabel) -> float:
    """Sum of the two head cross-entropies for a single node."""
    pf = max(float(d.p_feat[label.feature_processor]), PROB_FLOOR)
    pe = max(float(d.p_est[label.estimator]), PROB_FLOOR)
    return float(-np.log(pf) - np.log(pe))


def _node_data(
    records: list,
    config: ModelConfig,
    vocab: PrimitiveVocabulary,
    doc_store,
    standardizer: Standardizer | None,
) -> NodeData:
    ids, metas, descs, pipes, fps, ests = [], [], [], [], [], []
    for rec in records:
        ids.append(rec.id)
        if config.d_meta > 0:
            if rec.meta is None:
                raise TrainerError(f"dataset {rec.id!r} has no computed meta-features")
            if rec.meta.size != config.d_meta:
                raise TrainerError(
                    f"dataset {rec.id!r} meta width {rec.meta.size} != config {config.d_meta}"
                )
            metas.append(standardize(rec.meta, standardizer))
        else:
            metas.append(np.zeros(0))
        if config.d_desc > 0:
            if rec.desc_embedding is None:
                raise TrainerError(f"dataset {rec.id!r} has no description embedding")
            if rec.desc_embedding.size != config.d_desc:
                raise TrainerError(
                    f"dataset {rec.id!r} embedding width {rec.desc_embedding.size} "
                    f"!= config {config.d_desc}"
                )
            descs.append(rec.desc_embedding)
        else:
            descs.append(np.zeros(0))
        if rec.best_label is not None:
            fps.append(rec.best_label.feature_processor)
            ests.append(rec.best_label.estimator)
            if config.d_desc > 0:
                pipes.append(embed_pipeline(rec.best_label, vocab, doc_store))
            else:
                pipes.append(np.zeros(0))
        else:
            fps.append(-1)
            ests.append(-1)
            pipes.append(np.zeros(config.d_pipe))
    n = len(ids)
    return NodeData(
        ids=ids,
        meta=np.vstack(metas) if n else np.zeros((0, config.d_meta)),
        desc=np.vstack(descs) if n else np.zeros((0, config.d_desc)),
        pipe=np.vstack(pipes) if n else np.zeros((0, config.d_pipe)),
        labels_fp=np.array(fps, dtype=np.int64),
        labels_est=np.array(ests, dtype=np.int64),
    )


def prepare_training_data(
    cat: Catalog, config: ModelConfig, standardizer: Standardizer | None = None
) -> tuple[NodeData, Standardizer | None, list[str]]:
    """Build the dense training arrays; unlabeled train datasets are excluded.

    Returns (data, standardizer fitted on the included train split, excluded ids).
    """
    train = cat.train_records()
    excluded = [r.id for r in train if r.best_label is None]
    for did in excluded:
        log.warning("train dataset %r has no pipeline label; excluded from training", did)
    included = [r for r in train if r.best_label is not None]
    if len(included) < 2:
        raise TrainerError(
            f"need at least 2 labeled train datasets, got {len(included)}"
        )
    if config.d_meta > 0 and standardizer is None:
        from .metafeatures import fit_standardizer

        vecs = []
        for rec in included:
            if rec.meta is None:
                raise TrainerError(f"dataset {rec.id!r} has no computed meta-features")
            vecs.append(rec.meta)
        standardizer = fit_standardizer(vecs)
    if config.d_desc > 0 and cat.doc_embeddings is None:
        raise TrainerError("catalog has no primitive-documentation embeddings")
    data = _node_data(included, config, cat.vocabulary, cat.doc_embeddings, standardizer)
    return data, standardizer, excluded


def _fused_reps(model: ZeroShotModel, data: NodeData) -> ad.Node:
    return model.fuse_datasets(ad.constant(data.meta), ad.constant(data.desc))


def _forward_masked(
    model: ZeroShotModel,
    data: NodeData,
    adjacency: list[list[int]],
    node_i: int,
    mask: np.ndarray | None = None,
) -> tuple[ad.Node, ad.Node]:
    """Forward with node_i's pipeline embedding zeroed; heads read at node_i."""
    fused = _fused_reps(model, data)
    pipe = data.pipe.copy()
    pipe[node_i, :] = 0.0
    u = model.fuse_nodes(fused, ad.constant(pipe))
    h = model.gat_forward(u, adjacency, mask=mask)
    h_i = ad.pick_row(h, node_i)
    return model.predict_heads(h_i)


def train_step(
    model: ZeroShotModel,
    data: NodeData,
    adjacency: list[list[int]],
    node_i: int,
    cfg: TrainConfig,
    mask: np.ndarray | None = None,
) -> float:
    """One masked-node backprop iteration; returns the step loss."""
    fp = int(data.labels_fp[node_i])
    est = int(data.labels_est[node_i])
    if fp < 0 or est < 0:
        raise TrainerError(f"train node {data.ids[node_i]!r} has no pipeline label")
    params = model.parameters()
    ad.zero_grad(params)
    p_feat, p_est = _forward_masked(model, data, adjacency, node_i, mask=mask)
    loss_node = ad.add(ad.cross_entropy(p_feat, fp), ad.cross_entropy(p_est, est))
    ad.backward(loss_node)
    ad.adam_step(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    return float(loss_node.value[0, 0])


def rebuild_adjacency(
    model: ZeroShotModel, data: NodeData, k: int
) -> tuple[list[list[int]], np.ndarray]:
    fused = model.fuse_dataset_values(data.meta, data.desc)
    g = build_knn_graph(fused, k=k, node_ids=data.ids)
    return g.adjacency, fused


def _rebuild_with_mask(
    model: ZeroShotModel, data: NodeData, k: int
) -> tuple[list[list[int]], np.ndarray]:
    """Like rebuild_adjacency, but also returns the dense attention mask."""
    fused = model.fuse_dataset_values(data.meta, data.desc)
    g = build_knn_graph(fused, k=k, node_ids=data.ids)
    mask = g.dense.copy()
    np.fill_diagonal(mask, True)
    return g.adjacency, mask


def evaluate_nodes(
    model: ZeroShotModel,
    data: NodeData,
    adjacency: list[list[int]],
    test: NodeData | None = None,
) -> EvalMetrics:
    """Masked top-1 label accuracy per head plus mean loss.

    With ``test`` given, each test node is fused, attached to the training
    graph by k-NN and predicted; labels are ground truth only. Otherwise every
    training node is evaluated masked in-graph.
    """
    losses, feat_ok, est_ok, joint_ok = [], [], [], []

    if test is None:
        mask = adjacency_mask(adjacency)
        for i in range(data.n):
            p_feat, p_est = _forward_masked(model, data, adjacency, i, mask=mask)
            d = PipelineDistribution(p_feat.value[0], p_est.value[0])
            _tally(d, int(data.labels_fp[i]), int(data.labels_est[i]),
                   losses, feat_ok, est_ok, joint_ok)
    else:
        if test.n == 0:
            raise TrainerError("empty evaluation split")
        k = model.config.k_neighbors
        train_fused = _fused_reps(model, data).value
        base = DatasetGraph(node_ids=list(data.ids), reps=train_fused,
                            adjacency=adjacency)
        for i in range(test.n):
            joined = NodeData(
                ids=data.ids + [test.ids[i]],
                meta=np.vstack([data.meta, test.meta[i : i + 1]]),
                desc=np.vstack([data.desc, test.desc[i : i + 1]]),
                pipe=np.vstack([data.pipe, np.zeros((1, data.pipe.shape[1]))]),
                labels_fp=np.concatenate([data.labels_fp, [-1]]),
                labels_est=np.concatenate([data.labels_est, [-1]]),
            )
            test_fused = model.fuse_datasets(
                ad.constant(test.meta[i : i + 1]), ad.constant(test.desc[i : i + 1])
            ).value
            g_ext, new_idx = attach_test_node(base, test_fused[0], k=k,
                                              node_id=test.ids[i])
            p_feat, p_est = _forward_masked(model, joined, g_ext.adjacency, new_idx)
            d = PipelineDistribution(p_feat.value[0], p_est.value[0])
            _tally(d, int(test.labels_fp[i]), int(test.labels_est[i]),
                   losses, feat_ok, est_ok, joint_ok)

    if not losses:
        raise TrainerError("empty evaluation split")
    return EvalMetrics(
        feat_acc=float(np.mean(feat_ok)),
        est_acc=float(np.mean(est_ok)),
        joint_acc=float(np.mean(joint_ok)),
        mean_loss=float(np.mean(losses)),
    )


def _tally(d, fp, est, losses, feat_ok, est_ok, joint_ok):
    if fp < 0 or est < 0:
        raise TrainerError("evaluation node has no ground-truth label")
    label = select_pipeline(d)
    losses.append(loss_value(d, PipelineLabel(fp, est)))
    feat_ok.append(label.feature_processor == fp)
    est_ok.append(label.estimator == est)
    joint_ok.append(label.feature_processor == fp and label.estimator == est)


def evaluate(
    model: ZeroShotModel,
    cat: Catalog,
    standardizer: Standardizer | None,
    split: str = "test",
) -> EvalMetrics:
    """Evaluate label agreement over a catalog split (masking enforced)."""
    data, standardizer, _ = prepare_training_data(cat, model.config, standardizer)
    adjacency, _ = rebuild_adjacency(model, data, model.config.k_neighbors)
    if split == "train":
        return evaluate_nodes(model, data, adjacency)
    recs = cat.test_records()
    if not recs:
        raise TrainerError("catalog has no test datasets")
    test = _node_data(recs, model.config, cat.vocabulary, cat.doc_embeddings, standardizer)
    return evaluate_nodes(model, data, adjacency, test=test)


def train(
    model: ZeroShotModel, cat: Catalog, cfg: TrainConfig
) -> tuple[ZeroShotModel, TrainLog, Standardizer | None]:
    """Run cfg.iterations masked-node steps over the catalog's train split."""
    cfg.validate()
    data, standardizer, _ = prepare_training_data(cat, model.config)
    test_recs = cat.test_records()
    test = None
    if test_recs and all(r.best_label is not None for r in test_recs):
        test = _node_data(
            test_recs, model.config, cat.vocabulary, cat.doc_embeddings, standardizer
        )

    rng = np.random.default_rng(cfg.seed)
    k = model.config.k_neighbors
    logbook = TrainLog()
    adjacency: list[list[int]] = []
    best: dict[str, np.ndarray] | None = None
    best_acc = -1.0
    stale = 0

    mask: np.ndarray | None = None
    for step in range(cfg.iterations):
        if step % cfg.graph_rebuild_every == 0:
            adjacency, mask = _rebuild_with_mask(model, data, k)
        node_i = int(rng.integers(data.n))
        logbook.losses.append(train_step(model, data, adjacency, node_i, cfg, mask=mask))

        if (step + 1) % cfg.eval_every == 0 or step + 1 == cfg.iterations:
            window = logbook.losses[-cfg.eval_every :]
            metrics = evaluate_nodes(model, data, adjacency, test=test)
            logbook.evals.append(
                TrainLogEntry(
                    step=step + 1,
                    mean_loss=float(np.mean(window)),
                    feat_acc=metrics.feat_acc,
                    est_acc=metrics.est_acc,
                    joint_acc=metrics.joint_acc,
                )
            )
            if cfg.early_stop_patience > 0:
                if metrics.joint_acc > best_acc:
                    best_acc = metrics.joint_acc
                    best = {n: p.value.copy() for n, p in model.params.items()}
                    stale = 0
                else:
                    stale += 1
                    if stale >= cfg.early_stop_patience:
                        break

    if cfg.early_stop_patience > 0 and best is not None:
        for name, val in best.items():
            model.params[name].value[:] = val
    return model, logbook, standardizer


# ---- checkpointing ----


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    vocab: PrimitiveVocabulary
    std_mean: np.ndarray | None
    std_std: np.ndarray | None
    node_ids: list[str]
    fused: np.ndarray  # n x d_fused training reps (for k-NN attachment)
    node_features: np.ndarray  # n x d_node labeled node features
    adjacency: list[list[int]]
    provenance: dict

    def standardizer(self) -> Standardizer | None:
        if self.std_mean is None:
            return None
        return Standardizer(mean=self.std_mean, std=self.std_std)

    def model(self) -> ZeroShotModel:
        m = ZeroShotModel(self.config, seed=0)
        if set(m.params) != set(self.params):
            missing = sorted(set(m.params) ^ set(self.params))
            raise TrainerError(f"checkpoint parameter set mismatch: {missing}")
        for name, p in m.params.items():
            if p.value.shape != self.params[name].shape:
                raise TrainerError(
                    f"checkpoint tensor {name!r} has shape {self.params[name].shape}, "
                    f"config implies {p.value.shape}"
                )
            p.value[:] = self.params[name]
        return m


def build_checkpoint(
    model: ZeroShotModel,
    cat: Catalog,
    standardizer: Standardizer | None,
    provenance: dict | None = None,
) -> Checkpoint:
    """Freeze the trained model plus the labeled training graph for inference."""
    data, standardizer, _ = prepare_training_data(cat, model.config, standardizer)
    adjacency, fused = rebuild_adjacency(model, data, model.config.k_neighbors)
    u = model.fuse_nodes(ad.constant(fused), ad.constant(data.pipe)).value
    prov = {"embedder": cat.embedder, "ablation": model.config.ablation()}
    prov.update(provenance or {})
    return Checkpoint(
        config=model.config,
        params={n: p.value.copy() for n, p in model.params.items()},
        vocab=cat.vocabulary,
        std_mean=None if standardizer is None else standardizer.mean,
        std_std=None if standardizer is None else standardizer.std,
        node_ids=list(data.ids),
        fused=fused,
        node_features=u,
        adjacency=adjacency,
        provenance=prov,
    )


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    lines = [f"{CKPT_MAGIC} {CKPT_VERSION}"]
    lines.append("config " + json.dumps(ckpt.config.to_dict(), sort_keys=True))
    lines.append("provenance " + json.dumps(ckpt.provenance, sort_keys=True))
    lines.append("std_mean " + ("-" if ckpt.std_mean is None else vec_to_hex(ckpt.std_mean)))
    lines.append("std_std " + ("-" if ckpt.std_std is None else vec_to_hex(ckpt.std_std)))
    lines.append("fps " + "\t".join(ckpt.vocab.feature_processors))
    lines.append("ests " + "\t".join(ckpt.vocab.estimators))
    for name in ckpt.vocab.feature_processors + ckpt.vocab.estimators:
        lines.append(f"doc {name}\t{esc(ckpt.vocab.doc_text.get(name, ''))}")
    for name, val in ckpt.params.items():
        lines.append(f"param {name} {val.shape[0]} {val.shape[1]} {vec_to_hex(val)}")
    lines.append("ids " + "\t".join(esc(i) for i in ckpt.node_ids))
    for i, nbrs in enumerate(ckpt.adjacency):
        lines.append(f"adj {i} " + " ".join(str(j) for j in nbrs))
    lines.append(f"fused {ckpt.fused.shape[0]} {ckpt.fused.shape[1]}")
    for row in ckpt.fused:
        lines.append("frow " + vec_to_hex(row))
    lines.append(f"ufeat {ckpt.node_features.shape[0]} {ckpt.node_features.shape[1]}")
    for row in ckpt.node_features:
        lines.append("urow " + vec_to_hex(row))
    lines.append("end")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise TrainerError(f"{path}: empty checkpoint file")
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != CKPT_MAGIC:
        raise TrainerError(f"{path}: not a checkpoint (bad header {lines[0]!r})")
    if int(magic[1]) != CKPT_VERSION:
        raise TrainerError(
            f"{path}: checkpoint version {magic[1]} unsupported "
            f"(this build reads {CKPT_VERSION})"
        )
    if lines[-1].strip() != "end":
        raise TrainerError(f"{path}: truncated checkpoint (missing end marker)")

    config = None
    provenance: dict = {}
    std_mean = std_std = None
    fps: list[str] = []
    ests: list[str] = []
    docs: dict[str, str] = {}
    params: dict[str, np.ndarray] = {}
    node_ids: list[str] = []
    adjacency: list[list[int]] = []
    fused_rows: list[np.ndarray] = []
    u_rows: list[np.ndarray] = []
    fused_shape = u_shape = None

    for ln in lines[1:-1]:
        key, _, rest = ln.partition(" ")
        if key == "config":
            config = ModelConfig.from_dict(json.loads(rest))
        elif key == "provenance":
            provenance = json.loads(rest)
        elif key == "std_mean":
            std_mean = None if rest == "-" else vec_from_hex(rest)
        elif key == "std_std":
            std_std = None if rest == "-" else vec_from_hex(rest)
        elif key == "fps":
            fps = rest.split("\t")
        elif key == "ests":
            ests = rest.split("\t")
        elif key == "doc":
            name, _, text = rest.partition("\t")
            docs[name] = unesc(text)
        elif key == "param":
            name, rows_s, cols_s, hexes = rest.split(" ", 3)
            rows, cols = int(rows_s), int(cols_s)
            vec = vec_from_hex(hexes)
            if vec.size != rows * cols:
                raise TrainerError(f"{path}: tensor {name!r} has wrong element count")
            params[name] = vec.reshape(rows, cols)
        elif key == "ids":
            node_ids = [unesc(t) for t in rest.split("\t")]
        elif key == "adj":
            idx_s, _, nbrs = rest.partition(" ")
            if int(idx_s) != len(adjacency):
                raise TrainerError(f"{path}: adjacency rows out of order")
            adjacency.append([int(t) for t in nbrs.split()] if nbrs.strip() else [])
        elif key == "fused":
            fused_shape = tuple(int(t) for t in rest.split())
        elif key == "frow":
            fused_rows.append(vec_from_hex(rest))
        elif key == "ufeat":
            u_shape = tuple(int(t) for t in rest.split())
        elif key == "urow":
            u_rows.append(vec_from_hex(rest))
        else:
            raise TrainerError(f"{path}: unknown checkpoint line key {key!r}")

    if config is None:
        raise TrainerError(f"{path}: checkpoint has no config")
    fused = np.vstack(fused_rows) if fused_rows else np.zeros(fused_shape or (0, 0))
    u = np.vstack(u_rows) if u_rows else np.zeros(u_shape or (0, 0))
    if fused_shape is not None and fused.shape != fused_shape:
        raise TrainerError(f"{path}: fused reps shape {fused.shape} != declared {fused_shape}")
    if u_shape is not None and u.shape != u_shape:
        raise TrainerError(f"{path}: node features shape {u.shape} != declared {u_shape}")

    vocab = PrimitiveVocabulary(estimators=ests, feature_processors=fps, doc_text=docs)
    if config.n_feature_processors != vocab.n_feature_processors:
        raise TrainerError(
            f"{path}: head_feat width {config.n_feature_processors} != "
            f"vocabulary size {vocab.n_feature_processors}"
        )
    if config.n_estimators != vocab.n_estimators:
        raise TrainerError(
            f"{path}: head_est width {config.n_estimators} != "
            f"vocabulary size {vocab.n_estimators}"
        )
    ckpt = Checkpoint(
        config=config,
        params=params,
        vocab=vocab,
        std_mean=std_mean,
        std_std=std_std,
        node_ids=node_ids,
        fused=fused,
        node_features=u,
        adjacency=adjacency,
        provenance=provenance,
    )
    ckpt.model()  # validates parameter names and shapes against the config
    return ckpt
