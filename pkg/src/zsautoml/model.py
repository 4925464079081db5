"""The zero-shot network: two fusion perceptrons, a stack of graph attention
layers, and two parallel classification heads over feature processors and
estimators."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Parameter
from .catalog import PipelineLabel


class ModelError(Exception):
    pass


@dataclass
class ModelConfig:
    d_meta: int = 42
    d_desc: int = 1024
    d_fused: int = 512
    d_node: int = 512
    gat_layers: int = 3
    gat_hidden: int = 512
    n_feature_processors: int = 14
    n_estimators: int = 18
    leaky_slope: float = 0.2
    k_neighbors: int = 20

    @property
    def d_pipe(self) -> int:
        return 2 * self.d_desc

    def validate(self) -> None:
        if self.d_meta < 0 or self.d_desc < 0:
            raise ModelError("d_meta and d_desc must be nonnegative")
        if self.d_meta + self.d_desc == 0:
            raise ModelError("at least one of d_meta, d_desc must be positive")
        for name in ("d_fused", "d_node", "gat_layers", "gat_hidden",
                     "n_feature_processors", "n_estimators", "k_neighbors"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be positive")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ModelError("leaky_slope must be in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def ablation(self) -> str:
        if self.d_desc == 0:
            return "no-description"
        if self.d_meta == 0:
            return "only-description"
        return "zero-shot"


@dataclass
class PipelineDistribution:
    p_feat: np.ndarray  # over feature processors
    p_est: np.ndarray  # over estimators


def _fused_mlp(
    a: Node,
    b: Node,
    w1: Node,
    b1: Node,
    w2: Node,
    b2: Node,
    slope: float,
) -> Node:
    """Two-layer perceptron over concatenated row blocks as one autodiff op.

    Computes leaky([a, b] @ w1 + b1) @ w2 + b2 with a closed-form backward,
    sparing the training loop the per-op overhead of concat/affine/leaky
    nodes on arrays touched every step.
    """
    x = np.concatenate([a.value, b.value], axis=1)
    pre = x @ w1.value + b1.value
    h = np.where(pre >= 0.0, pre, slope * pre)
    out = h @ w2.value + b2.value
    split = a.shape[1]

    def backward(g: np.ndarray) -> None:
        b2.accumulate(g.sum(axis=0, keepdims=True), fresh=True)
        w2.accumulate(h.T @ g, fresh=True)
        g_h = g @ w2.value.T
        g_pre = np.where(pre >= 0.0, 1.0, slope) * g_h
        b1.accumulate(g_pre.sum(axis=0, keepdims=True), fresh=True)
        w1.accumulate(x.T @ g_pre, fresh=True)
        g_x = g_pre @ w1.value.T
        a.accumulate(g_x[:, :split])
        b.accumulate(g_x[:, split:])

    return Node(out, (a, b, w1, b1, w2, b2), backward, op="fused_mlp")


def _gat_layer(
    h: Node,
    w: Node,
    z_src: Node,
    z_dst: Node,
    mask: np.ndarray,
    slope: float,
    final: bool,
) -> tuple[Node, np.ndarray]:
    """One attention layer as a single autodiff op with a closed-form backward.

    Computes wu = h @ w, pairwise logits leaky(wu@z_src + (wu@z_dst)^T),
    row softmax restricted to the mask, the attention-weighted sum att @ wu,
    and (unless this is the final layer) a trailing leaky ReLU. Folding the
    layer into one node keeps the training step from paying per-op graph
    overhead on its hottest path. Returns (output node, attention matrix).
    """
    hv, wv, zs, zd = h.value, w.value, z_src.value, z_dst.value
    wu = hv @ wv
    s = wu @ zs  # n x 1
    d = wu @ zd  # n x 1
    logits_pre = s + d.T
    logits = np.where(logits_pre >= 0.0, logits_pre, slope * logits_pre)
    neg = np.where(mask, logits, -np.inf)
    rowmax = neg.max(axis=1, keepdims=True)
    if not np.isfinite(rowmax).all():
        raise ModelError("attention mask has a row with no unmasked entries")
    e = np.where(mask, np.exp(logits - rowmax), 0.0)
    att = e / e.sum(axis=1, keepdims=True)
    pre_out = att @ wu
    out = pre_out if final else np.where(pre_out >= 0.0, pre_out, slope * pre_out)

    def backward(g: np.ndarray) -> None:
        g_pre = g if final else np.where(pre_out >= 0.0, 1.0, slope) * g
        g_att = g_pre @ wu.T
        g_wu = att.T @ g_pre
        g_logits = att * (g_att - np.sum(g_att * att, axis=1, keepdims=True))
        g_lpre = np.where(logits_pre >= 0.0, 1.0, slope) * g_logits
        g_s = g_lpre.sum(axis=1, keepdims=True)  # n x 1
        g_d = g_lpre.sum(axis=0)[:, None]  # n x 1
        g_wu += g_s @ zs.T
        g_wu += g_d @ zd.T
        h.accumulate(g_wu @ wv.T, fresh=True)
        w.accumulate(hv.T @ g_wu, fresh=True)
        z_src.accumulate(wu.T @ g_s, fresh=True)
        z_dst.accumulate(wu.T @ g_d, fresh=True)

    return Node(out, (h, w, z_src, z_dst), backward, op="gat_layer"), att


def adjacency_mask(adjacency: list[list[int]]) -> np.ndarray:
    """Dense boolean attention mask: self plus neighbors per row."""
    n = len(adjacency)
    mask = np.eye(n, dtype=bool)
    for i, nbrs in enumerate(adjacency):
        mask[i, nbrs] = True
    return mask


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / max(fan_in + fan_out, 1))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class ZeroShotModel:
    """Holds all learnable parameters in a canonical (creation) order."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        config.validate()
        self.config = config
        self.params: dict[str, Parameter] = {}
        rng = np.random.default_rng(seed)
        c = config

        def weight(name: str, fan_in: int, fan_out: int) -> None:
            self.params[name] = Parameter(_glorot(rng, fan_in, fan_out), name)

        def bias(name: str, width: int) -> None:
            self.params[name] = Parameter(np.zeros((1, width)), name)

        weight("fphi.w1", c.d_meta + c.d_desc, c.d_fused)
        bias("fphi.b1", c.d_fused)
        weight("fphi.w2", c.d_fused, c.d_fused)
        bias("fphi.b2", c.d_fused)

        weight("gtheta.w1", c.d_fused + c.d_pipe, c.d_node)
        bias("gtheta.b1", c.d_node)
        weight("gtheta.w2", c.d_node, c.d_node)
        bias("gtheta.b2", c.d_node)

        for layer, (w_in, w_out) in enumerate(self.gat_dims()):
            weight(f"gat{layer}.w", w_in, w_out)
            # attention vector z, stored as its source/destination halves
            self.params[f"gat{layer}.z_src"] = Parameter(
                rng.uniform(-0.1, 0.1, size=(w_out, 1)), f"gat{layer}.z_src"
            )
            self.params[f"gat{layer}.z_dst"] = Parameter(
                rng.uniform(-0.1, 0.1, size=(w_out, 1)), f"gat{layer}.z_dst"
            )

        weight("head_feat.w", c.d_node, c.n_feature_processors)
        bias("head_feat.b", c.n_feature_processors)
        weight("head_est.w", c.d_node, c.n_estimators)
        bias("head_est.b", c.n_estimators)

    def gat_dims(self) -> list[tuple[int, int]]:
        c = self.config
        dims = []
        for layer in range(c.gat_layers):
            w_in = c.d_node if layer == 0 else c.gat_hidden
            w_out = c.d_node if layer == c.gat_layers - 1 else c.gat_hidden
            dims.append((w_in, w_out))
        return dims

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    # ---- forward pieces (Node in, Node out) ----

    def fuse_datasets(self, meta: Node, desc: Node) -> Node:
        """Fused dataset representation: 2-layer perceptron on [meta, desc] rows."""
        c = self.config
        if meta.shape[1] != c.d_meta or desc.shape[1] != c.d_desc:
            raise ModelError(
                f"fuse_datasets widths ({meta.shape[1]}, {desc.shape[1]}) != "
                f"config ({c.d_meta}, {c.d_desc})"
            )
        return _fused_mlp(
            meta,
            desc,
            self.params["fphi.w1"].node(),
            self.params["fphi.b1"].node(),
            self.params["fphi.w2"].node(),
            self.params["fphi.b2"].node(),
            c.leaky_slope,
        )

    def fuse_dataset_values(self, meta: np.ndarray, desc: np.ndarray) -> np.ndarray:
        """fuse_datasets on plain arrays, without building an autodiff graph.

        Same arithmetic as the Node version; used where only values are needed
        (k-NN graph rebuilds, checkpointing, inference).
        """
        c = self.config
        x = np.concatenate([meta, desc], axis=1)
        pre = x @ self.params["fphi.w1"].value + self.params["fphi.b1"].value
        h = np.where(pre >= 0.0, pre, c.leaky_slope * pre)
        return h @ self.params["fphi.w2"].value + self.params["fphi.b2"].value

    def fuse_nodes(self, fused: Node, pipe: Node) -> Node:
        """Node features: 2-layer perceptron on [fused rep, pipeline embedding] rows."""
        c = self.config
        if fused.shape[1] != c.d_fused or pipe.shape[1] != c.d_pipe:
            raise ModelError(
                f"fuse_nodes widths ({fused.shape[1]}, {pipe.shape[1]}) != "
                f"config ({c.d_fused}, {c.d_pipe})"
            )
        return _fused_mlp(
            fused,
            pipe,
            self.params["gtheta.w1"].node(),
            self.params["gtheta.b1"].node(),
            self.params["gtheta.w2"].node(),
            self.params["gtheta.b2"].node(),
            c.leaky_slope,
        )

    def gat_forward(
        self,
        u: Node,
        adjacency: list[list[int]],
        collect_attention: list | None = None,
        mask: np.ndarray | None = None,
    ) -> Node:
        """Stacked attention layers; leaky ReLU between layers, none after the last.

        Per layer, each node's output is the attention-weighted sum of the
        transformed features of itself and its neighbors. If
        ``collect_attention`` is a list, the per-layer attention matrices
        (numpy, rows summing to 1 over self + neighbors) are appended to it.
        ``mask`` lets callers reuse a precomputed ``adjacency_mask(adjacency)``
        across many forwards over the same graph.
        """
        n = u.shape[0]
        if len(adjacency) != n:
            raise ModelError(f"adjacency size {len(adjacency)} != node count {n}")
        if mask is None:
            mask = adjacency_mask(adjacency)
        slope = self.config.leaky_slope

        h = u
        n_layers = self.config.gat_layers
        for layer in range(n_layers):
            h, att = _gat_layer(
                h,
                self.params[f"gat{layer}.w"].node(),
                self.params[f"gat{layer}.z_src"].node(),
                self.params[f"gat{layer}.z_dst"].node(),
                mask,
                slope,
                final=layer == n_layers - 1,
            )
            if collect_attention is not None:
                collect_attention.append(att.copy())
        return h

    def predict_heads(self, h: Node) -> tuple[Node, Node]:
        """(p_feat, p_est) row distributions for each input row."""
        p_feat = ad.softmax_rows(
            ad.affine(h, self.params["head_feat.w"], self.params["head_feat.b"])
        )
        p_est = ad.softmax_rows(
            ad.affine(h, self.params["head_est.w"], self.params["head_est.b"])
        )
        return p_feat, p_est

    def head_distribution(self, h: Node) -> PipelineDistribution:
        p_feat, p_est = self.predict_heads(h)
        return PipelineDistribution(
            p_feat=p_feat.value[0].copy(), p_est=p_est.value[0].copy()
        )


def attention_coefficients(
    w: np.ndarray,
    z: np.ndarray,
    u_i: np.ndarray,
    neighbors: list[np.ndarray],
    slope: float = 0.2,
) -> np.ndarray:
    """Normalized attention over {self} + neighbors for one node of one layer.

    ``z`` is the full attention vector of length 2 * out_width. Returned in
    order (self, neighbors...).
    """
    w = np.asarray(w, dtype=np.float64)
    out_w = w.shape[1]
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.size != 2 * out_w:
        raise ModelError(f"attention vector length {z.size} != 2 * {out_w}")
    z_src, z_dst = z[:out_w], z[out_w:]
    wu_i = np.asarray(u_i, dtype=np.float64).reshape(-1) @ w
    logits = []
    for u_j in [u_i] + list(neighbors):
        wu_j = np.asarray(u_j, dtype=np.float64).reshape(-1) @ w
        pre = float(z_src @ wu_i + z_dst @ wu_j)
        logits.append(pre if pre >= 0 else slope * pre)
    arr = np.asarray(logits)
    e = np.exp(arr - arr.max())
    return e / e.sum()


def select_pipeline(d: PipelineDistribution) -> PipelineLabel:
    """Top-1 label per head; ties go to the lowest index."""
    return PipelineLabel(
        feature_processor=int(np.argmax(d.p_feat)), estimator=int(np.argmax(d.p_est))
    )


def sample_pipelines(
    d: PipelineDistribution, n: int, seed: int = 0
) -> list[PipelineLabel]:
    """n seeded draws with the two heads sampled independently."""
    if n < 1:
        raise ModelError(f"need n >= 1 samples, got {n}")
    rng = np.random.default_rng(seed)
    fps = rng.choice(d.p_feat.size, size=n, p=d.p_feat / d.p_feat.sum())
    ests = rng.choice(d.p_est.size, size=n, p=d.p_est / d.p_est.sum())
    return [PipelineLabel(int(f), int(e)) for f, e in zip(fps, ests)]
