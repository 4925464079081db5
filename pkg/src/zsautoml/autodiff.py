"""Minimal reverse-mode autodiff over dense float64 matrices.

Just the building blocks the recommender's networks need: affine maps, leaky
ReLU, concatenation, (masked) row softmax, cross-entropy, plus an Adam update
and a finite-difference gradient checker. Values are always 2-D matrices; a
scalar is a 1x1 matrix. Graphs are rebuilt per step; parameters persist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PROB_FLOOR = 1e-12


class AutodiffError(Exception):
    pass


def _as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise AutodiffError(f"expected at most 2 dimensions, got shape {a.shape}")
    return a


def _check_finite(a: np.ndarray, op: str) -> np.ndarray:
    # The sum is finite iff every entry is (NaN and +-inf both propagate),
    # and a single reduction is much cheaper than isfinite().all().
    if not math.isfinite(float(a.sum())):
        raise AutodiffError(f"non-finite value in forward pass of {op}")
    return a


class Node:
    __slots__ = ("value", "grad", "parents", "_backward")

    def __init__(self, value, parents=(), backward=None, op="constant", check=True):
        self.value = _as_matrix(value)
        if check:
            _check_finite(self.value, op)
        self.grad: np.ndarray | None = None
        self.parents: tuple[Node, ...] = tuple(parents)
        self._backward = backward

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def accumulate(self, g: np.ndarray, fresh: bool = False) -> None:
        """Add g to this node's gradient.

        ``fresh=True`` promises g is a newly allocated array owned by the
        caller (not a view of another gradient), letting us adopt it without
        the defensive copy. Most nodes receive exactly one contribution, so
        this skips the copy on the hot path.
        """
        if self.grad is None:
            self.grad = g if fresh else g.copy()
        else:
            self.grad += g


class Parameter:
    """A persistent learnable matrix with Adam optimizer slots."""

    def __init__(self, value, name: str = ""):
        self.value = _as_matrix(value).copy()
        self.name = name
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        self.step = 0

    def node(self) -> Node:
        param = self

        def backward(g: np.ndarray) -> None:
            param.grad += g

        # Parameters stay finite between steps (any blow-up surfaces at the
        # first op that consumes them), so skip the redundant scan here.
        return Node(self.value, parents=(), backward=backward,
                    op=f"leaf:{self.name}", check=False)


def constant(x) -> Node:
    return Node(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    for axis in (0, 1):
        if shape[axis] == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Node, b: Node) -> Node:
    out_val = a.value + b.value  # numpy broadcasting; grads are unbroadcast back

    def backward(g: np.ndarray, a=a, b=b) -> None:
        ga = _unbroadcast(g, a.shape)
        a.accumulate(ga, fresh=ga is not g)
        gb = _unbroadcast(g, b.shape)
        b.accumulate(gb, fresh=gb is not g)

    return Node(out_val, (a, b), backward, op="add")


def matmul(a: Node, b: Node) -> Node:
    if a.shape[1] != b.shape[0]:
        raise AutodiffError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out_val = a.value @ b.value

    def backward(g: np.ndarray, a=a, b=b) -> None:
        a.accumulate(g @ b.value.T, fresh=True)
        b.accumulate(a.value.T @ g, fresh=True)

    return Node(out_val, (a, b), backward, op="matmul")


def transpose(a: Node) -> Node:
    def backward(g: np.ndarray, a=a) -> None:
        a.accumulate(g.T)

    return Node(a.value.T, (a,), backward, op="transpose")


def concat(a: Node, b: Node) -> Node:
    """Concatenate along the feature (column) axis."""
    if a.shape[0] != b.shape[0]:
        raise AutodiffError(f"concat row mismatch: {a.shape} vs {b.shape}")
    out_val = np.concatenate([a.value, b.value], axis=1)
    split = a.shape[1]

    def backward(g: np.ndarray, a=a, b=b) -> None:
        a.accumulate(g[:, :split])
        b.accumulate(g[:, split:])

    return Node(out_val, (a, b), backward, op="concat")


def leaky_relu(a: Node, slope: float) -> Node:
    if not 0.0 < slope < 1.0:
        raise AutodiffError(f"leaky ReLU slope must be in (0, 1), got {slope}")
    out_val = np.where(a.value >= 0.0, a.value, slope * a.value)

    def backward(g: np.ndarray, a=a) -> None:
        a.accumulate(np.where(a.value >= 0.0, 1.0, slope) * g, fresh=True)

    return Node(out_val, (a,), backward, op="leaky_relu")


def _softmax_backward(y: np.ndarray, g: np.ndarray) -> np.ndarray:
    return y * (g - np.sum(g * y, axis=1, keepdims=True))


def softmax_rows(a: Node) -> Node:
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray, a=a, y=y) -> None:
        a.accumulate(_softmax_backward(y, g), fresh=True)

    return Node(y, (a,), backward, op="softmax_rows")


def masked_softmax_rows(a: Node, mask: np.ndarray) -> Node:
    """Row softmax restricted to entries where mask != 0 (others get probability 0).

    Every row must have at least one unmasked entry.
    """
    m = np.asarray(mask, dtype=bool)
    if m.shape != a.shape:
        raise AutodiffError(f"mask shape {m.shape} != input shape {a.shape}")
    neg = np.where(m, a.value, -np.inf)
    rowmax = neg.max(axis=1, keepdims=True)
    # a.value is finite, so a row max of -inf means the row is fully masked.
    if not np.isfinite(rowmax).all():
        raise AutodiffError("masked_softmax_rows: a row has no unmasked entries")
    # Exponentiate the finite shifted logits, then zero the masked entries;
    # vectorized exp is far slower when fed the -inf entries directly.
    e = np.where(m, np.exp(a.value - rowmax), 0.0)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray, a=a, y=y) -> None:
        a.accumulate(_softmax_backward(y, g), fresh=True)

    return Node(y, (a,), backward, op="masked_softmax_rows")


def pick_row(a: Node, i: int) -> Node:
    if not 0 <= i < a.shape[0]:
        raise AutodiffError(f"row {i} out of range for shape {a.shape}")

    def backward(g: np.ndarray, a=a, i=i) -> None:
        full = np.zeros(a.shape)
        full[i, :] = g[0, :]
        a.accumulate(full, fresh=True)

    return Node(a.value[i : i + 1, :], (a,), backward, op="pick_row")


def cross_entropy(p: Node, target_index: int) -> Node:
    """-log p[target] on a single probability row, with a floor inside the log."""
    if p.shape[0] != 1:
        raise AutodiffError(f"cross_entropy expects a 1-row distribution, got {p.shape}")
    if not 0 <= target_index < p.shape[1]:
        raise AutodiffError(f"target index {target_index} out of range for {p.shape}")
    pt = float(p.value[0, target_index])
    val = -np.log(max(pt, PROB_FLOOR))

    def backward(g: np.ndarray, p=p, pt=pt) -> None:
        dp = np.zeros(p.shape)
        if pt > PROB_FLOOR:
            dp[0, target_index] = -float(g[0, 0]) / pt
        p.accumulate(dp, fresh=True)

    return Node(val, (p,), backward, op="cross_entropy")


def affine(x: Node, w: Node | Parameter, b: Node | Parameter) -> Node:
    """x @ w + b with row-broadcast bias; x is (n x in), w (in x out), b (1 x out)."""
    wn = w.node() if isinstance(w, Parameter) else w
    bn = b.node() if isinstance(b, Parameter) else b
    return add(matmul(x, wn), bn)


def _topo_order(loss: Node) -> list[Node]:
    order: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Node) -> None:
    """Backpropagate from a scalar loss; Parameter gradients accumulate."""
    if loss.shape != (1, 1):
        raise AutodiffError(f"backward requires a scalar loss, got shape {loss.shape}")
    order = _topo_order(loss)
    for n in order:
        n.grad = None
    loss.grad = np.ones((1, 1))
    for n in reversed(order):
        if n._backward is not None and n.grad is not None:
            n._backward(n.grad)


def zero_grad(params: list[Parameter]) -> None:
    for p in params:
        p.grad[:] = 0.0


def adam_step(
    params: list[Parameter],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Adaptive-moment update with bias correction (moments updated in place)."""
    for p in params:
        p.step += 1
        p.m *= beta1
        p.m += (1.0 - beta1) * p.grad
        p.v *= beta2
        p.v += (1.0 - beta2) * np.square(p.grad)
        m_hat = p.m / (1.0 - beta1**p.step)
        v_hat = p.v / (1.0 - beta2**p.step)
        np.sqrt(v_hat, out=v_hat)
        v_hat += eps
        m_hat /= v_hat
        m_hat *= lr
        p.value -= m_hat


@dataclass
class GradCheckReport:
    per_param: dict[str, float] = field(default_factory=dict)
    tol: float = 1e-4
    failures: list[str] = field(default_factory=list)

    @property
    def max_rel_err(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def passed(self) -> bool:
        return not self.failures


def grad_check(
    build_loss, params: list[Parameter], h: float = 1e-4, tol: float = 1e-4
) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    ``build_loss`` must deterministically reconstruct the loss from the
    current parameter values.
    """
    zero_grad(params)
    backward(build_loss())
    analytic = {id(p): p.grad.copy() for p in params}

    report = GradCheckReport(tol=tol)
    for k, p in enumerate(params):
        name = p.name or f"param{k}"
        worst = 0.0
        flat = p.value.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(build_loss().value[0, 0])
            flat[i] = orig - h
            down = float(build_loss().value[0, 0])
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            a = float(analytic[id(p)].ravel()[i])
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, rel)
        report.per_param[name] = worst
        if worst > tol:
            report.failures.append(f"{name}: rel err {worst:.3e} > {tol:.0e}")
    zero_grad(params)
    return report
