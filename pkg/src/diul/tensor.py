"""Dense float64 tensors with reverse-mode differentiation.

Deliberately small engine: numpy arrays as storage, a define-by-run tape
rebuilt on every training step, and only the operations the encoder, the
domain classifier, and the contrastive losses need. All arithmetic is
64-bit. Broadcasting is restricted to scalar-with-tensor and row-vector
bias; anything else must shape-match exactly and raises ShapeError.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DegenerateVectorError, ShapeError

NORM_EPS = 1e-12


def _as_array(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float64)


class Tensor:
    """A node on the differentiation tape.

    ``data`` holds the value, ``grad`` the accumulated gradient (same shape,
    allocated lazily by :func:`backward`), ``parents`` the input nodes and
    ``_vjp`` the local backward rule. Leaves constructed with
    ``requires_grad=True`` are the trainable parameters; any node reachable
    from one of them stays on the tape, everything else is pruned at
    construction time. Values are treated as immutable once wrapped.
    """

    __slots__ = ("data", "grad", "requires_grad", "parents", "_vjp", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = ()
        self._vjp = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # arithmetic sugar; the actual rules live in the module functions
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def relu(self):
        return relu(self)

    def log(self):
        return tlog(self)

    def exp(self):
        return texp(self)

    def reshape(self, shape):
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _node(data, parents, vjp) -> Tensor:
    """Build an output node, dropping the tape when no parent needs grad."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out._vjp = vjp
    return out


def _topo_order(root: Tensor):
    """Nodes of the tape with every parent before its consumers."""
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse-mode accumulation from a scalar loss.

    Resets and repopulates ``grad`` on every node of the tape, then returns a
    mapping from each requires-grad leaf to its gradient array. Repeated uses
    of the same node sum their contributions.
    """
    if loss.data.ndim != 0:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    order = _topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones(())
    for node in reversed(order):
        if node._vjp is None or node.grad is None:
            continue
        contributions = node._vjp(node.grad)
        for parent, contrib in zip(node.parents, contributions):
            if not parent.requires_grad or contrib is None:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad = parent.grad + contrib
    return {n: n.grad for n in order if n.requires_grad and not n.parents and n.grad is not None}


# ---------------------------------------------------------------------------
# broadcasting rules (same shape | scalar | row-vector bias)

def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    if shape == ():
        return np.asarray(g.sum())
    # row-vector bias: (m, n) gradient reduced onto (n,)
    return g.sum(axis=0)


def _check_add_shapes(a, b):
    sa, sb = a.data.shape, b.data.shape
    if sa == sb or sa == () or sb == ():
        return
    if len(sa) == 2 and sb == (sa[1],):
        return
    if len(sb) == 2 and sa == (sb[1],):
        return
    raise ShapeError(f"cannot add shapes {sa} and {sb}")


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_add_shapes(a, b)

    def vjp(g):
        return _reduce_to(g, a.data.shape), _reduce_to(g, b.data.shape)

    return _node(a.data + b.data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_add_shapes(a, b)

    def vjp(g):
        return _reduce_to(g, a.data.shape), -_reduce_to(g, b.data.shape)

    return _node(a.data - b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    """Elementwise product; same shape or scalar-with-tensor only."""
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.data.shape, b.data.shape
    if not (sa == sb or sa == () or sb == ()):
        raise ShapeError(f"cannot multiply shapes {sa} and {sb} elementwise")

    def vjp(g):
        return _reduce_to(g * b.data, sa), _reduce_to(g * a.data, sb)

    return _node(a.data * b.data, (a, b), vjp)


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)

    def vjp(g):
        return (g * c,)

    return _node(a.data * c, (a,), vjp)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}")

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _node(a.data @ b.data, (a, b), vjp)


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a 2-D operand, got {a.data.shape}")

    def vjp(g):
        return (g.T,)

    return _node(a.data.T.copy(), (a,), vjp)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0

    def vjp(g):
        return (g * mask,)

    return _node(np.where(mask, a.data, 0.0), (a,), vjp)


def tlog(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0):
        raise ContractError("log needs strictly positive input")

    def vjp(g):
        return (g / a.data,)

    return _node(np.log(a.data), (a,), vjp)


def texp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _node(out, (a,), vjp)


def tsum(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    if axis is not None and a.data.ndim != 2:
        raise ShapeError("axis reduction needs a 2-D operand")

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        if axis == 0:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        return (np.broadcast_to(g[:, None], a.data.shape).copy(),)

    return _node(a.data.sum(axis=axis), (a,), vjp)


def tmean(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    if axis is not None and a.data.ndim != 2:
        raise ShapeError("axis reduction needs a 2-D operand")
    n = a.data.size if axis is None else a.data.shape[axis]
    if n == 0:
        raise ShapeError("mean of an empty tensor")

    def vjp(g):
        if axis is None:
            return (np.full(a.data.shape, 1.0 / n) * g,)
        if axis == 0:
            return (np.broadcast_to(g / n, a.data.shape).copy(),)
        return (np.broadcast_to(g[:, None] / n, a.data.shape).copy(),)

    return _node(a.data.mean(axis=axis), (a,), vjp)


def log_sum_exp(a) -> Tensor:
    """log(sum(exp(x))) over the last axis, max-shifted for any magnitude.

    1-D input gives a scalar; 2-D input reduces each row. Entries of -inf are
    allowed (they contribute nothing), which is how zero mixture weights enter
    the losses.
    """
    a = _as_tensor(a)
    if a.data.ndim not in (1, 2):
        raise ShapeError(f"log_sum_exp needs a 1-D or 2-D operand, got {a.data.shape}")
    if a.data.shape[-1] == 0:
        raise ShapeError("log_sum_exp of an empty axis")
    m = np.max(a.data, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    shifted = np.exp(a.data - m)
    total = shifted.sum(axis=-1)
    out = m.squeeze(-1) + np.log(total)
    soft = shifted / total[..., None]

    def vjp(g):
        return (np.asarray(g)[..., None] * soft,)

    return _node(out, (a,), vjp)


def softmax(a) -> Tensor:
    """Softmax over the last axis, shift-invariant and overflow-safe."""
    a = _as_tensor(a)
    if a.data.ndim not in (1, 2):
        raise ShapeError(f"softmax needs a 1-D or 2-D operand, got {a.data.shape}")
    if a.data.shape[-1] == 0:
        raise ShapeError("softmax of an empty axis")
    shifted = np.exp(a.data - np.max(a.data, axis=-1, keepdims=True))
    out = shifted / shifted.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return ((g - inner) * out,)

    return _node(out, (a,), vjp)


def l2_normalize(a) -> Tensor:
    """Project onto the unit sphere; rows independently for a 2-D operand."""
    a = _as_tensor(a)
    if a.data.ndim not in (1, 2):
        raise ShapeError(f"l2_normalize needs a 1-D or 2-D operand, got {a.data.shape}")
    norms = np.sqrt((a.data ** 2).sum(axis=-1, keepdims=True))
    if np.any(norms <= NORM_EPS):
        raise DegenerateVectorError("cannot normalize a (near-)zero vector")
    out = a.data / norms

    def vjp(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return ((g - inner * out) / norms,)

    return _node(out, (a,), vjp)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.data.size:
        raise ShapeError(f"cannot reshape {a.data.shape} to {shape}")

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return _node(a.data.reshape(shape), (a,), vjp)


def concat(parts, axis=0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat needs at least one operand")
    if axis not in (0, 1):
        raise ShapeError("concat supports axis 0 or 1")
    ndims = {p.data.ndim for p in parts}
    if len(ndims) != 1 or axis >= ndims.pop():
        raise ShapeError("concat operands must share rank compatible with axis")
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), vjp)


def cross_entropy(logits, targets) -> Tensor:
    """Mean softmax cross-entropy of ``logits`` (B x C) against integer targets."""
    logits = _as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy needs 2-D logits, got {logits.data.shape}")
    targets = np.asarray(targets)
    if targets.ndim != 1 or targets.shape[0] != logits.data.shape[0]:
        raise ShapeError("targets must be a vector matching the logits batch")
    n, c = logits.data.shape
    if np.any(targets < 0) or np.any(targets >= c):
        raise ContractError("target labels out of range")
    m = logits.data.max(axis=1, keepdims=True)
    shifted = np.exp(logits.data - m)
    total = shifted.sum(axis=1)
    lse = m[:, 0] + np.log(total)
    picked = logits.data[np.arange(n), targets]
    soft = shifted / total[:, None]

    def vjp(g):
        grad = soft.copy()
        grad[np.arange(n), targets] -= 1.0
        return (grad * (np.asarray(g) / n),)

    return _node((lse - picked).mean(), (logits,), vjp)
