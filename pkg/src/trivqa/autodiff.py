"""Reverse-mode automatic differentiation over dense float64 arrays.

Define-by-run: ops execute eagerly on numpy arrays and, when a Tape is
active and an operand is tracked, append a node with a backward closure.
The tape is rebuilt every training step; node ids are only meaningful
while the tape that issued them is open.

Supported structure is deliberately narrow: 1-D/2-D arrays, no
broadcasting except the (m,n)+(n,) row-bias case. Dimension mismatches
raise ShapeError with both shapes in the message.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ShapeError


class Tensor:
    """A float64 array plus an optional handle into the active tape.

    node_id == -1 means constant: no gradient is tracked for it.
    Data is always C-contiguous float64; treat it as immutable once
    wrapped (the optimizer swaps whole arrays rather than writing in
    place).
    """

    __slots__ = ("data", "node_id")

    def __init__(self, data, node_id: int = -1):
        arr = np.asarray(data, dtype=np.float64)
        # ascontiguousarray would promote 0-d to 1-D; keep scalars 0-d
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.node_id = node_id

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tracked = f" node={self.node_id}" if self.node_id >= 0 else ""
        return f"Tensor(shape={self.data.shape}{tracked})"


_ACTIVE_TAPES: list["Tape"] = []


class Tape:
    """Records ops for one backward pass.

    Use as a context manager. ``watch`` registers leaves (parameters);
    ops record automatically when any operand is tracked. ``backward``
    must run while the tape is still open: on exit every tensor issued
    by this tape has its node_id reset to -1.
    """

    def __init__(self):
        self._parents: list[tuple[int, ...]] = []
        self._backwards: list = []
        self._issued: list[Tensor] = []
        self._open = False
        self.gradients: GradMap | None = None

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        self._open = True
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPES.pop()
        self._open = False
        for t in self._issued:
            t.node_id = -1
        return False

    def __len__(self):
        return len(self._parents)

    def watch(self, t: Tensor) -> Tensor:
        """Register a leaf tensor so gradients accumulate at it."""
        if not self._open:
            raise RuntimeError("watch() outside the tape's with-block")
        if 0 <= t.node_id < len(self._parents):
            return t
        t.node_id = self._record_node((), None)
        self._issued.append(t)
        return t

    def _record_node(self, parents: tuple[int, ...], backward) -> int:
        self._parents.append(parents)
        self._backwards.append(backward)
        return len(self._parents) - 1

    def _record(self, out_data, parents: tuple[int, ...], backward) -> Tensor:
        nid = self._record_node(parents, backward)
        out = Tensor(out_data, nid)
        self._issued.append(out)
        return out


class GradMap:
    """Gradient lookup by tensor identity. Missing entries read as zeros.

    Keyed on the tensor objects themselves rather than node ids, so the
    map stays valid after the tape that produced it has closed.
    """

    def __init__(self, pairs):
        # hold the tensors so their id() keys cannot be recycled
        self._pairs = {id(t): (t, g) for t, g in pairs}

    def __getitem__(self, t: Tensor) -> np.ndarray:
        hit = self._pairs.get(id(t))
        if hit is None:
            return np.zeros(t.data.shape)
        return hit[1]

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._pairs


def _active_tape() -> Tape | None:
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(out_data, operands: tuple[Tensor, ...], backward) -> Tensor:
    tape = _active_tape()
    if tape is None or all(t.node_id < 0 for t in operands):
        return Tensor(out_data)
    return tape._record(out_data, tuple(t.node_id for t in operands), backward)


def backward(loss: Tensor, tape: Tape) -> GradMap:
    """Run reverse accumulation from a scalar loss.

    Returns gradients for every node reachable from the loss; watched
    leaves not reached read as zeros through the GradMap. A loss that
    was never recorded on the tape yields an all-zero map.
    """
    if loss.data.shape != ():
        raise ShapeError(
            f"backward needs a scalar loss, got shape {loss.data.shape}"
        )
    n = len(tape._parents)
    grads: list[np.ndarray | None] = [None] * n
    if 0 <= loss.node_id < n:
        grads[loss.node_id] = np.ones(())
        for i in range(loss.node_id, -1, -1):
            gi = grads[i]
            if gi is None:
                continue
            bw = tape._backwards[i]
            if bw is None:
                continue
            for pid, pg in zip(tape._parents[i], bw(gi)):
                if pid < 0 or pg is None:
                    continue
                if grads[pid] is None:
                    grads[pid] = pg
                else:
                    grads[pid] = grads[pid] + pg
    out = GradMap(
        (t, grads[t.node_id])
        for t in tape._issued
        if 0 <= t.node_id < n and grads[t.node_id] is not None
    )
    tape.gradients = out
    return out


# ---------------------------------------------------------------------------
# ops


def _check_same_shape(op: str, a: Tensor, b: Tensor):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op} shapes {a.data.shape} and {b.data.shape} differ")


def matmul(a, b) -> Tensor:
    # 2-D strict; stays on numpy BLAS in both kernel lanes.
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul shapes {a.data.shape} and {b.data.shape} are incompatible"
        )
    ad, bd = a.data, b.data
    out = ad @ bd

    def bwd(g):
        return (
            np.ascontiguousarray(g @ bd.T),
            np.ascontiguousarray(ad.T @ g),
        )

    return _emit(out, (a, b), bwd)


def add(a, b) -> Tensor:
    """Elementwise sum; also accepts (m,n) + (n,) row-bias."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape == b.data.shape:
        out = a.data + b.data

        def bwd(g):
            return (g, g)

        return _emit(out, (a, b), bwd)
    if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        out = kernels.add_rowvec(a.data, b.data)

        def bwd(g):
            return (g, kernels.sum_rows(g))

        return _emit(out, (a, b), bwd)
    raise ShapeError(f"add shapes {a.data.shape} and {b.data.shape} do not align")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape("sub", a, b)
    out = a.data - b.data

    def bwd(g):
        return (g, -g)

    return _emit(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape("mul", a, b)
    ad, bd = a.data, b.data
    out = ad * bd

    def bwd(g):
        return (g * bd, g * ad)

    return _emit(out, (a, b), bwd)


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)
    out = a.data * c

    def bwd(g):
        return (g * c,)

    return _emit(out, (a,), bwd)


def relu(a) -> Tensor:
    # subgradient at exactly 0 is 0
    a = _as_tensor(a)
    ad = a.data
    out = kernels.relu_fwd(ad)

    def bwd(g):
        return (kernels.relu_bwd(ad, g),)

    return _emit(out, (a,), bwd)


def softmax_rows(a) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows needs a 2-D input, got shape {a.data.shape}")
    p = kernels.softmax_rows_fwd(a.data)

    def bwd(g):
        return (kernels.softmax_rows_bwd(p, g),)

    return _emit(p, (a,), bwd)


def elementwise(kind: str, *operands) -> Tensor:
    """Dispatch by name; thin convenience over the named ops."""
    table = {
        "add": add,
        "sub": sub,
        "mul": mul,
        "relu": relu,
        "softmax_rows": softmax_rows,
    }
    if kind not in table:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    return table[kind](*operands)


def concat_cols(tensors) -> Tensor:
    """Concatenate 2-D tensors along columns."""
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat_cols needs at least one tensor")
    m = ts[0].data.shape[0]
    for t in ts:
        if t.data.ndim != 2 or t.data.shape[0] != m:
            raise ShapeError(
                "concat_cols row counts differ: "
                + ", ".join(str(t.data.shape) for t in ts)
            )
    out = np.concatenate([t.data for t in ts], axis=1)
    widths = [t.data.shape[1] for t in ts]

    def bwd(g):
        pieces = []
        start = 0
        for w in widths:
            pieces.append(np.ascontiguousarray(g[:, start : start + w]))
            start += w
        return tuple(pieces)

    return _emit(out, tuple(ts), bwd)


def take_rows(a, idx) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"take_rows needs a 2-D input, got shape {a.data.shape}")
    idx = np.asarray(idx, dtype=np.int64)
    m = a.data.shape[0]
    if idx.ndim != 1 or (idx.size and (idx.min() < 0 or idx.max() >= m)):
        raise ShapeError(f"take_rows indices out of range for {m} rows")
    ad = a.data
    out = np.ascontiguousarray(ad[idx])

    def bwd(g):
        full = np.zeros_like(ad)
        np.add.at(full, idx, g)
        return (full,)

    return _emit(out, (a,), bwd)


def sum_all(a) -> Tensor:
    a = _as_tensor(a)
    shape = a.data.shape
    out = np.asarray(a.data.sum())

    def bwd(g):
        return (np.full(shape, float(g)),)

    return _emit(out, (a,), bwd)


def mse(a, b, reduction: str = "mean") -> Tensor:
    """Squared-difference loss. mean divides by element count; sum does not."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape("mse", a, b)
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown mse reduction {reduction!r}")
    inv = 1.0 / a.data.size if reduction == "mean" else 1.0
    ad, bd = a.data, b.data
    out = np.asarray(kernels.sq_diff_sum(ad, bd) * inv)

    def bwd(g):
        s = float(g) * inv
        ga = kernels.sq_diff_bwd(ad, bd, s)
        gb = kernels.sq_diff_bwd(bd, ad, s) if b.node_id >= 0 else None
        return (ga, gb)

    return _emit(out, (a, b), bwd)


def cross_entropy(logits, labels) -> Tensor:
    """Mean cross entropy of row logits against integer labels."""
    logits = _as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError(
            f"cross_entropy needs 2-D logits, got shape {logits.data.shape}"
        )
    lab = np.ascontiguousarray(labels, dtype=np.int64)
    m, c = logits.data.shape
    if lab.shape != (m,):
        raise ShapeError(
            f"cross_entropy labels shape {lab.shape} does not match {m} rows"
        )
    if m and (lab.min() < 0 or lab.max() >= c):
        raise ShapeError(
            f"cross_entropy labels must lie in [0, {c}), got range "
            f"[{lab.min()}, {lab.max()}]"
        )
    total, probs = kernels.ce_fwd(logits.data, lab)
    out = np.asarray(total / m)

    def bwd(g):
        return (kernels.ce_bwd(probs, lab, float(g) / m),)

    return _emit(out, (logits,), bwd)


def soft_cross_entropy(logits, target) -> Tensor:
    """Mean cross entropy against fixed probability rows.

    target is a plain array, never a tracked tensor: it acts as a
    gradient-stopped soft label by construction.
    """
    logits = _as_tensor(logits)
    tgt = np.ascontiguousarray(
        target.data if isinstance(target, Tensor) else target, dtype=np.float64
    )
    if logits.data.ndim != 2 or tgt.shape != logits.data.shape:
        raise ShapeError(
            f"soft_cross_entropy shapes {logits.data.shape} and {tgt.shape} differ"
        )
    m = logits.data.shape[0]
    total, probs = kernels.soft_ce_fwd(logits.data, tgt)
    out = np.asarray(total / m)

    def bwd(g):
        return (kernels.soft_ce_bwd(probs, tgt, float(g) / m),)

    return _emit(out, (logits,), bwd)


def stop_gradient(a) -> Tensor:
    """Same values, no tape history."""
    a = _as_tensor(a)
    return Tensor(a.data)
