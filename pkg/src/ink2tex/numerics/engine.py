"""Reverse-mode autodiff over float64 numpy arrays.

Every differentiable operation the gate equations need lives here: matmul,
elementwise arithmetic, sigmoid/tanh/softmax, same-padded 1-d convolution,
embedding lookup, max/mean/subsample pooling over rows, and a fused GRU
sequence op with hand-written backpropagation through time (the analytic
gradients are validated against central finite differences in the tests).

Graphs are recorded per call while grad mode is on; ``no_grad()`` disables
recording for inference. ``backward(loss)`` accumulates gradients into the
``grad`` buffers of reachable leaves, torch-style, so per-sequence losses
of a batch can be summed by repeated calls.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import DimensionError, GraphError

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording within the context (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A float64 array plus optional autodiff bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _vjp=vjp)
    return Tensor(data)


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


def backward(loss: Tensor, params: "dict[str, Tensor] | None" = None):
    """Backpropagate from a scalar loss, accumulating into leaf ``grad``.

    When ``params`` (a name -> Tensor mapping) is given, returns the
    matching name -> gradient array mapping, with zeros for parameters the
    loss does not reach.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise GraphError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if loss.requires_grad:
        order = _topo_order(loss)
        acc: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in order:
            g = acc.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in acc:
                    acc[key] = acc[key] + pg
                else:
                    acc[key] = pg
    if params is not None:
        return {
            name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
            for name, p in params.items()
        }
    return None


def _topo_order(root: Tensor) -> list[Tensor]:
    # Iterative DFS; returns nodes in reverse topological order.
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    order.reverse()
    return order


# ---------------------------------------------------------------------------
# elementwise and reduction ops


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    return _result(a.data * b.data, (a, b),
                   lambda g: (g * b.data, g * a.data))


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def one_minus(a: Tensor) -> Tensor:
    return _result(1.0 - a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    return _result(a.data * c, (a,), lambda g: (g * c,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),))


def log(a: Tensor) -> Tensor:
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def softmax(a: Tensor) -> Tensor:
    """Softmax over a 1-d vector; output sums to 1 within 1e-12."""
    if a.data.ndim != 1:
        raise DimensionError(f"softmax expects a vector, got shape {a.data.shape}")
    shifted = a.data - a.data.max()
    e = np.exp(shifted)
    out = e / e.sum()

    def vjp(g):
        return (out * (g - np.dot(g, out)),)

    return _result(out, (a,), vjp)


def pick(a: Tensor, idx: int) -> Tensor:
    """Select one element of a vector as a scalar."""
    if a.data.ndim != 1:
        raise DimensionError(f"pick expects a vector, got shape {a.data.shape}")
    if not 0 <= idx < a.data.shape[0]:
        raise DimensionError(f"pick index {idx} out of range for shape {a.data.shape}")

    def vjp(g):
        out = np.zeros_like(a.data)
        out[idx] = g
        return (out,)

    return _result(a.data[idx], (a,), vjp)


def sum_all(a: Tensor) -> Tensor:
    return _result(a.data.sum(), (a,), lambda g: (np.full_like(a.data, g),))


def mean_rows(a: Tensor) -> Tensor:
    """Mean over the rows of a matrix, yielding a vector."""
    if a.data.ndim != 2:
        raise DimensionError(f"mean_rows expects a matrix, got shape {a.data.shape}")
    n = a.data.shape[0]
    return _result(a.data.mean(axis=0), (a,),
                   lambda g: (np.tile(g / n, (n, 1)),))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    return _result(a.data.reshape(shape), (a,),
                   lambda g: (g.reshape(a.data.shape),))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.data.shape}")
    return _result(a.data.T.copy(), (a,), lambda g: (g.T,))


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two matrices with equal row counts along columns."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[0] != b.data.shape[0]:
        raise DimensionError(
            f"concat_cols: shapes {a.data.shape} and {b.data.shape} do not conform"
        )
    ca = a.data.shape[1]
    return _result(np.hstack((a.data, b.data)), (a, b),
                   lambda g: (g[:, :ca], g[:, ca:]))


def add_col(m: Tensor, v: Tensor) -> Tensor:
    """Add a column vector to every column of a matrix."""
    if m.data.ndim != 2 or v.data.ndim != 1 or m.data.shape[0] != v.data.shape[0]:
        raise DimensionError(
            f"add_col: shapes {m.data.shape} and {v.data.shape} do not conform"
        )
    return _result(m.data + v.data[:, None], (m, v),
                   lambda g: (g, g.sum(axis=1)))


# ---------------------------------------------------------------------------
# matmul


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product with numpy ``@`` semantics for 1-d/2-d operands."""
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise DimensionError(f"matmul: shapes {ad.shape} and {bd.shape} do not conform")
        return _result(ad @ bd, (a, b),
                       lambda g: (g @ bd.T, ad.T @ g))
    if ad.ndim == 2 and bd.ndim == 1:
        if ad.shape[1] != bd.shape[0]:
            raise DimensionError(f"matmul: shapes {ad.shape} and {bd.shape} do not conform")
        return _result(ad @ bd, (a, b),
                       lambda g: (np.outer(g, bd), ad.T @ g))
    if ad.ndim == 1 and bd.ndim == 2:
        if ad.shape[0] != bd.shape[0]:
            raise DimensionError(f"matmul: shapes {ad.shape} and {bd.shape} do not conform")
        return _result(ad @ bd, (a, b),
                       lambda g: (bd @ g, np.outer(ad, g)))
    if ad.ndim == 1 and bd.ndim == 1:
        if ad.shape[0] != bd.shape[0]:
            raise DimensionError(f"matmul: shapes {ad.shape} and {bd.shape} do not conform")
        return _result(np.dot(ad, bd), (a, b),
                       lambda g: (g * bd, g * ad))
    raise DimensionError(f"matmul: unsupported ranks {ad.shape} @ {bd.shape}")


# ---------------------------------------------------------------------------
# structured ops


def embed(e: Tensor, idx: int) -> Tensor:
    """Row lookup into an embedding matrix."""
    if e.data.ndim != 2:
        raise DimensionError(f"embed expects a matrix, got shape {e.data.shape}")
    if not 0 <= idx < e.data.shape[0]:
        raise DimensionError(f"embed index {idx} out of range for shape {e.data.shape}")

    def vjp(g):
        out = np.zeros_like(e.data)
        out[idx] = g
        return (out,)

    return _result(e.data[idx].copy(), (e,), vjp)


def pool_rows(a: Tensor, stride: int, mode: str = "max") -> Tensor:
    """Pool rows over non-overlapping windows of `stride` (last may be short).

    Output row j aggregates input rows [j*stride, min((j+1)*stride, T)).
    Modes: max (elementwise max), mean, subsample (first row of the window).
    """
    if a.data.ndim != 2:
        raise DimensionError(f"pool_rows expects a matrix, got shape {a.data.shape}")
    if stride < 1:
        raise DimensionError(f"pool_rows stride must be >= 1, got {stride}")
    t, c = a.data.shape
    if stride == 1:
        return _result(a.data.copy(), (a,), lambda g: (g,))
    n_out = -(-t // stride)
    starts = [j * stride for j in range(n_out)]
    ends = [min(s + stride, t) for s in starts]

    if mode == "max":
        out = np.empty((n_out, c))
        arg = np.empty((n_out, c), dtype=np.int64)
        for j, (s, e) in enumerate(zip(starts, ends)):
            block = a.data[s:e]
            local = block.argmax(axis=0)
            arg[j] = local + s
            out[j] = block[local, np.arange(c)]

        def vjp(g):
            gx = np.zeros_like(a.data)
            np.add.at(gx, (arg, np.tile(np.arange(c), (n_out, 1))), g)
            return (gx,)

        return _result(out, (a,), vjp)

    if mode == "mean":
        out = np.stack([a.data[s:e].mean(axis=0) for s, e in zip(starts, ends)])

        def vjp(g):
            gx = np.zeros_like(a.data)
            for j, (s, e) in enumerate(zip(starts, ends)):
                gx[s:e] = g[j] / (e - s)
            return (gx,)

        return _result(out, (a,), vjp)

    if mode == "subsample":
        out = a.data[starts].copy()

        def vjp(g):
            gx = np.zeros_like(a.data)
            gx[starts] = g
            return (gx,)

        return _result(out, (a,), vjp)

    raise DimensionError(f"unknown pooling mode {mode!r}")


def conv1d(signal: Tensor, filt: Tensor) -> Tensor:
    """Same-padded 1-d convolution: (L, c_in) * (w, c_in, c_out) -> (L, c_out).

    Cross-correlation convention (no filter flip), zero padding split
    (w-1)//2 left, the rest right, so odd widths center the filter.
    """
    if signal.data.ndim != 2 or filt.data.ndim != 3:
        raise DimensionError(
            f"conv1d: expected (L, c_in) and (w, c_in, c_out), got shapes "
            f"{signal.data.shape} and {filt.data.shape}"
        )
    L, c_in = signal.data.shape
    w, f_in, c_out = filt.data.shape
    if c_in != f_in:
        raise DimensionError(
            f"conv1d: shapes {signal.data.shape} and {filt.data.shape} disagree "
            f"on input channels"
        )
    pad_left = (w - 1) // 2
    pad_right = w - 1 - pad_left
    padded = np.zeros((L + w - 1, c_in))
    padded[pad_left:pad_left + L] = signal.data
    win = np.lib.stride_tricks.sliding_window_view(padded, w, axis=0)  # (L, c_in, w)
    out = np.einsum("lik,kio->lo", win, filt.data)

    def vjp(g):
        gfilt = np.einsum("lik,lo->kio", win, g)
        gpad = np.zeros_like(padded)
        for k in range(w):
            gpad[k:k + L] += g @ filt.data[k].T
        return (gpad[pad_left:pad_left + L], gfilt)

    return _result(out, (signal, filt), vjp)


def gru_sequence(x: Tensor, w_xz: Tensor, w_xr: Tensor, w_xh: Tensor,
                 u_hz: Tensor, u_hr: Tensor, u_rh: Tensor,
                 reverse: bool = False) -> Tensor:
    """Run a GRU over all rows of x (T, d) from a zero initial state.

    Gate equations per step:
        z = sigmoid(W_xz x + U_hz h)
        r = sigmoid(W_xr x + U_hr h)
        hc = tanh(W_xh x + U_rh (r * h))
        h' = (1 - z) * h + z * hc

    Output row t holds the state after consuming row t; with ``reverse``
    the recurrence runs right to left and output row t is the state of the
    backward pass at time t. The whole sequence is one graph node with a
    hand-written BPTT backward.
    """
    xd = x.data
    if xd.ndim != 2:
        raise DimensionError(f"gru_sequence expects (T, d) input, got {xd.shape}")
    h_size, d = w_xz.data.shape
    if xd.shape[1] != d:
        raise DimensionError(
            f"gru_sequence: input shape {xd.shape} does not match W_xz {w_xz.data.shape}"
        )
    for name, m in (("W_xr", w_xr), ("W_xh", w_xh)):
        if m.data.shape != (h_size, d):
            raise DimensionError(f"gru_sequence: {name} shape {m.data.shape} != {(h_size, d)}")
    for name, m in (("U_hz", u_hz), ("U_hr", u_hr), ("U_rh", u_rh)):
        if m.data.shape != (h_size, h_size):
            raise DimensionError(
                f"gru_sequence: {name} shape {m.data.shape} != {(h_size, h_size)}"
            )

    T = xd.shape[0]
    order = range(T - 1, -1, -1) if reverse else range(T)
    xz = xd @ w_xz.data.T
    xr = xd @ w_xr.data.T
    xh = xd @ w_xh.data.T

    zs = np.empty((T, h_size))
    rs = np.empty((T, h_size))
    hcs = np.empty((T, h_size))
    hs = np.empty((T, h_size))
    h = np.zeros(h_size)
    uhz, uhr, urh = u_hz.data, u_hr.data, u_rh.data
    for t in order:
        z = _sigmoid_vec(xz[t] + uhz @ h)
        r = _sigmoid_vec(xr[t] + uhr @ h)
        hc = np.tanh(xh[t] + urh @ (r * h))
        h = (1.0 - z) * h + z * hc
        zs[t], rs[t], hcs[t], hs[t] = z, r, hc, h

    def vjp(g):
        dxz = np.empty((T, h_size))
        dxr = np.empty((T, h_size))
        dxh = np.empty((T, h_size))
        duhz = np.zeros((h_size, h_size))
        duhr = np.zeros((h_size, h_size))
        durh = np.zeros((h_size, h_size))
        dh = np.zeros(h_size)
        steps = list(order)
        for pos in range(T - 1, -1, -1):
            t = steps[pos]
            h_prev = hs[steps[pos - 1]] if pos > 0 else np.zeros(h_size)
            z, r, hc = zs[t], rs[t], hcs[t]
            dh = dh + g[t]
            dz = dh * (hc - h_prev)
            dhc = dh * z
            dh_next = dh * (1.0 - z)
            da_h = dhc * (1.0 - hc * hc)
            dxh[t] = da_h
            durh += np.outer(da_h, r * h_prev)
            drh = urh.T @ da_h
            dr = drh * h_prev
            dh_next = dh_next + drh * r
            da_z = dz * z * (1.0 - z)
            dxz[t] = da_z
            duhz += np.outer(da_z, h_prev)
            dh_next = dh_next + uhz.T @ da_z
            da_r = dr * r * (1.0 - r)
            dxr[t] = da_r
            duhr += np.outer(da_r, h_prev)
            dh = dh_next + uhr.T @ da_r
        dx = dxz @ w_xz.data + dxr @ w_xr.data + dxh @ w_xh.data
        return (dx, dxz.T @ xd, dxr.T @ xd, dxh.T @ xd, duhz, duhr, durh)

    return _result(hs, (x, w_xz, w_xr, w_xh, u_hz, u_hr, u_rh), vjp)


def _sigmoid_vec(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
