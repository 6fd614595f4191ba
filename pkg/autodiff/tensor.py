"""
Dense tensors with define-by-run reverse-mode automatic differentiation.

A Tensor wraps a float64 numpy array. Operations whose operands require
gradients record their parents and a backward rule; `backward` walks the
recorded graph once in reverse topological order. Tensors are never mutated
by operations, so forward values can be shared freely.

Example:
    w = Tensor([1.0, 2.0], requires_grad=True)
    loss = (w * w).sum()
    backward(loss)
    w.grad  # array([2., 4.])
"""
from interfaces.errors import AutodiffError, ShapeError
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from typing import Callable, List, Optional, Sequence, Tuple, Union

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sums a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """
    Float64 array node of the compute graph.

    Attributes:
        data: forward value
        requires_grad: whether gradients flow into this node
        grad: accumulated gradient (leaves only), same shape as data
        op: name of the operation that produced the node ("leaf" for inputs)
    """

    # numpy must defer to our reflected operators (ndarray * Tensor)
    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.op = op
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # Arithmetic

    def __add__(self, other: ArrayLike) -> "Tensor":
        other = lift(other)
        a_shape, b_shape = self.shape, other.shape

        def _backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

        return _result(self.data + other.data, (self, other), "add", _backward)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        other = lift(other)
        a_shape, b_shape = self.shape, other.shape

        def _backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)

        return _result(self.data - other.data, (self, other), "sub", _backward)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return lift(other) - self

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = lift(other)
        a, b = self.data, other.data

        def _backward(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return _result(a * b, (self, other), "mul", _backward)

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        other = lift(other)
        a, b = self.data, other.data

        def _backward(g):
            return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)

        return _result(a / b, (self, other), "div", _backward)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return lift(other) / self

    def __neg__(self) -> "Tensor":
        return _result(-self.data, (self,), "neg", lambda g: (-g,))

    def __pow__(self, exponent: float) -> "Tensor":
        if isinstance(exponent, Tensor):
            raise AutodiffError("Only constant exponents are supported")
        a = self.data

        def _backward(g):
            return (g * exponent * a ** (exponent - 1),)

        return _result(a**exponent, (self,), "pow", _backward)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, lift(other))

    def __rmatmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(lift(other), self)

    def __getitem__(self, index) -> "Tensor":
        a_shape = self.shape

        def _backward(g):
            full = np.zeros(a_shape)
            np.add.at(full, index, g)
            return (full,)

        return _result(self.data[index], (self,), "getitem", _backward)

    # Reductions and reshaping

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a_shape = self.shape

        def _backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a_shape).copy(),)

        return _result(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum", _backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[ax] for ax in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a_shape = self.shape
        return _result(
            self.data.reshape(shape), (self,), "reshape", lambda g: (g.reshape(a_shape),)
        )

    def transpose(self, *axes) -> "Tensor":
        axes = tuple(axes) if axes else tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return _result(
            self.data.transpose(axes), (self,), "transpose", lambda g: (g.transpose(inverse),)
        )

    def relu(self) -> "Tensor":
        mask = self.data > 0
        return _result(np.where(mask, self.data, 0.0), (self,), "relu", lambda g: (g * mask,))


def lift(x: ArrayLike) -> Tensor:
    """Wraps constants as non-differentiable tensors."""
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(
    data: np.ndarray, parents: Tuple[Tensor, ...], op: str, backward_fn: BackwardFn
) -> Tensor:
    requires_grad = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires_grad, op=op)
    if requires_grad:
        out._parents = parents
        out._backward = backward_fn
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Batched matrix product. Leading dimensions broadcast as in numpy.

    Raises:
        ShapeError: operand ranks below 2 or mismatched contraction dimension
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul contraction mismatch: {a.shape} @ {b.shape} "
            f"({a.shape[-1]} != {b.shape[-2]})"
        )
    x, y = a.data, b.data

    def _backward(g):
        gx = g @ np.swapaxes(y, -1, -2)
        gy = np.swapaxes(x, -1, -2) @ g
        return _unbroadcast(gx, x.shape), _unbroadcast(gy, y.shape)

    return _result(x @ y, (a, b), "matmul", _backward)


def relu(x: Tensor) -> Tensor:
    return x.relu()


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    """Concatenates along `axis`; gradients are split back to each operand."""
    parts = [lift(t) for t in tensors]
    axis = axis % parts[0].ndim
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def _backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(parts))
        )

    return _result(
        np.concatenate([p.data for p in parts], axis=axis), tuple(parts), "concat", _backward
    )


def conv2d(
    x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0
) -> Tensor:
    """
    2-D cross-correlation.

    Args:
        x: input [N, C, H, W]
        weight: kernels [O, C, kh, kw]
        bias: optional [O]
        stride: step between windows on both axes
        padding: zero padding on every border

    Returns:
        out: [N, O, Ho, Wo] with Ho = (H + 2p - kh) // stride + 1

    Raises:
        ShapeError: rank/channel mismatch or kernel larger than padded input
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects [N,C,H,W] and [O,C,kh,kw], got {x.shape}, {weight.shape}")
    n, c, h, w = x.shape
    o, c_w, kh, kw = weight.shape
    if c != c_w:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, kernel expects {c_w}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise ShapeError(f"conv2d kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    ho, wo = (hp - kh) // stride + 1, (wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    w_mat = weight.data.reshape(o, c * kh * kw)
    out = (cols @ w_mat.T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def _backward(g):
        g_flat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        g_weight = (g_flat.T @ cols).reshape(weight.shape)
        g_cols = (g_flat @ w_mat).reshape(n, ho, wo, c, kh, kw)
        g_xp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                g_xp[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride] += (
                    g_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        g_x = g_xp[:, :, padding : padding + h, padding : padding + w]
        grads = (g_x, g_weight)
        if bias is not None:
            grads = grads + (g.sum(axis=(0, 2, 3)),)
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, "conv2d", _backward)


def conv_transpose2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    output_padding: int = 0,
) -> Tensor:
    """
    2-D transposed convolution (the adjoint of `conv2d`), used as deconvolution.

    Args:
        x: input [N, Cin, H, W]
        weight: kernels [Cin, Cout, kh, kw]
        bias: optional [Cout]
        stride, padding: as for the matching `conv2d`
        output_padding: extra rows/columns added at the far border

    Returns:
        out: [N, Cout, Ho, Wo] with Ho = (H - 1) * stride - 2p + kh + output_padding
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(
            f"conv_transpose2d expects [N,Cin,H,W] and [Cin,Cout,kh,kw], got {x.shape}, {weight.shape}"
        )
    n, c_in, h, w = x.shape
    c_in_w, c_out, kh, kw = weight.shape
    if c_in != c_in_w:
        raise ShapeError(f"conv_transpose2d channel mismatch: input has {c_in}, kernel expects {c_in_w}")
    canvas_h = (h - 1) * stride + kh + output_padding
    canvas_w = (w - 1) * stride + kw + output_padding
    ho, wo = canvas_h - 2 * padding, canvas_w - 2 * padding
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv_transpose2d output would be empty ({ho}x{wo})")

    x_cols = x.data.transpose(0, 2, 3, 1).reshape(n * h * w, c_in)
    w_mat = weight.data.reshape(c_in, c_out * kh * kw)
    cols = (x_cols @ w_mat).reshape(n, h, w, c_out, kh, kw)
    canvas = np.zeros((n, c_out, canvas_h, canvas_w))
    for i in range(kh):
        for j in range(kw):
            canvas[:, :, i : i + stride * (h - 1) + 1 : stride, j : j + stride * (w - 1) + 1 : stride] += (
                cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    out = canvas[:, :, padding : padding + ho, padding : padding + wo]
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def _backward(g):
        g_canvas = np.zeros((n, c_out, canvas_h, canvas_w))
        g_canvas[:, :, padding : padding + ho, padding : padding + wo] = g
        g_cols = np.empty((n, h, w, c_out, kh, kw))
        for i in range(kh):
            for j in range(kw):
                g_cols[:, :, :, :, i, j] = g_canvas[
                    :, :, i : i + stride * (h - 1) + 1 : stride, j : j + stride * (w - 1) + 1 : stride
                ].transpose(0, 2, 3, 1)
        g_cols_flat = g_cols.reshape(n * h * w, c_out * kh * kw)
        g_x = (g_cols_flat @ w_mat.T).reshape(n, h, w, c_in).transpose(0, 3, 1, 2)
        g_weight = (x_cols.T @ g_cols_flat).reshape(weight.shape)
        grads = (g_x, g_weight)
        if bias is not None:
            grads = grads + (g.sum(axis=(0, 2, 3)),)
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(np.ascontiguousarray(out), parents, "conv_transpose2d", _backward)


def _topological_order(root: Tensor) -> List[Tensor]:
    """Parents-before-children order of every node reachable from root."""
    order: List[Tensor] = list()
    visited = set()
    stack = [(root, False)]
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
    return order


def backward(loss: Tensor) -> None:
    """
    Accumulates d(loss)/d(leaf) into `.grad` of every reachable leaf.

    Args:
        loss: scalar-valued tensor

    Raises:
        AutodiffError: loss is not scalar
    """
    if loss.data.size != 1:
        raise AutodiffError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, parent_grad in zip(node._parents, node._backward(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = parent_grad if key not in pending else pending[key] + parent_grad


def grad(loss: Tensor, params: Sequence[Tensor]) -> List[np.ndarray]:
    """
    Gradients of a scalar loss with respect to `params`.

    Existing `.grad` values are cleared first. Parameters the loss does not
    reach get an all-zero gradient.
    """
    for p in params:
        p.grad = None
    backward(loss)
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
