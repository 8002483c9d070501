"""
Dense float64 tensors with shape-checked operations and a tape for
reverse-mode gradients.

Operations executed while a :class:`Tape` is active (``with Tape() as tape:``)
and that touch at least one tensor with ``requires_grad`` are recorded on that
tape. Replaying the tape in reverse (:func:`backward`) accumulates gradients
into the ``grad`` buffer of every leaf tensor. Outside of a tape nothing is
recorded, which is what inference uses.

The active tape is thread local, so separate threads can build separate tapes
at the same time.
"""
import logging
import threading
from contextlib import contextmanager

import numpy as np

from slp.exceptions import (
    ContractError, DegenerateInputError, DimensionError, NumericError
)


logger = logging.getLogger(__name__)

_local = threading.local()
_settings = {'debug': False}


def set_debug(enabled):
    """
    Turn the NaN/Inf guard on or off. When on, every tensor that gets created
    is checked and a :class:`NumericError` is raised on non-finite values.
    """
    _settings['debug'] = bool(enabled)


def debug_enabled():
    return _settings['debug']


def _check_finite(data, origin):
    if _settings['debug'] and not np.all(np.isfinite(data)):
        raise NumericError('%s produced non-finite values' % origin)


class Tensor(object):

    def __init__(self, data, requires_grad=False, _copy=True, _origin='tensor'):
        if _copy:
            data = np.array(data, dtype=np.float64)
        else:
            data = np.asarray(data, dtype=np.float64)
        if any(d == 0 for d in data.shape):
            raise DimensionError('tensor', data.shape)
        _check_finite(data, _origin)
        self.data = data
        self.requires_grad = requires_grad
        self.grad = None
        self._tape = None

    @property
    def shape(self):
        return list(self.data.shape)

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        if self.data.size != 1:
            raise ContractError('item() needs a single element, shape is %s' % self.shape)
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data.copy()

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def detach(self):
        return Tensor(self.data)

    def sum(self):
        return reduce_sum(self)

    def mean(self):
        return reduce_mean(self)

    @property
    def T(self):
        return transpose(self)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ContractError('division is only defined by a constant')
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def __repr__(self):
        return '<Tensor shape=%s requires_grad=%s>' % (self.shape, self.requires_grad)


class Tape(object):
    """
    Ordered record of the differentiable operations executed while it was
    active. Each entry keeps the output, its inputs and the function mapping
    the output gradient to input gradients.
    """

    def __init__(self):
        self.nodes = []
        self.replayed = False
        self._previous = None

    def __enter__(self):
        self._previous = current_tape()
        _local.tape = self
        return self

    def __exit__(self, *exc):
        _local.tape = self._previous
        self._previous = None

    def __len__(self):
        return len(self.nodes)

    def record(self, output, inputs, backward_fn):
        output._tape = self
        self.nodes.append((output, inputs, backward_fn))

    def backward(self, root):
        if root.data.size != 1:
            raise ContractError('backward needs a scalar root, got shape %s' % root.shape)
        if root._tape is not self:
            raise ContractError('root was not produced by operations on this tape')
        if self.replayed:
            raise ContractError('tape has already been replayed')
        self.replayed = True
        pending = {id(root): np.ones_like(root.data)}
        for output, inputs, backward_fn in reversed(self.nodes):
            upstream = pending.pop(id(output), None)
            if upstream is None:
                continue
            for tensor, grad in zip(inputs, backward_fn(upstream)):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor._tape is self:
                    key = id(tensor)
                    if key in pending:
                        pending[key] = pending[key] + grad
                    else:
                        pending[key] = grad
                elif tensor.grad is None:
                    tensor.grad = np.array(grad, dtype=np.float64)
                else:
                    tensor.grad = tensor.grad + grad


def current_tape():
    return getattr(_local, 'tape', None)


@contextmanager
def no_tape():
    """ Run a block without recording anything, even inside a tape """
    previous = current_tape()
    _local.tape = None
    try:
        yield
    finally:
        _local.tape = previous


def backward(root):
    """
    Accumulate d(root)/d(leaf) into the ``grad`` of every leaf that requires
    gradients. ``root`` must be a scalar produced on an active tape.
    """
    if not isinstance(root, Tensor) or root._tape is None:
        raise ContractError('root was not produced by taped operations')
    root._tape.backward(root)


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def constant(value):
    return Tensor(value, requires_grad=False)


def _result(data, inputs, backward_fn, op):
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires_grad, _copy=False, _origin=op)
    tape = current_tape()
    if tape is not None and requires_grad:
        tape.record(out, inputs, backward_fn)
    return out


def _broadcast_kind(op, a, b):
    """
    Only the shape combinations the model needs are allowed: identical
    shapes, a scalar operand, or a vector added along the rows of a matrix.
    """
    if a.data.shape == b.data.shape:
        return 'same'
    if b.data.ndim == 0:
        return 'b_scalar'
    if a.data.ndim == 0:
        return 'a_scalar'
    if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        return 'b_rows'
    if b.data.ndim == 2 and a.data.ndim == 1 and b.data.shape[1] == a.data.shape[0]:
        return 'a_rows'
    raise DimensionError(op, a.shape, b.shape)


def _reduce_to(grad, kind, which):
    if kind == 'same':
        return grad
    if kind == '%s_scalar' % which:
        return np.asarray(grad.sum())
    if kind == '%s_rows' % which:
        return grad.sum(axis=0)
    return grad


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    kind = _broadcast_kind('add', a, b)

    def backward_fn(g):
        return _reduce_to(g, kind, 'a'), _reduce_to(g, kind, 'b')
    return _result(a.data + b.data, (a, b), backward_fn, 'add')


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    kind = _broadcast_kind('sub', a, b)

    def backward_fn(g):
        return _reduce_to(g, kind, 'a'), -_reduce_to(g, kind, 'b')
    return _result(a.data - b.data, (a, b), backward_fn, 'sub')


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    kind = _broadcast_kind('mul', a, b)

    def backward_fn(g):
        return _reduce_to(g * b.data, kind, 'a'), _reduce_to(g * a.data, kind, 'b')
    return _result(a.data * b.data, (a, b), backward_fn, 'mul')


def neg(x):
    x = as_tensor(x)
    return _result(-x.data, (x,), lambda g: (-g,), 'neg')


def matmul(a, b):
    """
    Matrix product for ``M×K · K×P``, ``K · K×P`` and ``M×K · K``. Gradients
    follow dA = dC·Bᵀ and dB = Aᵀ·dC.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or (a.ndim == 1 and b.ndim == 1):
        raise DimensionError('matmul', a.shape, b.shape)
    if a.data.shape[-1] != b.data.shape[0]:
        raise DimensionError('matmul', a.shape, b.shape)

    def backward_fn(g):
        if a.ndim == 2 and b.ndim == 2:
            return g.dot(b.data.T), a.data.T.dot(g)
        if a.ndim == 1:
            return b.data.dot(g), np.outer(a.data, g)
        return np.outer(g, b.data), a.data.T.dot(g)
    return _result(a.data.dot(b.data), (a, b), backward_fn, 'matmul')


def transpose(x):
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError('transpose', x.shape)
    return _result(x.data.T.copy(), (x,), lambda g: (g.T,), 'transpose')


def reshape(x, shape):
    x = as_tensor(x)
    original = x.data.shape
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise DimensionError('reshape', x.shape, shape)
    return _result(data.copy(), (x,), lambda g: (g.reshape(original),), 'reshape')


def take(x, index):
    """ Indexing (rows, columns, slices) with the gradient scattered back """
    x = as_tensor(x)
    try:
        data = np.array(x.data[index])
    except IndexError:
        raise DimensionError('take', x.shape)

    def backward_fn(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)
    return _result(data, (x,), backward_fn, 'take')


def reduce_sum(x):
    x = as_tensor(x)
    return _result(np.asarray(x.data.sum()), (x,),
                   lambda g: (np.full(x.data.shape, float(g)),), 'sum')


def reduce_mean(x):
    x = as_tensor(x)
    count = float(x.data.size)
    return _result(np.asarray(x.data.mean()), (x,),
                   lambda g: (np.full(x.data.shape, float(g) / count),), 'mean')


def _normalize_axis(op, x, axis):
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(op, x.shape, (axis,))
    return axis % x.ndim


def softmax(x, axis=-1):
    """
    Softmax along ``axis``, computed after subtracting the maximum so that
    large inputs do not overflow.
    """
    x = as_tensor(x)
    axis = _normalize_axis('softmax', x, axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    y = exp / exp.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)
    return _result(y, (x,), backward_fn, 'softmax')


def _sigmoid(data):
    out = np.empty_like(data)
    positive = data >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-data[positive]))
    exp = np.exp(data[~positive])
    out[~positive] = exp / (1.0 + exp)
    return out


ACTIVATIONS = ('tanh', 'sigmoid', 'relu')


def elementwise(x, f):
    x = as_tensor(x)
    if f == 'tanh':
        y = np.tanh(x.data)
        return _result(y, (x,), lambda g: (g * (1.0 - y * y),), 'tanh')
    if f == 'sigmoid':
        y = _sigmoid(x.data)
        return _result(y, (x,), lambda g: (g * y * (1.0 - y),), 'sigmoid')
    if f == 'relu':
        mask = (x.data > 0).astype(np.float64)
        return _result(x.data * mask, (x,), lambda g: (g * mask,), 'relu')
    raise ContractError('unknown activation %r, expected one of %s' % (f, ', '.join(ACTIVATIONS)))


def tanh(x):
    return elementwise(x, 'tanh')


def sigmoid(x):
    return elementwise(x, 'sigmoid')


def relu(x):
    return elementwise(x, 'relu')


def log(x):
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise DegenerateInputError('log of a non-positive value')
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,), 'log')


def clip(x, low, high):
    x = as_tensor(x)
    mask = ((x.data >= low) & (x.data <= high)).astype(np.float64)
    return _result(np.clip(x.data, low, high), (x,), lambda g: (g * mask,), 'clip')


def maximum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        raise DimensionError('maximum', a.shape, b.shape)
    first = (a.data >= b.data).astype(np.float64)
    return _result(np.maximum(a.data, b.data), (a, b),
                   lambda g: (g * first, g * (1.0 - first)), 'maximum')


def smooth_l1(x):
    """ Elementwise smooth-L1 with the transition at 1 """
    x = as_tensor(x)
    absolute = np.abs(x.data)
    quadratic = absolute < 1.0
    y = np.where(quadratic, 0.5 * x.data * x.data, absolute - 0.5)
    slope = np.where(quadratic, x.data, np.sign(x.data))
    return _result(y, (x,), lambda g: (g * slope,), 'smooth_l1')


def cosine(u, v):
    """
    u·v / (‖u‖‖v‖) for two vectors of the same width. A zero-norm operand
    raises :class:`DegenerateInputError`; callers decide what that means.
    """
    u, v = as_tensor(u), as_tensor(v)
    if u.ndim != 1 or u.data.shape != v.data.shape:
        raise DimensionError('cosine', u.shape, v.shape)
    norm_u = np.sqrt(u.data.dot(u.data))
    norm_v = np.sqrt(v.data.dot(v.data))
    if norm_u == 0.0 or norm_v == 0.0:
        raise DegenerateInputError('cosine of a zero-norm vector')
    value = u.data.dot(v.data) / (norm_u * norm_v)

    def backward_fn(g):
        du = v.data / (norm_u * norm_v) - value * u.data / (norm_u * norm_u)
        dv = u.data / (norm_u * norm_v) - value * v.data / (norm_v * norm_v)
        return g * du, g * dv
    return _result(np.asarray(value), (u, v), backward_fn, 'cosine')


def join(tensors, axis=0):
    """ Concatenate any number of tensors along ``axis`` """
    tensors = [as_tensor(t) for t in tensors]
    first = tensors[0]
    axis = _normalize_axis('concat', first, axis)
    for other in tensors[1:]:
        same_rank = other.ndim == first.ndim
        if not same_rank or any(
                other.data.shape[i] != first.data.shape[i]
                for i in range(first.ndim) if i != axis):
            raise DimensionError('concat', *[t.shape for t in tensors])
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return np.split(g, splits, axis=axis)
    return _result(np.concatenate([t.data for t in tensors], axis=axis),
                   tuple(tensors), backward_fn, 'concat')


def concat(a, b, axis=0):
    return join([a, b], axis)


def stack(tensors):
    """ Stack same-shape tensors along a new leading axis """
    tensors = [as_tensor(t) for t in tensors]
    shape = tensors[0].data.shape
    for t in tensors:
        if t.data.shape != shape:
            raise DimensionError('stack', *[t.shape for t in tensors])

    def backward_fn(g):
        return [g[i] for i in range(len(tensors))]
    return _result(np.stack([t.data for t in tensors]), tuple(tensors), backward_fn, 'stack')


def fused(data, inputs, backward_fn, op):
    """
    Record a multi-step computation as one tape node. ``backward_fn`` maps
    the output gradient to one gradient (or None) per input, in order.
    """
    inputs = tuple(as_tensor(t) for t in inputs)
    return _result(np.asarray(data, dtype=np.float64), inputs, backward_fn, op)


def pairwise_sum(a, b):
    """
    Every row of ``a`` plus every row of ``b``: row ``i * len(b) + j`` of the
    result is a[i] + b[j].
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.data.shape[1] != b.data.shape[1]:
        raise DimensionError('pairwise_sum', a.shape, b.shape)
    rows, others, width = a.data.shape[0], b.data.shape[0], a.data.shape[1]
    data = (a.data[:, None, :] + b.data[None, :, :]).reshape(rows * others, width)

    def backward_fn(g):
        g = g.reshape(rows, others, width)
        return g.sum(axis=1), g.sum(axis=0)
    return _result(data, (a, b), backward_fn, 'pairwise_sum')


def row_cosines(M, v):
    """ Cosine of ``v`` with every row of ``M`` """
    M, v = as_tensor(M), as_tensor(v)
    if M.ndim != 2 or v.ndim != 1 or M.data.shape[1] != v.data.shape[0]:
        raise DimensionError('row_cosines', M.shape, v.shape)
    norms = np.sqrt((M.data * M.data).sum(axis=1))
    norm_v = np.sqrt(v.data.dot(v.data))
    if norm_v == 0.0 or np.any(norms == 0.0):
        raise DegenerateInputError('cosine of a zero-norm vector')
    values = M.data.dot(v.data) / (norms * norm_v)

    def backward_fn(g):
        dM = (g / (norms * norm_v))[:, None] * v.data[None, :] - \
            (g * values / (norms * norms))[:, None] * M.data
        dv = (g / (norms * norm_v)).dot(M.data) - (g * values).sum() * v.data / (norm_v * norm_v)
        return dM, dv
    return _result(values, (M, v), backward_fn, 'row_cosines')
