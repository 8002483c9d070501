"""
Learned building blocks for the encoders and heads. Layers are thin views
over tensors registered in a :class:`~slp.params.ModelParams`: ``create``
registers (and initializes) the tensors, ``bind`` looks existing ones up.
Binding is cheap, so forward functions bind on every call and stay pure
functions of ``(params, inputs)``.
"""
import logging

import numpy as np

from slp import tensor as tn
from slp.exceptions import DimensionError
from slp.recurrent import gru_scan


logger = logging.getLogger(__name__)


class LinearLayer(object):

    def __init__(self, W, b=None):
        if b is not None and b.shape != [W.shape[0]]:
            raise DimensionError('linear layer', W.shape, b.shape)
        self.W = W
        self.b = b

    @classmethod
    def create(cls, params, name, d_in, d_out, rng, bias='zeros', weight='xavier_uniform'):
        W = params.add(name + '.W', (d_out, d_in), weight, rng)
        b = None
        if bias:
            b = params.add(name + '.b', (d_out,), bias, rng)
        return cls(W, b)

    @classmethod
    def bind(cls, params, name):
        return cls(params[name + '.W'], params.get(name + '.b'))

    @property
    def d_in(self):
        return self.W.shape[1]

    @property
    def d_out(self):
        return self.W.shape[0]

    def __call__(self, x):
        return linear(x, self)


def linear(x, layer):
    """ xWᵀ + b over the trailing axis of a vector or a matrix of rows """
    x = tn.as_tensor(x)
    if x.shape[-1] != layer.d_in:
        raise DimensionError('linear', x.shape, layer.W.shape)
    y = tn.matmul(x, tn.transpose(layer.W))
    if layer.b is not None:
        y = tn.add(y, layer.b)
    return y


class MLP3(object):
    """
    Three linear layers narrowing D → D/2 → D/4 → 1 with relu in between and
    a sigmoid on the output.
    """

    def __init__(self, first, second, third):
        self.layers = (first, second, third)

    @classmethod
    def create(cls, params, name, d, rng):
        if d % 4:
            raise DimensionError('mlp3 width', (d,))
        return cls(
            LinearLayer.create(params, name + '.fc1', d, d // 2, rng),
            LinearLayer.create(params, name + '.fc2', d // 2, d // 4, rng),
            LinearLayer.create(params, name + '.fc3', d // 4, 1, rng),
        )

    @classmethod
    def bind(cls, params, name):
        return cls(*[LinearLayer.bind(params, '%s.fc%s' % (name, i)) for i in (1, 2, 3)])

    def __call__(self, x):
        return mlp3(x, self)


def mlp3(x, head):
    """
    A vector input gives a scalar in (0, 1); a T×D input gives T of them.
    """
    x = tn.as_tensor(x)
    first, second, third = head.layers
    hidden = tn.relu(first(x))
    hidden = tn.relu(second(hidden))
    out = tn.sigmoid(third(hidden))
    if x.ndim == 1:
        return tn.reshape(out, ())
    return tn.reshape(out, (x.shape[0],))


class AttentionBlock(object):

    def __init__(self, query, key, value, output, heads):
        d = query.d_out
        if d % heads:
            raise DimensionError('attention heads', (d,), (heads,))
        self.query = query
        self.key = key
        self.value = value
        self.output = output
        self.heads = heads

    @classmethod
    def create(cls, params, name, d, heads, rng):
        if d % heads:
            raise DimensionError('attention heads', (d,), (heads,))
        return cls(
            LinearLayer.create(params, name + '.query', d, d, rng),
            LinearLayer.create(params, name + '.key', d, d, rng),
            LinearLayer.create(params, name + '.value', d, d, rng),
            LinearLayer.create(params, name + '.output', d, d, rng),
            heads,
        )

    @classmethod
    def bind(cls, params, name, heads):
        return cls(*[LinearLayer.bind(params, '%s.%s' % (name, part))
                     for part in ('query', 'key', 'value', 'output')], heads=heads)

    @property
    def head_width(self):
        return self.query.d_out // self.heads


def self_attention(X, block, return_weights=False):
    """
    Scaled dot-product attention per head (scale 1/sqrt(D/h)); heads are
    concatenated, projected and added back onto the input. There is no
    positional encoding, so permuting the rows of ``X`` permutes the output
    the same way.
    """
    X = tn.as_tensor(X)
    if X.ndim != 2 or X.shape[1] != block.query.d_in:
        raise DimensionError('self_attention', X.shape, block.query.W.shape)
    width = block.head_width
    scale = 1.0 / np.sqrt(width)
    queries, keys, values = block.query(X), block.key(X), block.value(X)
    heads = []
    weights = []
    for h in range(block.heads):
        columns = (slice(None), slice(h * width, (h + 1) * width))
        scores = tn.matmul(queries[columns], tn.transpose(keys[columns])) * scale
        attention = tn.softmax(scores, axis=1)
        heads.append(tn.matmul(attention, values[columns]))
        weights.append(attention)
    out = tn.add(X, block.output(tn.join(heads, axis=1)))
    if return_weights:
        return out, weights
    return out


class GRUCell(object):
    """
    Input projections carry the biases, recurrent projections do not:
    z = σ(W_z x + b_z + U_z h), r = σ(W_r x + b_r + U_r h),
    n = tanh(W_n x + b_n + U_n (r ⊙ h)), h' = (1 - z) ⊙ n + z ⊙ h
    """

    GATES = ('update', 'reset', 'candidate')

    def __init__(self, inputs, recurrents):
        self.inputs = inputs
        self.recurrents = recurrents

    @classmethod
    def create(cls, params, name, d_in, hidden, rng):
        inputs = {}
        recurrents = {}
        for gate in cls.GATES:
            inputs[gate] = LinearLayer.create(params, '%s.%s_in' % (name, gate), d_in, hidden, rng)
            recurrents[gate] = LinearLayer.create(
                params, '%s.%s_hidden' % (name, gate), hidden, hidden, rng, bias=None)
        return cls(inputs, recurrents)

    @classmethod
    def bind(cls, params, name):
        inputs = dict((g, LinearLayer.bind(params, '%s.%s_in' % (name, g))) for g in cls.GATES)
        recurrents = dict((g, LinearLayer.bind(params, '%s.%s_hidden' % (name, g))) for g in cls.GATES)
        return cls(inputs, recurrents)

    @property
    def hidden(self):
        return self.recurrents['update'].d_out

    def run(self, X, reverse=False):
        """
        Unroll over the rows of ``X`` from a zero state. Returns the hidden
        states indexed by position, whichever way the cell walked.
        """
        weights = []
        for gate in self.GATES:
            weights.extend([self.inputs[gate].W, self.inputs[gate].b, self.recurrents[gate].W])
        return gru_scan(X, weights, reverse=reverse)


class BiGRULayer(object):

    def __init__(self, forward, backward):
        self.forward = forward
        self.backward = backward

    @classmethod
    def create(cls, params, name, d, rng):
        if d % 2:
            raise DimensionError('bigru width', (d,))
        return cls(
            GRUCell.create(params, name + '.forward', d, d // 2, rng),
            GRUCell.create(params, name + '.backward', d, d // 2, rng),
        )

    @classmethod
    def bind(cls, params, name):
        return cls(GRUCell.bind(params, name + '.forward'), GRUCell.bind(params, name + '.backward'))


def bigru(X, layer):
    """ Position t of the output is [forward state at t ‖ backward state at t] """
    X = tn.as_tensor(X)
    if X.ndim != 2 or X.shape[1] != layer.forward.inputs['update'].d_in:
        raise DimensionError('bigru', X.shape, layer.forward.inputs['update'].W.shape)
    return tn.concat(layer.forward.run(X), layer.backward.run(X, reverse=True), axis=1)
