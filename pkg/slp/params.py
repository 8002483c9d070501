"""
The learnable parameter set. Tensors are registered under dotted names whose
first component is the module they belong to (``sl`` or ``bp``) and whose last
component is the tensor within its layer, e.g. ``bp.update.reset1.W``. The
layer path (everything but the last component) is the parameter group.
"""
from collections import OrderedDict
import logging

import numpy as np

from slp.exceptions import ConfigError, ContractError, DimensionError
from slp.tensor import Tensor


logger = logging.getLogger(__name__)

MODULES = ('sl', 'bp')


def xavier_uniform(shape, rng):
    d_out, d_in = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=shape)


def zeros(shape, rng):
    return np.zeros(shape)


def identity(shape, rng):
    return np.eye(shape[0], shape[-1])


def bias_uniform(shape, rng):
    """
    Small nonzero biases. Used on the encoder input projections so encoded
    features never collapse to the zero vector.
    """
    return rng.uniform(-0.1, 0.1, size=shape)


INITIALIZERS = {
    'xavier_uniform': xavier_uniform,
    'zeros': zeros,
    'bias_uniform': bias_uniform,
    'identity': identity,
}


class ModelParams(object):

    def __init__(self):
        self._tensors = OrderedDict()
        self._schemes = {}

    def add(self, name, shape, scheme, rng):
        if name in self._tensors:
            raise ContractError('parameter registered twice: %s' % name)
        if name.split('.')[0] not in MODULES:
            raise ConfigError('parameter %s is outside of modules %s' % (name, MODULES))
        try:
            initializer = INITIALIZERS[scheme]
        except KeyError:
            raise ConfigError('unknown initialization scheme: %s' % scheme)
        tensor = Tensor(initializer(tuple(shape), rng), requires_grad=True)
        self._tensors[name] = tensor
        self._schemes[name] = scheme
        return tensor

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def get(self, name, default=None):
        return self._tensors.get(name, default)

    def items(self):
        return self._tensors.items()

    def scheme(self, name):
        return self._schemes[name]

    def names(self, module=None):
        if module is None:
            return list(self._tensors)
        return [n for n in self._tensors if n.split('.')[0] == module]

    @staticmethod
    def group_of(name):
        return name.rsplit('.', 1)[0]

    def groups(self):
        seen = OrderedDict()
        for name in self._tensors:
            seen.setdefault(self.group_of(name), []).append(name)
        return seen

    def size(self):
        return sum(t.data.size for t in self._tensors.values())

    def zero_grad(self, names=None):
        for name in (names or self._tensors):
            self._tensors[name].zero_grad()

    def clear_grad(self):
        for tensor in self._tensors.values():
            tensor.grad = None

    def snapshot(self):
        return OrderedDict((n, t.data.copy()) for n, t in self._tensors.items())

    def load(self, arrays, schemes=None):
        """
        Overwrite values in place so layers bound to these tensors see the
        change. Names and shapes must match what is registered.
        """
        missing = set(self._tensors) ^ set(arrays)
        if missing:
            raise ContractError('parameter names differ: %s' % ', '.join(sorted(missing)))
        for name, value in arrays.items():
            tensor = self._tensors[name]
            value = np.asarray(value, dtype=np.float64)
            if value.shape != tensor.data.shape:
                raise DimensionError('load %s' % name, tensor.shape, value.shape)
            tensor.data[...] = value

    def __repr__(self):
        return '<ModelParams tensors=%s values=%s>' % (len(self), self.size())
