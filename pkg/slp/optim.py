"""
Adam with bias correction and the plateau rule that divides the learning
rate when the epoch loss stops improving.
"""
from collections import OrderedDict
import logging

import numpy as np

from slp.exceptions import ContractError


logger = logging.getLogger(__name__)

BETAS = (0.9, 0.999)
EPSILON = 1e-8


class AdamState(object):

    def __init__(self, step=0, m=None, v=None):
        self.step = step
        self.m = m if m is not None else OrderedDict()
        self.v = v if v is not None else OrderedDict()


def adam_step(params, grads, state, lr, betas=BETAS, eps=EPSILON):
    """
    One Adam update of every tensor named in ``grads``, written into the
    tensors of ``params`` in place. A ``None`` gradient is an error: a
    parameter that takes part in a step must have been reached by backward.
    """
    beta1, beta2 = betas
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, grad in grads.items():
        if grad is None:
            raise ContractError('missing gradient for %s' % name)
        tensor = params[name]
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(tensor.data)
            v = np.zeros_like(tensor.data)
        else:
            v = state.v[name]
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v
        tensor.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return state


class Adam(object):

    def __init__(self, lr, betas=BETAS, eps=EPSILON, state=None):
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = state or AdamState()

    def step(self, params, names):
        grads = OrderedDict((name, params[name].grad) for name in names)
        adam_step(params, grads, self.state, self.lr, self.betas, self.eps)

    def as_dict(self):
        return {'lr': self.lr, 'step': self.state.step}


class PlateauSchedule(object):
    """
    Divide the learning rate by ``factor`` when the loss has improved by less
    than ``tolerance`` (relative) across the last ``patience`` epochs. The
    window restarts after every decay.
    """

    def __init__(self, factor=10.0, patience=5, tolerance=1e-3, window=None):
        self.factor = factor
        self.patience = patience
        self.tolerance = tolerance
        self.window = list(window or [])

    def update(self, optimizer, loss):
        self.window.append(float(loss))
        if len(self.window) <= self.patience:
            return False
        old, new = self.window[-self.patience - 1], self.window[-1]
        improvement = (old - new) / max(abs(old), 1e-12)
        if improvement >= self.tolerance:
            return False
        previous = optimizer.lr
        optimizer.lr = previous / self.factor
        self.window = [new]
        logger.warning('loss plateaued (%.2e relative improvement over %s epochs), lr %.2e -> %.2e',
                       improvement, self.patience, previous, optimizer.lr)
        return True
