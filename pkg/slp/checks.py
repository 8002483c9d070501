"""
Finite-difference verification of the analytic gradients of the full
training loss on a tiny instance (T=6, N=3, D=8). Every parameter tensor is
perturbed element by element; the report keeps the worst relative error of
each parameter group.
"""
from collections import OrderedDict
import logging

import numpy as np

from slp import tensor as tn
from slp.configuration import CorpusConfig, ModelConfig, TrainConfig
from slp.corpus import generate_example
from slp.exceptions import NumericError
from slp.model import build_params
from slp.train import example_losses, sample_plan, weighted_total
from slp import skim as sl


logger = logging.getLogger(__name__)

STEP = 1e-5
TOLERANCE = 1e-4


class GradientCheckError(NumericError):

    def __init__(self, failures):
        self.failures = failures

    def __str__(self):
        return 'gradient check failed for %s' % ', '.join(
            '%s (%.3e)' % (group, error) for group, error in self.failures.items())


class TinyInstance(object):
    """
    Two examples with different activities (each one's query is the other's
    mismatched query) and a fixed sampling plan, so the loss is a
    deterministic function of the parameters.
    """

    def __init__(self, seed=3, update_strategy='gated'):
        self.corpus_config = CorpusConfig(T=6, N=3, d_in=8, vocab=4, min_len=2, max_len=3,
                                          seed=seed, count=2, heldout=0)
        self.model_config = ModelConfig(d_in=8, d_model=8, heads=2, seed=seed,
                                        update_strategy=update_strategy)
        self.train_config = TrainConfig(triplets=2, theta=0.0, seed=seed)
        index = 0
        first = generate_example(self.corpus_config, index)
        while True:
            index += 1
            second = generate_example(self.corpus_config, index)
            if second.activity_id != first.activity_id:
                break
        self.examples = (first, second)
        rng = np.random.Generator(np.random.PCG64(seed))
        self.plans = [sample_plan(e, rng, self.train_config, partner=1 - i)
                      for i, e in enumerate(self.examples)]

    def params(self):
        return build_params(self.model_config)

    def loss(self, params):
        """ Mean over both examples of the stage 3 loss """
        skims = [sl.skim(e.features, e.query, params, self.model_config) for e in self.examples]
        totals = []
        for example, skimmed, plan in zip(self.examples, skims, self.plans):
            losses = example_losses(3, skimmed, example, plan, skims[plan.partner].Q,
                                    params, self.train_config, self.model_config)
            totals.append(weighted_total(losses, self.train_config))
        return tn.reduce_mean(tn.stack(totals))


def analytic_gradients(params, loss_fn):
    params.clear_grad()
    params.zero_grad()
    with tn.Tape():
        tn.backward(loss_fn(params))
    return OrderedDict((name, tensor.grad.copy()) for name, tensor in params.items())


def numeric_gradient(params, name, loss_fn, step=STEP):
    tensor = params[name]
    grad = np.zeros_like(tensor.data)
    with tn.no_tape():
        for index in np.ndindex(*tensor.data.shape):
            original = tensor.data[index]
            tensor.data[index] = original + step
            upper = loss_fn(params).item()
            tensor.data[index] = original - step
            lower = loss_fn(params).item()
            tensor.data[index] = original
            grad[index] = (upper - lower) / (2 * step)
    return grad


def relative_error(analytic, numeric):
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-6)
    return float(np.abs(analytic - numeric).max() / scale)


def gradient_report(params, loss_fn, corrupt=None, step=STEP, only=None):
    """
    Worst relative error per parameter group, in registration order,
    restricted to the groups in ``only`` when given.
    ``corrupt`` is a hook that may alter the analytic gradients (a mapping
    of name to array) before they are compared.
    """
    analytic = analytic_gradients(params, loss_fn)
    if corrupt is not None:
        corrupt(analytic)
    report = OrderedDict()
    for group, names in params.groups().items():
        if only is not None and group not in only:
            continue
        worst = 0.0
        for name in names:
            error = relative_error(analytic[name], numeric_gradient(params, name, loss_fn, step))
            worst = max(worst, error)
        report[group] = worst
        logger.debug('%s: %.3e', group, worst)
    return report


def check_gradients(instance=None, corrupt=None, tolerance=TOLERANCE, only=None):
    instance = instance or TinyInstance()
    report = gradient_report(instance.params(), instance.loss, corrupt, only=only)
    failures = OrderedDict((g, e) for g, e in report.items() if not e < tolerance)
    if failures:
        raise GradientCheckError(failures)
    return report


def corrupt_group(group):
    """ A ``corrupt`` hook that scales the analytic gradients of one group """
    def corrupt(gradients):
        for name in gradients:
            if name.rsplit('.', 1)[0] == group:
                gradients[name] = gradients[name] * 1.5 + 1e-3
    return corrupt
