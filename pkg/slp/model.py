"""
Assembles the full parameter set and exposes the inference-time forward pass.
"""
import logging

import numpy as np

from slp import peruse as bp
from slp import skim as sl
from slp import tensor as tn
from slp.params import ModelParams


logger = logging.getLogger(__name__)


def build_params(config):
    """
    Register and initialize every tensor of both modules. The same
    configuration (seed included) always produces the same values.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    params = ModelParams()
    sl.create_params(params, config, rng)
    bp.create_params(params, config, rng)
    logger.debug('built %r', params)
    return params


def propose(params, record, model_config, train_config):
    """
    Skim the example, then peruse from each of the top-K anchors. Returns the
    skim result and one :class:`~slp.peruse.PeruseResult` per anchor, in
    anchor rank order.
    """
    with tn.no_tape():
        skimmed = sl.skim(record.features, record.query, params, model_config)
        anchors = sl.topk_frames(skimmed.p, train_config.K)
        results = [
            bp.peruse(
                anchor, skimmed.Vtilde, skimmed.Q, train_config.direction, train_config.theta,
                params, alpha=(train_config.alpha1, train_config.alpha2),
                strategy=model_config.update_strategy, left_first=train_config.left_first)
            for anchor in anchors
        ]
    return skimmed, results
