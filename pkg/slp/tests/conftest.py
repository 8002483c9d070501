'''
A py.test plugin.  Loaded and run by py.test automatically.
'''

import os

import numpy as np
import pytest
from pecan import configuration, set_config

from slp import tensor as tn
from slp.configuration import CorpusConfig, ModelConfig, TrainConfig
from slp.corpus import generate_corpus
from slp.model import build_params


def config_file():
    here = os.path.abspath(os.path.dirname(__file__))
    return os.path.join(here, 'config.py')


def pytest_addoption(parser):
    parser.addoption('--slow', action='store_true', default=False,
                     help='also run the seeded training runs marked slow')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: seeded training runs that take minutes')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--slow'):
        return
    skip = pytest.mark.skip(reason='needs --slow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def nan_guard():
    """
    Every test runs with the non-finite guard on, so a NaN or Inf anywhere
    fails loudly where it is produced.
    """
    tn.set_debug(True)
    yield
    tn.set_debug(False)


@pytest.fixture
def test_conf():
    conf = configuration.conf_from_file(config_file()).to_dict()
    set_config(conf, overwrite=True)
    return conf


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def model_config():
    return ModelConfig(d_in=8, d_model=8, heads=2, seed=1)


@pytest.fixture
def params(model_config):
    return build_params(model_config)


@pytest.fixture
def corpus_config():
    return CorpusConfig(T=12, N=3, d_in=8, vocab=4, min_len=2, max_len=5, seed=5, count=8, heldout=4)


@pytest.fixture
def corpus(corpus_config):
    return generate_corpus(corpus_config)


@pytest.fixture
def train_config():
    return TrainConfig(epochs_stage1=1, epochs_stage2=1, epochs_stage3=1, batch_size=4,
                       K=3, triplets=2, theta=0.5, seed=2)


# this console logging configuration is basically just to be able to see output
# in tests, and this file gets executed by py.test when it runs, so we get that
# for free.
import logging  # noqa
# Console Logger
sh = logging.StreamHandler()
sh.setLevel(logging.WARNING)

formatter = logging.Formatter(
    fmt='%(asctime)s.%(msecs)03d %(process)d:%(levelname)s:%(name)s:%(message)s',
    datefmt='%Y-%m-%dT%H:%M:%S',
    )
sh.setFormatter(formatter)


# because we're in a module already, __name__ is not the ancestor of
# the rest of the package; use the root as the logger for everyone
root_logger = logging.getLogger()

# allow all levels at root_logger, handlers control individual levels
root_logger.setLevel(logging.DEBUG)
root_logger.addHandler(sh)

console_loglevel = logging.DEBUG  # start at DEBUG for now

# Console Logger
sh.setLevel(console_loglevel)
