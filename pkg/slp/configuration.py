"""
Typed views over the ``corpus``, ``model``, ``train`` and ``evaluation``
sections of a pecan configuration file. Each field name is also the name of
the command line flag that overrides it (``min_len`` ↔ ``--min-len``).
"""
from collections import OrderedDict
import logging

from slp.exceptions import ConfigError


logger = logging.getLogger(__name__)


class Settings(object):
    """
    Keyword-only container with defaults. Unknown keys are rejected so a typo
    in a configuration file does not silently fall back to a default.
    """

    section = None
    defaults = OrderedDict()

    def __init__(self, **kw):
        unknown = set(kw) - set(self.defaults)
        if unknown:
            raise ConfigError('unknown %s settings: %s' % (self.section, ', '.join(sorted(unknown))))
        for key, default in self.defaults.items():
            value = kw.get(key, default)
            if isinstance(value, list):
                value = tuple(value)
            setattr(self, key, value)
        self.validate()

    @classmethod
    def from_dict(cls, values):
        return cls(**dict(values or {}))

    def replace(self, **kw):
        values = self.as_dict()
        values.update(kw)
        return self.__class__(**values)

    def as_dict(self):
        values = OrderedDict()
        for key in self.defaults:
            value = getattr(self, key)
            values[key] = list(value) if isinstance(value, tuple) else value
        return values

    def validate(self):
        pass

    def _require(self, condition, message, *args):
        if not condition:
            raise ConfigError('%s: %s' % (self.section, message % args))

    def __eq__(self, other):
        return type(self) is type(other) and self.as_dict() == other.as_dict()

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return '<%s %s>' % (self.__class__.__name__, dict(self.as_dict()))


class CorpusConfig(Settings):

    section = 'corpus'
    defaults = OrderedDict([
        ('T', 48),
        ('N', 4),
        ('d_in', 32),
        ('vocab', 16),
        ('noise_sigma', 0.25),
        ('min_len', 4),
        ('max_len', 16),
        ('seed', 7),
        ('count', 2000),
        ('heldout', 500),
    ])

    def validate(self):
        self._require(self.T >= 1 and self.N >= 1 and self.d_in >= 1,
                      'T, N and d_in must be positive')
        self._require(1 <= self.min_len <= self.max_len <= self.T,
                      'length bounds need 1 <= min_len <= max_len <= T, got min_len=%s max_len=%s T=%s',
                      self.min_len, self.max_len, self.T)
        self._require(self.vocab >= 2, 'vocab must be at least 2, got %s', self.vocab)
        self._require(self.vocab <= self.d_in,
                      'activity codes are unit axis vectors, vocab (%s) cannot exceed d_in (%s)',
                      self.vocab, self.d_in)
        self._require(self.noise_sigma >= 0, 'noise_sigma must be >= 0')
        self._require(0 <= self.seed < 2 ** 64, 'seed must fit in 64 bits')
        self._require(self.count >= 0 and self.heldout >= 0, 'counts must be >= 0')


class ModelConfig(Settings):

    section = 'model'
    defaults = OrderedDict([
        ('d_in', 32),
        ('d_model', 32),
        ('heads', 8),
        ('graph_layers', 1),
        ('use_attention', True),
        ('update_strategy', 'gated'),
        ('seed', 7),
    ])

    UPDATE_STRATEGIES = ('gated', 'maxpool', 'concat')

    def validate(self):
        self._require(self.d_in >= 1, 'd_in must be positive')
        self._require(self.d_model >= 4 and self.d_model % 4 == 0,
                      'd_model must be a positive multiple of 4, got %s', self.d_model)
        self._require(self.heads >= 1 and self.d_model % self.heads == 0,
                      'd_model (%s) must be divisible by heads (%s)', self.d_model, self.heads)
        self._require(self.graph_layers in (0, 1, 2), 'graph_layers must be 0, 1 or 2')
        self._require(self.update_strategy in self.UPDATE_STRATEGIES,
                      'update_strategy must be one of %s', ', '.join(self.UPDATE_STRATEGIES))


PRESETS = {
    'desk': (10, 10, 20),
    'full': (50, 50, 100),
}

DIRECTIONS = ('left_then_right', 'right_then_left', 'left_while_right')


class TrainConfig(Settings):

    section = 'train'
    defaults = OrderedDict([
        ('preset', 'desk'),
        ('epochs_stage1', None),
        ('epochs_stage2', None),
        ('epochs_stage3', None),
        ('learning_rate', 1e-4),
        ('lr_decay', 10.0),
        ('plateau_patience', 5),
        ('plateau_tolerance', 1e-3),
        ('batch_size', 16),
        ('K', 5),
        ('alpha1', 0.6),
        ('alpha2', 0.4),
        ('beta1', 0.2),
        ('beta2', 0.2),
        ('gamma1', 1.0),
        ('gamma2', 0.5),
        ('theta', 0.75),
        ('theta_margin', 0.1),
        ('direction', 'left_while_right'),
        ('left_first', True),
        ('triplets', 4),
        ('weight_class', 1.0),
        ('weight_match', 1.0),
        ('weight_conf', 1.0),
        ('weight_threshold', 1.0),
        ('workers', 1),
        ('seed', 7),
    ])

    def __init__(self, **kw):
        super(TrainConfig, self).__init__(**kw)
        schedule = PRESETS[self.preset]
        for stage, epochs in zip((1, 2, 3), schedule):
            key = 'epochs_stage%s' % stage
            if getattr(self, key) is None:
                setattr(self, key, epochs)
        self._require(all(self.epochs(s) >= 0 for s in (1, 2, 3)), 'epochs must be >= 0')

    def epochs(self, stage):
        return getattr(self, 'epochs_stage%s' % stage)

    def validate(self):
        self._require(self.preset in PRESETS, 'preset must be one of %s', ', '.join(sorted(PRESETS)))
        self._require(self.learning_rate > 0, 'learning_rate must be positive')
        self._require(self.lr_decay >= 1, 'lr_decay must be >= 1')
        self._require(self.plateau_patience >= 1, 'plateau_patience must be >= 1')
        self._require(self.batch_size >= 1, 'batch_size must be >= 1')
        self._require(self.K >= 1, 'K must be >= 1')
        self._require(self.alpha1 >= 0 and self.alpha2 >= 0, 'alpha weights must be >= 0')
        self._require(self.beta1 >= 0 and self.beta2 >= 0, 'margins must be >= 0')
        self._require(self.gamma1 >= 0 and self.gamma2 >= 0, 'gamma weights must be >= 0')
        self._require(self.direction in DIRECTIONS, 'direction must be one of %s', ', '.join(DIRECTIONS))
        self._require(self.triplets >= 1, 'triplets must be >= 1')
        self._require(self.theta_margin >= 0, 'theta_margin must be >= 0')
        self._require(self.workers >= 1, 'workers must be >= 1')


class EvalConfig(Settings):

    section = 'evaluation'
    defaults = OrderedDict([
        ('n_list', (1, 5)),
        ('m_list', (0.5, 0.7)),
        ('threads', 1),
    ])

    def validate(self):
        self._require(all(n >= 1 for n in self.n_list), 'n_list entries must be >= 1')
        self._require(all(0 <= m <= 1 for m in self.m_list), 'm_list entries must lie in [0, 1]')
        self._require(self.threads >= 1, 'threads must be >= 1')
