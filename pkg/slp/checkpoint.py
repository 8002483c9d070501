"""
Training checkpoints and their file format.

File layout (little endian)::

    8 bytes   magic "SLPCKPT1"
    5 × u32   version, stage, epoch, parameter count, optimizer tensor count
    tensors   per tensor: u32 name length, utf-8 name, u32 ndim, u32 dims,
              f64 values; parameters first, then optimizer moments
    blob      u32 length + JSON: model/train config, optimizer scalars,
              plateau window, loss history
    blob      u32 length + JSON: training generator state
"""
from collections import OrderedDict
import json
import logging
import struct

import numpy as np

from slp.configuration import ModelConfig, TrainConfig
from slp.exceptions import (
    ContractError, DataError, IncompatibleVersion, MagicMismatch, MalformedHeader
)
from slp.model import build_params
from slp.util import ByteReader, atomic_write, pack_blob


logger = logging.getLogger(__name__)

MAGIC = b'SLPCKPT1'
VERSION = 1
HEADER = '<5I'


class Checkpoint(object):
    """
    Everything needed to continue training exactly where it stopped: the
    parameter values, both configurations, the stage and the number of
    epochs completed in it, optimizer moments and the generator state.
    """

    def __init__(self, params, model_config, train_config, stage, epoch,
                 rng_state, optimizer=None, schedule=None, history=None):
        self.params = OrderedDict(params)
        self.model_config = model_config
        self.train_config = train_config
        self.stage = stage
        self.epoch = epoch
        self.rng_state = rng_state
        self.optimizer = optimizer or {'lr': train_config.learning_rate, 'step': 0, 'm': {}, 'v': {}}
        self.schedule = schedule or {'window': []}
        self.history = list(history or [])

    @property
    def complete(self):
        """ True once every epoch of ``stage`` has run """
        return self.epoch >= self.train_config.epochs(self.stage)

    def _meta(self):
        return OrderedDict([
            ('model', self.model_config.as_dict()),
            ('train', self.train_config.as_dict()),
            ('optimizer', {'lr': self.optimizer['lr'], 'step': self.optimizer['step']}),
            ('schedule', self.schedule),
            ('history', self.history),
        ])

    def dumps(self):
        moments = OrderedDict()
        for kind in ('m', 'v'):
            for name, value in self.optimizer[kind].items():
                moments['adam.%s.%s' % (kind, name)] = value
        chunks = [MAGIC, struct.pack(HEADER, VERSION, self.stage, self.epoch,
                                     len(self.params), len(moments))]
        for table in (self.params, moments):
            for name, value in table.items():
                chunks.append(_pack_tensor(name, value))
        chunks.append(pack_blob(json.dumps(self._meta(), sort_keys=True).encode('utf-8')))
        chunks.append(pack_blob(json.dumps(self.rng_state, sort_keys=True).encode('utf-8')))
        return b''.join(chunks)

    def save(self, path):
        atomic_write(path, self.dumps())
        logger.info('checkpoint stage %s epoch %s written to %s', self.stage, self.epoch, path)

    @classmethod
    def loads(cls, data):
        if data[:len(MAGIC)] != MAGIC:
            raise MagicMismatch(MAGIC, data[:len(MAGIC)])
        reader = ByteReader(data)
        reader.offset = len(MAGIC)
        if reader.remaining < struct.calcsize(HEADER):
            raise MalformedHeader('checkpoint header is incomplete')
        version, stage, epoch, n_params, n_moments = reader.unpack(HEADER)
        if version != VERSION:
            raise IncompatibleVersion('checkpoint version %s is not supported (expected %s)' % (
                version, VERSION))
        if stage not in (1, 2, 3):
            raise MalformedHeader('checkpoint stage %s is not 1, 2 or 3' % stage)
        params = OrderedDict(_read_tensor(reader) for _ in range(n_params))
        optimizer = {'m': OrderedDict(), 'v': OrderedDict()}
        for _ in range(n_moments):
            name, value = _read_tensor(reader)
            prefix, kind, param = name.split('.', 2)
            if prefix != 'adam' or kind not in ('m', 'v'):
                raise MalformedHeader('unexpected optimizer tensor %s' % name)
            optimizer[kind][param] = value
        try:
            meta = json.loads(reader.blob().decode('utf-8'))
            rng_state = json.loads(reader.blob().decode('utf-8'))
        except ValueError as e:
            raise MalformedHeader('checkpoint metadata is unreadable: %s' % e)
        if reader.remaining:
            raise DataError('%s trailing bytes after checkpoint' % reader.remaining)
        optimizer.update(meta['optimizer'])
        return cls(
            params, ModelConfig.from_dict(meta['model']), TrainConfig.from_dict(meta['train']),
            stage, epoch, rng_state, optimizer, meta['schedule'], meta['history'])

    @classmethod
    def load(cls, path):
        try:
            with open(path, 'rb') as f:
                data = f.read()
        except (IOError, OSError) as error:
            raise DataError('unable to read checkpoint %s: %s' % (path, error))
        checkpoint = cls.loads(data)
        logger.info('loaded checkpoint stage %s epoch %s from %s', checkpoint.stage, checkpoint.epoch, path)
        return checkpoint

    def restore(self, params):
        """ Write the stored values into a :class:`~slp.params.ModelParams` """
        params.load(self.params)
        return params

    def __repr__(self):
        return '<Checkpoint stage=%s epoch=%s tensors=%s>' % (self.stage, self.epoch, len(self.params))


def _pack_tensor(name, value):
    value = np.asarray(value, dtype='<f8')
    encoded = name.encode('utf-8')
    header = struct.pack('<I', len(encoded)) + encoded
    header += struct.pack('<I%sI' % value.ndim, value.ndim, *value.shape)
    return header + value.tobytes()


def _read_tensor(reader):
    size, = reader.unpack('<I')
    try:
        name = reader.read(size).decode('utf-8')
    except UnicodeDecodeError:
        raise MalformedHeader('tensor name at offset %s is not utf-8' % reader.offset)
    ndim, = reader.unpack('<I')
    shape = reader.unpack('<%sI' % ndim)
    count = int(np.prod(shape)) if shape else 1
    return name, reader.array('<f8', count, shape)


def model_params_from(checkpoint):
    """ Build a parameter set shaped by the checkpoint's model config and fill it """
    params = build_params(checkpoint.model_config)
    if set(params) != set(checkpoint.params):
        raise ContractError('checkpoint tensors do not match the model configuration')
    return checkpoint.restore(params)
