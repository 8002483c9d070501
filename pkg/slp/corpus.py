"""
Synthetic grounding corpus and its binary file format.

Every activity has a unit axis code vector. Frames inside the ground truth
interval carry the queried activity's code, every other frame carries the code
of some other activity, and query words carry the queried code; everything
gets Gaussian noise. Example ``i`` is drawn from its own counter-based stream
keyed by ``(seed, i)``, so any example can be regenerated on its own and the
corpus does not depend on generation order.

File layout (little endian)::

    8 bytes   magic "SLPCORP1"
    5 × u32   version, count, T, N, d_in
    count ×   u32 activity_id, u32 start, u32 end,
              f32[T × d_in] features, f32[N × d_in] query
"""
import logging
import struct

import numpy as np

from slp.exceptions import (
    DataError, DimensionError, IncompatibleVersion, MagicMismatch, MalformedHeader
)
from slp.peruse import Segment
from slp.util import ByteReader, atomic_write


logger = logging.getLogger(__name__)

MAGIC = b'SLPCORP1'
VERSION = 1
HEADER = '<5I'
RECORD = '<3I'


class ExampleRecord(object):

    def __init__(self, features, query, gt, activity_id):
        self.features = np.asarray(features, dtype=np.float64)
        self.query = np.asarray(query, dtype=np.float64)
        self.gt = gt
        self.activity_id = int(activity_id)
        if self.features.ndim != 2 or self.query.ndim != 2 or \
                self.features.shape[1] != self.query.shape[1]:
            raise DimensionError('example', self.features.shape, self.query.shape)
        gt.validate(self.features.shape[0])

    @property
    def T(self):
        return self.features.shape[0]

    @property
    def N(self):
        return self.query.shape[0]

    @property
    def d_in(self):
        return self.features.shape[1]

    def __eq__(self, other):
        return (isinstance(other, ExampleRecord) and
                self.activity_id == other.activity_id and
                self.gt == other.gt and
                np.array_equal(self.features, other.features) and
                np.array_equal(self.query, other.query))

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return '<ExampleRecord activity=%s gt=[%s, %s] T=%s N=%s>' % (
            self.activity_id, self.gt.start, self.gt.end, self.T, self.N)


def example_rng(seed, index):
    return np.random.Generator(np.random.Philox(key=(int(index) << 64) | int(seed)))


def interval_count(config):
    return sum(config.T - length + 1 for length in range(config.min_len, config.max_len + 1))


def nth_interval(config, k):
    """ The k-th (start, length) pair, ordered by length then start """
    for length in range(config.min_len, config.max_len + 1):
        starts = config.T - length + 1
        if k < starts:
            return k, length
        k -= starts
    raise IndexError('interval %s out of range' % k)


def generate_example(config, index):
    rng = example_rng(config.seed, index)
    activity = int(rng.integers(config.vocab))
    start, length = nth_interval(config, int(rng.integers(interval_count(config))))
    end = start + length - 1

    codes = np.eye(config.vocab, config.d_in)
    others = rng.integers(config.vocab - 1, size=config.T)
    # shift past the queried activity so background never repeats it
    background = others + (others >= activity)
    labels = background.copy()
    labels[start:end + 1] = activity

    features = codes[labels] + config.noise_sigma * rng.standard_normal((config.T, config.d_in))
    query = codes[[activity] * config.N] + config.noise_sigma * rng.standard_normal((config.N, config.d_in))
    return ExampleRecord(
        features.astype(np.float32).astype(np.float64),
        query.astype(np.float32).astype(np.float64),
        Segment(start, end),
        activity,
    )


def generate_corpus(config, count=None, offset=0):
    count = config.count if count is None else count
    return [generate_example(config, offset + i) for i in range(count)]


def dump_corpus(records, dims=None):
    if dims is None:
        dims = (records[0].T, records[0].N, records[0].d_in) if records else (0, 0, 0)
    T, N, d_in = dims
    chunks = [MAGIC, struct.pack(HEADER, VERSION, len(records), T, N, d_in)]
    for record in records:
        if (record.T, record.N, record.d_in) != (T, N, d_in):
            raise DimensionError('corpus record', (record.T, record.N, record.d_in), dims)
        chunks.append(struct.pack(RECORD, record.activity_id, record.gt.start, record.gt.end))
        chunks.append(record.features.astype('<f4').tobytes())
        chunks.append(record.query.astype('<f4').tobytes())
    return b''.join(chunks)


def save_corpus(path, records, dims=None):
    atomic_write(path, dump_corpus(records, dims))
    logger.info('wrote %s examples to %s', len(records), path)


def parse_corpus(data):
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise MagicMismatch(MAGIC, data[:len(MAGIC)])
    reader = ByteReader(data)
    reader.offset = len(MAGIC)
    if reader.remaining < struct.calcsize(HEADER):
        raise MalformedHeader('corpus header needs %s bytes, found %s' % (
            struct.calcsize(HEADER), reader.remaining))
    version, count, T, N, d_in = reader.unpack(HEADER)
    if version != VERSION:
        raise IncompatibleVersion('corpus version %s is not supported (expected %s)' % (version, VERSION))
    if count and not (T and N and d_in):
        raise MalformedHeader('corpus header has %s records with T=%s N=%s d_in=%s' % (count, T, N, d_in))
    records = []
    for _ in range(count):
        activity, start, end = reader.unpack(RECORD)
        features = reader.array('<f4', T * d_in, (T, d_in))
        query = reader.array('<f4', N * d_in, (N, d_in))
        if not start <= end < T:
            raise MalformedHeader('record %s has ground truth [%s, %s] outside %s frames' % (
                len(records), start, end, T))
        records.append(ExampleRecord(features, query, Segment(start, end), activity))
    if reader.remaining:
        raise DataError('%s trailing bytes after %s records' % (reader.remaining, count))
    return records


def load_corpus(path):
    try:
        with open(path, 'rb') as f:
            data = f.read()
    except (IOError, OSError) as error:
        raise DataError('unable to read corpus %s: %s' % (path, error))
    records = parse_corpus(data)
    logger.info('loaded %s examples from %s', len(records), path)
    return records
