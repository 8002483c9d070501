from xml.etree import ElementTree
import json
import logging
import os
import platform
import struct
import tempfile
import warnings

import numpy as np
import pecan
from pecan import configuration
from pecan.configuration import Config

from slp.exceptions import ConfigError, TruncatedPayload

try:
    from logging.config import dictConfig as load_logging_config
except ImportError:
    from logutils.dictconfig import dictConfig as load_logging_config  # noqa


logger = logging.getLogger(__name__)

__version__ = '0.1'


def configure_logging():
    logging_conf = pecan.conf.get('logging', {})
    debug = pecan.conf.get('debug', False)
    if logging_conf:
        if debug:
            logging.captureWarnings(True)
            warnings.simplefilter("default", DeprecationWarning)
        if isinstance(logging_conf, Config):
            logging_conf = logging_conf.to_dict()
        if 'version' not in logging_conf:
            logging_conf['version'] = 1
        load_logging_config(logging_conf)


def load_config(path=None):
    """
    Make ``path`` the active pecan configuration. A ``.json`` path is read as
    a run manifest and its recorded ``config`` becomes the configuration,
    which is how a run is reproduced from its manifest. Without a path the
    configuration shipped in ``config/config.py`` is used when present.
    """
    if path is None:
        here = os.path.abspath(os.path.dirname(__file__))
        default = os.path.abspath(os.path.join(here, '../config/config.py'))
        path = os.environ.get('SLP_CONFIG', default if os.path.exists(default) else None)
    if path is None:
        pecan.set_config({}, overwrite=True)
        return pecan.conf
    if not os.path.exists(path):
        raise ConfigError('configuration file does not exist: %s' % path)
    if path.endswith('.json'):
        with open(path) as f:
            try:
                manifest = json.load(f)
            except ValueError as e:
                raise ConfigError('unreadable manifest %s: %s' % (path, e))
        if 'config' not in manifest:
            raise ConfigError('manifest %s has no recorded config' % path)
        pecan.set_config(manifest['config'], overwrite=True)
    else:
        try:
            pecan.set_config(configuration.conf_from_file(path).to_dict(), overwrite=True)
        except (SyntaxError, ImportError, RuntimeError) as e:
            raise ConfigError('unable to load configuration %s: %s' % (path, e))
    logger.debug('configuration loaded from %s', path)
    return pecan.conf


def get_section(name):
    """ A configuration section as a plain dict, empty when it is missing """
    try:
        section = pecan.conf[name]
    except KeyError:
        return {}
    try:
        return section.to_dict()
    except AttributeError:
        return dict(section)


def build_id():
    return 'slp-%s numpy-%s python-%s' % (__version__, np.__version__, platform.python_version())


def atomic_write(path, data):
    """
    Write ``data`` (bytes or text) next to ``path`` and rename it into place,
    so readers never see a partially written file.
    """
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        os.makedirs(directory)
    mode = 'wb' if isinstance(data, bytes) else 'w'
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.%s.' % os.path.basename(path))
    try:
        with os.fdopen(fd, mode) as f:
            f.write(data)
        os.replace(tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


class ByteReader(object):
    """
    Sequential little-endian reader over a byte string that reports the
    offset of any read running past the end.
    """

    def __init__(self, data):
        self.data = data
        self.offset = 0

    @property
    def remaining(self):
        return len(self.data) - self.offset

    def read(self, size):
        if size > self.remaining:
            raise TruncatedPayload(self.offset, size, self.remaining)
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.read(struct.calcsize(fmt)))

    def array(self, dtype, count, shape):
        dtype = np.dtype(dtype)
        values = np.frombuffer(self.read(dtype.itemsize * count), dtype=dtype)
        return values.reshape(shape).astype(np.float64)

    def blob(self):
        size, = self.unpack('<I')
        return self.read(size)


def pack_blob(data):
    return struct.pack('<I', len(data)) + data


def scores_svg(scores, gt=None, segment=None, width=480, height=120):
    """
    Bar chart of per-frame scores as SVG markup. The ground truth interval is
    shaded green and a predicted segment is outlined in red.
    """
    T = len(scores)
    step = float(width) / T
    svg = ElementTree.Element('svg', {
        'xmlns': 'http://www.w3.org/2000/svg',
        'width': str(width), 'height': str(height),
        'viewBox': '0 0 %s %s' % (width, height),
    })
    if gt is not None:
        ElementTree.SubElement(svg, 'rect', {
            'x': '%.2f' % (gt.start * step), 'y': '0',
            'width': '%.2f' % (gt.length * step), 'height': str(height),
            'fill': '#c8e6c9',
        })
    for t, score in enumerate(scores):
        bar = float(score) * (height - 4)
        ElementTree.SubElement(svg, 'rect', {
            'x': '%.2f' % (t * step + 1), 'y': '%.2f' % (height - bar),
            'width': '%.2f' % max(step - 2, 1), 'height': '%.2f' % bar,
            'fill': '#1565c0',
        })
    if segment is not None:
        ElementTree.SubElement(svg, 'rect', {
            'x': '%.2f' % (segment.start * step), 'y': '1',
            'width': '%.2f' % (segment.length * step), 'height': str(height - 2),
            'fill': 'none', 'stroke': '#c62828', 'stroke-width': '2',
        })
    return ElementTree.tostring(svg, encoding='unicode')
