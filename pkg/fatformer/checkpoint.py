"""
Binary checkpoints.

A checkpoint stores the experiment configuration as text followed by every parameter of the
model, in the order the model names them. All integers are little-endian::

    magic         8 bytes   b'FATCKPT1'
    config        u32 length, UTF-8 text
    count         u32
    count records:
        name      u32 length, UTF-8 text
        group     u8        0 backbone, 1 transformer
        rank      u32
        extents   rank x u64
        size      u64       byte count of the data
        data      size bytes of float64

A sibling ``<name>.manifest`` file lists the names, shapes and groups in the configuration
format. Nothing time-dependent is written, so identical models give identical files.
"""
from collections import OrderedDict
import io
import logging
import os
import struct
from typing import (  # noqa pylint: disable=unused-import
    Any,
    Dict,
    List,
    NamedTuple,
    Tuple,
)

import numpy as np

from . import declconf as conf
from .errors import DataError
from .nn import Module
from .tensor import BACKBONE, TRANSFORMER


_logger = logging.getLogger(__name__)

MAGIC = b'FATCKPT1'

_GROUP_CODES = {BACKBONE: 0, TRANSFORMER: 1}
_GROUPS_BY_CODE = {code: group for group, code in _GROUP_CODES.items()}


ParameterRecord = NamedTuple('ParameterRecord', [
    ('name', str),
    ('group', str),
    ('data', np.ndarray),
])


Checkpoint = NamedTuple('Checkpoint', [
    ('config_text', str),
    ('records', List[ParameterRecord]),
])


_MANIFEST_PROCESSOR = conf.dictionary('checkpoint', [
    conf.string('format'),
    conf.integer('count'),
    conf.array(conf.string('names')),
    conf.array(conf.string('shapes')),
    conf.array(conf.string('groups')),
])


def manifest_path(path):
    # type: (str) -> str
    """
    Return the path of the manifest written next to a checkpoint.

    >>> manifest_path('runs/best.ckpt')
    'runs/best.manifest'
    """
    return os.path.splitext(path)[0] + '.manifest'


def encode_checkpoint(checkpoint):
    # type: (Checkpoint) -> bytes
    """Encode a checkpoint to its binary layout."""
    out = io.BytesIO()
    out.write(MAGIC)
    _write_text(out, checkpoint.config_text)
    out.write(struct.pack('<I', len(checkpoint.records)))

    for record in checkpoint.records:
        data = np.ascontiguousarray(record.data, dtype='<f8')
        _write_text(out, record.name)
        out.write(struct.pack('<B', _GROUP_CODES[record.group]))
        out.write(struct.pack('<I', data.ndim))
        out.write(struct.pack('<{}Q'.format(data.ndim), *data.shape))
        payload = data.tobytes()
        out.write(struct.pack('<Q', len(payload)))
        out.write(payload)

    return out.getvalue()


def decode_checkpoint(raw):
    # type: (bytes) -> Checkpoint
    """
    Decode the binary layout.

    :raises DataError: if the magic is wrong, the data is truncated or a record is inconsistent.
    """
    reader = _Reader(raw)
    if reader.take(len(MAGIC)) != MAGIC:
        raise DataError('Not a checkpoint: bad magic')

    config_text = reader.text()
    count = reader.unpack('<I')[0]
    records = []  # type: List[ParameterRecord]
    for _ in range(count):
        name = reader.text()
        code = reader.unpack('<B')[0]
        if code not in _GROUPS_BY_CODE:
            raise DataError('Parameter "{}" has unknown group code {}'.format(name, code))
        rank = reader.unpack('<I')[0]
        shape = reader.unpack('<{}Q'.format(rank)) if rank else ()
        size = reader.unpack('<Q')[0]
        if size != 8 * int(np.prod(shape, dtype=np.int64)):
            raise DataError('Parameter "{}" of shape {} holds {} bytes'.format(
                name, tuple(shape), size))
        data = np.frombuffer(reader.take(size), dtype='<f8').astype(np.float64).reshape(shape)
        records.append(ParameterRecord(name=name, group=_GROUPS_BY_CODE[code], data=data))

    if not reader.done():
        raise DataError('Checkpoint has trailing bytes')
    return Checkpoint(config_text=config_text, records=records)


def model_checkpoint(model, config_text):
    # type: (Module, str) -> Checkpoint
    """Capture a model's parameters together with the configuration it was built from."""
    records = [ParameterRecord(name=name, group=p.group, data=p.data.copy())
               for name, p in model.named_parameters()]
    return Checkpoint(config_text=config_text, records=records)


def save_checkpoint(path, model, config_text):
    # type: (str, Module, str) -> None
    """Write a checkpoint and its manifest."""
    checkpoint = model_checkpoint(model, config_text)
    with open(path, 'wb') as checkpoint_file:
        checkpoint_file.write(encode_checkpoint(checkpoint))

    manifest = OrderedDict([
        ('format', MAGIC.decode('ascii')),
        ('count', len(checkpoint.records)),
        ('names', [r.name for r in checkpoint.records]),
        ('shapes', ['x'.join(str(n) for n in r.data.shape) or 'scalar'
                    for r in checkpoint.records]),
        ('groups', [r.group for r in checkpoint.records]),
    ])
    conf.serialize_to_file(_MANIFEST_PROCESSOR, manifest, manifest_path(path))
    _logger.debug('Saved %d parameters to %s', len(checkpoint.records), path)


def read_checkpoint(path):
    # type: (str) -> Checkpoint
    """Read a checkpoint file."""
    try:
        with open(path, 'rb') as checkpoint_file:
            raw = checkpoint_file.read()
    except (IOError, OSError) as error:
        raise DataError('Cannot read checkpoint "{}": {}'.format(path, error))
    return decode_checkpoint(raw)


def read_manifest(path):
    # type: (str) -> Dict[str, Any]
    """Read the manifest of a checkpoint."""
    return conf.parse_from_file(_MANIFEST_PROCESSOR, manifest_path(path))


def state_of(checkpoint):
    # type: (Checkpoint) -> Dict[str, np.ndarray]
    """Return the parameter values keyed by name, for ``Module.load_state_dict``."""
    return OrderedDict((record.name, record.data) for record in checkpoint.records)


def restore(model, checkpoint):
    # type: (Module, Checkpoint) -> None
    """Load the parameters of a checkpoint into a model of the same configuration."""
    groups = {name: p.group for name, p in model.named_parameters()}
    for record in checkpoint.records:
        if groups.get(record.name, record.group) != record.group:
            raise DataError('Parameter "{}" is in group {} but the checkpoint says {}'.format(
                record.name, groups[record.name], record.group))
    try:
        model.load_state_dict(state_of(checkpoint))
    except ValueError as error:
        raise DataError('Checkpoint does not fit the model: {}'.format(error))


def _write_text(out, text):
    # type: (io.BytesIO, str) -> None
    encoded = text.encode('utf-8')
    out.write(struct.pack('<I', len(encoded)))
    out.write(encoded)


class _Reader(object):
    """Sequential reader that reports truncation as a DataError."""

    def __init__(self, raw):
        # type: (bytes) -> None
        self._raw = raw
        self._offset = 0

    def take(self, count):
        # type: (int) -> bytes
        end = self._offset + count
        if end > len(self._raw):
            raise DataError('Checkpoint is truncated at byte {}'.format(self._offset))
        chunk = self._raw[self._offset:end]
        self._offset = end
        return chunk

    def unpack(self, fmt):
        # type: (str) -> Tuple[int, ...]
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self):
        # type: () -> str
        length = self.unpack('<I')[0]
        try:
            return self.take(length).decode('utf-8')
        except UnicodeDecodeError as error:
            raise DataError('Checkpoint text is not UTF-8: {}'.format(error))

    def done(self):
        # type: () -> bool
        return self._offset == len(self._raw)
