"""Tests for binary checkpoints"""
import numpy as np
import pytest

from fatformer.checkpoint import (
    MAGIC,
    Checkpoint,
    ParameterRecord,
    decode_checkpoint,
    encode_checkpoint,
    manifest_path,
    model_checkpoint,
    read_checkpoint,
    read_manifest,
    restore,
    save_checkpoint,
)
from fatformer.config import dump_experiment
from fatformer.errors import DataError
from fatformer.model import FatModel
from fatformer.tensor import BACKBONE, TRANSFORMER

from .helpers import tiny_experiment, tiny_model


def _small_checkpoint():
    return Checkpoint(config_text='[experiment]\nname = x\n', records=[
        ParameterRecord('a.weight', TRANSFORMER, np.arange(6.0).reshape(2, 3)),
        ParameterRecord('b.gamma', BACKBONE, np.array(2.5)),
    ])


class TestEncoding(object):
    """The binary layout"""

    def test_decode_encoded(self):
        """Decoding recovers names, groups and exact values."""
        checkpoint = _small_checkpoint()

        decoded = decode_checkpoint(encode_checkpoint(checkpoint))

        assert decoded.config_text == checkpoint.config_text
        for expected, actual in zip(checkpoint.records, decoded.records):
            assert (actual.name, actual.group) == (expected.name, expected.group)
            assert actual.data.shape == expected.data.shape
            assert np.array_equal(actual.data, expected.data)

    def test_layout(self):
        """The file starts with the magic and the length-prefixed configuration."""
        raw = encode_checkpoint(_small_checkpoint())

        assert raw[:8] == MAGIC
        assert raw[8:12] == (22).to_bytes(4, 'little')
        assert raw[12:34] == b'[experiment]\nname = x\n'
        assert raw[34:38] == (2).to_bytes(4, 'little')

    def test_bad_magic(self):
        """Other files are rejected."""
        raw = encode_checkpoint(_small_checkpoint())

        with pytest.raises(DataError):
            decode_checkpoint(b'NOTACKPT' + raw[8:])

    def test_truncated(self):
        """Every truncation is detected."""
        raw = encode_checkpoint(_small_checkpoint())

        for end in (4, 20, len(raw) // 2, len(raw) - 1):
            with pytest.raises(DataError):
                decode_checkpoint(raw[:end])

    def test_trailing_bytes(self):
        """Nothing may follow the last record."""
        with pytest.raises(DataError):
            decode_checkpoint(encode_checkpoint(_small_checkpoint()) + b'\x00')


class TestFiles(object):
    """Checkpoint files"""

    def test_manifest_path(self):
        """The manifest sits next to the checkpoint."""
        assert manifest_path('runs/seed1/best.ckpt') == 'runs/seed1/best.manifest'

    def test_restore(self, tmpdir):
        """A restored model predicts what the saved one did."""
        cfg = tiny_model()
        path = str(tmpdir.join('best.ckpt'))
        saved = FatModel(cfg, seed=1)
        save_checkpoint(path, saved, dump_experiment(tiny_experiment()))

        loaded = FatModel(cfg, seed=2)
        restore(loaded, read_checkpoint(path))

        for (name, expected), (other, actual) in zip(saved.named_parameters(),
                                                     loaded.named_parameters()):
            assert name == other
            assert np.array_equal(actual.data, expected.data)

    def test_identical_models_identical_files(self, tmpdir):
        """Nothing time-dependent is written."""
        first, second = str(tmpdir.join('first.ckpt')), str(tmpdir.join('second.ckpt'))

        save_checkpoint(first, FatModel(tiny_model(), seed=3), 'cfg')
        save_checkpoint(second, FatModel(tiny_model(), seed=3), 'cfg')

        with open(first, 'rb') as a, open(second, 'rb') as b:
            assert a.read() == b.read()

    def test_manifest(self, tmpdir):
        """The manifest lists every parameter."""
        path = str(tmpdir.join('best.ckpt'))
        model = FatModel(tiny_model())

        save_checkpoint(path, model, 'cfg')
        manifest = read_manifest(path)

        names = [name for name, _ in model.named_parameters()]
        assert manifest['format'] == 'FATCKPT1'
        assert manifest['count'] == len(names)
        assert manifest['names'] == names
        assert set(manifest['groups']) == {BACKBONE, TRANSFORMER}
        assert len(manifest['shapes']) == len(names)

    def test_missing_file(self, tmpdir):
        """Unreadable checkpoints are data errors."""
        with pytest.raises(DataError):
            read_checkpoint(str(tmpdir.join('absent.ckpt')))

    def test_wrong_model(self):
        """Checkpoints only fit models of their configuration."""
        checkpoint = model_checkpoint(FatModel(tiny_model()), 'cfg')
        other = FatModel(tiny_model(modalities=()))

        with pytest.raises(DataError):
            restore(other, checkpoint)

    def test_wrong_shape(self):
        """Parameters must keep their shapes."""
        model = FatModel(tiny_model())
        checkpoint = model_checkpoint(model, 'cfg')
        first = checkpoint.records[0]
        checkpoint.records[0] = first._replace(data=np.zeros(first.data.shape + (1,)))

        with pytest.raises(DataError):
            restore(model, checkpoint)

    def test_wrong_group(self):
        """Parameters must keep their groups."""
        model = FatModel(tiny_model())
        checkpoint = model_checkpoint(model, 'cfg')
        first = checkpoint.records[0]
        other = TRANSFORMER if first.group == BACKBONE else BACKBONE
        checkpoint.records[0] = first._replace(group=other)

        with pytest.raises(DataError):
            restore(model, checkpoint)
