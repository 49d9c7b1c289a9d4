"""Contains helper functions for unit tests"""
import os

import numpy as np
import pytest

from fatformer import declconf as conf
from fatformer.config import DataConfig, ExperimentConfig, OptimizerConfig, OutputConfig
from fatformer.data import GenerationSpec
from fatformer.gradcheck import tiny_model_config
from fatformer.model import ModelInput


slow = pytest.mark.skipif(not os.environ.get('FATFORMER_SLOW'),
                          reason='set FATFORMER_SLOW=1 to run desk-scale experiments')


def assert_can_roundtrip_config_value(processor, value):
    """Assert that a value can be converted to and from a document."""
    text = conf.serialize_to_string(processor, value)
    actual_value = conf.parse_from_string(processor, text)

    assert value == actual_value


def tiny_spec():
    """Generation spec matching tiny_model(): 3 x 4 x 16 x 16 clips, 3 classes."""
    return GenerationSpec(
        channels=3, frames=4, height=16, width=16,
        radius_min=1, radius_max=2,
        max_speed=1.0,
        intensity_min=0.5, intensity_max=1.0,
        max_cycles=1,
        noise=0.3,
        side_tokens=2, audio_width=5, transcript_width=5, meta_width=2,
        side_redundancy=0.5,
        classes=3,
        class_weights=(),
    )


def tiny_model(**changes):
    """A two-stage model small enough to train in a test, reading the audio side."""
    spec = tiny_spec()
    cfg = tiny_model_config()._replace(
        classes=spec.classes, audio_width=spec.audio_width,
        transcript_width=spec.transcript_width, meta_width=spec.meta_width)
    return cfg._replace(**changes)


def tiny_experiment(epochs=1, **model_changes):
    """An experiment over tiny_model() and eight tiny_spec() samples."""
    return ExperimentConfig(
        name='tiny',
        seed=0,
        seeds=1,
        ablation='full',
        model=tiny_model(**model_changes),
        data=DataConfig(samples=8, split=0.75, seed=0, balanced=False, spec=tiny_spec()),
        optimizer=OptimizerConfig(lr_transformer=1e-3, lr_backbone=1e-4, weight_decay=0.01,
                                  epochs=epochs, batch_size=4),
        outputs=OutputConfig(directory='runs'),
    )


def random_input(cfg, rng, batch=2, seg=None, per_frame=False):
    """A random batch for a model configuration, with every side input it could read."""
    channels, frames, height, width = cfg.input_shape
    video_shape = (batch, channels, frames, height, width)
    if seg is None:
        seg_shape = (batch, frames, height, width) if per_frame else (batch, height, width)
        seg = (rng.random(seg_shape) > 0.5).astype(np.float64)

    return ModelInput(
        face=rng.standard_normal(video_shape) * 0.5,
        seg=seg,
        fullframe_target=rng.standard_normal(video_shape) * 0.5,
        fullframe_interlocutor=rng.standard_normal(video_shape) * 0.5,
        audio=rng.standard_normal((batch, 2, cfg.audio_width)),
        transcript=rng.standard_normal((batch, 3, cfg.transcript_width)),
        metadata=rng.standard_normal((batch, cfg.meta_width)),
    )


def half_foreground(cfg, batch=1):
    """Static maps whose top half is foreground."""
    _, _, height, width = cfg.input_shape
    seg = np.zeros((batch, height, width))
    seg[:, :height // 2] = 1.0
    return seg
