"""Tests for the assembled model"""
import numpy as np
import pytest

from fatformer import ops
from fatformer.errors import ConfigError, ContractError, DataError
from fatformer.fusion import (
    ALTERNATING,
    AUDIO,
    FULLFRAME_INTERLOCUTOR,
    FULLFRAME_TARGET,
    METADATA,
    TRANSCRIPT,
)
from fatformer.model import (
    CLASSIFICATION,
    FACE_ONLY,
    FatModel,
    ModelInput,
    classification_head,
    face_branch_forward,
    fullframe_branch_forward,
    model_forward,
    stage_rows,
    token_grids,
    validate_model_config,
)
from fatformer.tensor import BACKBONE

from .helpers import half_foreground, random_input, tiny_model


def _predict(cfg, sample, seed=0, prepare=None):
    model = FatModel(cfg, seed=seed).eval()
    if prepare is not None:
        prepare(model)
    return model(sample).data


def _sample(cfg, seed=0, seg=None):
    rng = np.random.default_rng(seed)
    if seg is None:
        seg = half_foreground(cfg)
    return random_input(cfg, rng, batch=1, seg=seg)


class TestOutputs(object):
    """Prediction shapes"""

    def test_regression(self):
        """Regression predicts five traits per sample."""
        cfg = tiny_model()

        assert _predict(cfg, random_input(cfg, np.random.default_rng(0), batch=2)).shape == (2, 5)

    def test_classification(self):
        """Classification predicts one logit per class."""
        cfg = tiny_model(task=CLASSIFICATION, classes=4)

        assert _predict(cfg, _sample(cfg)).shape == (1, 4)

    def test_same_seed_same_model(self):
        """Construction is deterministic in the seed."""
        cfg = tiny_model()
        sample = _sample(cfg)

        assert np.array_equal(_predict(cfg, sample, seed=3), _predict(cfg, sample, seed=3))
        assert not np.allclose(_predict(cfg, sample, seed=3), _predict(cfg, sample, seed=4))

    def test_model_forward(self):
        """The functional entry point matches calling the model."""
        cfg = tiny_model()
        model = FatModel(cfg).eval()
        sample = _sample(cfg)

        assert np.array_equal(model_forward(model, sample).data, model(sample).data)
        assert face_branch_forward(model, sample).shape == (1, 16, 2, 2, 2)


def _zero_pass_through(model):
    forcing = model.face.input_forcing
    if hasattr(forcing, 'gamma'):
        forcing.gamma.data[:] = 0.0


@pytest.mark.parametrize('variant', ['a', 'b', 'c', 'd', 'e'])
def test_untrained_forcing_changes_nothing(variant):
    """Freshly initialized forcing leaves predictions as without forcing."""
    cfg = tiny_model()
    sample = _sample(cfg)

    expected = _predict(cfg._replace(forced_variant='off'), sample)
    actual = _predict(cfg._replace(forced_variant=variant), sample, prepare=_zero_pass_through)

    assert np.allclose(actual, expected, atol=1e-12, rtol=0)


def _randomize_forcing(model):
    rng = np.random.default_rng(99)
    forcing = model.face.input_forcing
    if forcing is not None and hasattr(forcing, 'weight'):
        forcing.weight.data[:, -1] = rng.standard_normal(forcing.weight.shape[0])
    elif forcing is not None:
        forcing.gamma.data[:] = 2.5
    if model.face.position is not None:
        model.face.position.w1.data = rng.standard_normal(model.face.position.w1.shape)
    for block in model.face.blocks():
        for hook in (block.linear_bias, block.attn_bias):
            if hook is not None:
                for p in hook.parameters():
                    p.data = rng.standard_normal(p.shape)


@pytest.mark.parametrize('variant', ['a', 'b', 'c', 'd', 'e'])
def test_background_map_changes_nothing(variant):
    """An all-background map leaves predictions as without forcing, whatever the weights."""
    cfg = tiny_model()
    sample = _sample(cfg, seg=np.zeros((1, 16, 16)))

    expected = _predict(cfg._replace(forced_variant='off'), sample)
    actual = _predict(cfg._replace(forced_variant=variant), sample, prepare=_randomize_forcing)

    assert np.allclose(actual, expected, atol=1e-12, rtol=0)


@pytest.mark.parametrize('variant', ['a', 'b', 'c', 'd', 'e'])
def test_trained_forcing_reads_the_map(variant):
    """Once its weights move, forcing makes the prediction depend on the map."""
    cfg = tiny_model(forced_variant=variant)
    top = _sample(cfg, seg=half_foreground(cfg))
    bottom = top._replace(seg=1.0 - top.seg)

    first = _predict(cfg, top, prepare=_randomize_forcing)
    second = _predict(cfg, bottom, prepare=_randomize_forcing)

    assert not np.allclose(first, second)


def test_attention_bias_learns_from_mixed_windows():
    """Adapters of windows that mix foreground and background receive gradient."""
    cfg = tiny_model(forced_variant='c')
    model = FatModel(cfg)

    ops.sum(model(_sample(cfg))).backward()

    adapters = [block.attn_bias.adapter for block in model.face.stages[1]]
    assert sum(np.abs(a.grad).sum() for a in adapters) > 0.0


def test_forcing_needs_map():
    """A forced model without a map is misconfigured."""
    cfg = tiny_model()
    sample = _sample(cfg)._replace(seg=None)

    with pytest.raises(ConfigError):
        _predict(cfg, sample)


def test_missing_modality():
    """Active modalities must be present."""
    cfg = tiny_model()
    sample = _sample(cfg)._replace(audio=None)

    with pytest.raises(DataError):
        _predict(cfg, sample)


def test_unused_modalities_ignored():
    """Inputs the model does not read make no difference."""
    cfg = tiny_model(modalities=())
    rng = np.random.default_rng(5)
    face = rng.standard_normal((1, 3, 4, 16, 16))
    seg = half_foreground(cfg)

    bare = ModelInput(face=face, seg=seg)
    full = _sample(cfg)._replace(face=face, seg=seg)

    assert np.array_equal(_predict(cfg, bare), _predict(cfg, full))


def test_zero_init_fusion_changes_nothing():
    """An untrained fusion stage computes what the plain stage does."""
    cfg = tiny_model(fusion=tiny_model().fusion._replace(zero_init=True))
    sample = _sample(cfg)

    with_audio = _predict(cfg, sample)
    without = _predict(cfg._replace(modalities=()), sample)

    assert np.allclose(with_audio, without, atol=1e-12, rtol=0)


class TestStageRows(object):
    """Chunk rows per stage"""

    def test_static_map(self):
        """A static map gives constant rows over time at every stage."""
        cfg = tiny_model()

        rows = stage_rows(half_foreground(cfg, batch=2), cfg)

        assert [r.shape for r in rows] == [(2, 2, 4, 4, 8), (2, 2, 2, 2, 16)]
        assert np.all(rows[0][:, :, :2] == 1.0) and np.all(rows[0][:, :, 2:] == 0.0)
        assert np.all(rows[1][:, :, 0] == 1.0) and np.all(rows[1][:, :, 1] == 0.0)

    def test_per_frame_map(self):
        """Per-frame maps are chunked in time as well."""
        cfg = tiny_model(seg_per_frame=True)
        seg = np.zeros((1, 4, 16, 16))
        seg[0, 3, 0, 0] = 1.0

        rows = stage_rows(seg, cfg)[0][0, ..., 0]

        assert rows[0].sum() == 0.0
        assert rows[1].tolist() == [[1.0, 1.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0],
                                    [0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]]

    def test_rank(self):
        """Maps must be batched."""
        with pytest.raises(DataError):
            stage_rows(np.zeros((16, 16)), tiny_model())

    def test_rank_follows_setting(self):
        """Static models reject per-frame maps and per-frame models reject static ones."""
        with pytest.raises(DataError):
            stage_rows(np.zeros((1, 4, 16, 16)), tiny_model())
        with pytest.raises(DataError):
            stage_rows(np.zeros((1, 16, 16)), tiny_model(seg_per_frame=True))


class TestBranches(object):
    """Branch wiring"""

    def test_fullframe_shares_backbone(self):
        """Full-frame branches reuse the face branch's backbone."""
        model = FatModel(tiny_model(modalities=(FULLFRAME_TARGET,)))

        assert model.fullframe[FULLFRAME_TARGET].backbone is model.backbone
        assert model.face.backbone is model.backbone

    def test_late_fusion_widths(self):
        """Concatenated late fusion widens the head by one width per full-frame branch."""
        modalities = (FULLFRAME_TARGET, FULLFRAME_INTERLOCUTOR)

        assert FatModel(tiny_model(modalities=modalities)).head.weight.shape == (48, 5)
        assert FatModel(tiny_model(modalities=modalities,
                                   late_fusion=FACE_ONLY)).head.weight.shape == (16, 5)

    def test_fullframe_forward(self):
        """A full-frame branch returns a channels-first grid; inactive ones are refused."""
        cfg = tiny_model(modalities=(FULLFRAME_TARGET,))
        model = FatModel(cfg).eval()
        video = np.zeros((1, 3, 4, 16, 16))

        assert fullframe_branch_forward(model, video).shape == (1, 16, 2, 2, 2)
        with pytest.raises(ConfigError):
            fullframe_branch_forward(model, video, FULLFRAME_INTERLOCUTOR)

    def test_fullframe_sides_run(self):
        """Both full-frame sides and the text sides can be fused at once."""
        cfg = tiny_model(
            modalities=(FULLFRAME_TARGET, FULLFRAME_INTERLOCUTOR, AUDIO, TRANSCRIPT, METADATA),
            fusion=tiny_model().fusion._replace(
                order=(FULLFRAME_TARGET, FULLFRAME_INTERLOCUTOR, AUDIO, TRANSCRIPT)))

        assert _predict(cfg, _sample(cfg)).shape == (1, 5)

    def test_without_backbone(self):
        """Without the backbone, raw cubes are embedded directly."""
        cfg = tiny_model(use_backbone=False)
        model = FatModel(cfg).eval()

        assert model.backbone is None
        assert all(p.group != BACKBONE for p in model.parameters())
        assert model(_sample(cfg)).shape == (1, 5)

    def test_alternating_fusion(self):
        """Alternating fusion gives each last-stage block one side."""
        cfg = tiny_model(
            modalities=(AUDIO, TRANSCRIPT),
            stages=tiny_model().stages._replace(depths=(1, 2)),
            fusion=tiny_model().fusion._replace(order=(AUDIO, TRANSCRIPT), mode=ALTERNATING))

        orders = [block.cfg.order for block in FatModel(cfg).face.fusions]

        assert orders == [(AUDIO,), (TRANSCRIPT,)]

    def test_inactive_sides_dropped_from_order(self):
        """Sides in the fusion order that are not active are skipped."""
        cfg = tiny_model(fusion=tiny_model().fusion._replace(order=(TRANSCRIPT, AUDIO)))

        assert sorted(FatModel(cfg).projections) == [AUDIO]


class TestValidation(object):
    """Model configuration checks"""

    @pytest.mark.parametrize('changes', [
        {'task': 'ranking'},
        {'task': CLASSIFICATION, 'classes': 1},
        {'forced_variant': 'z'},
        {'late_fusion': 'average'},
        {'modalities': ('smell',)},
        {'modalities': (FULLFRAME_INTERLOCUTOR,)},
        {'modalities': (METADATA,)},
        {'patch_size': 6},
        {'input_shape': (3, 3, 16, 16)},
    ])
    def test_invalid(self, changes):
        """Inconsistent configurations are rejected."""
        with pytest.raises(ConfigError):
            validate_model_config(tiny_model(**changes))

    def test_widths_double(self):
        """Every stage doubles the width."""
        cfg = tiny_model(stages=tiny_model().stages._replace(widths=(8, 12)))

        with pytest.raises(ConfigError):
            validate_model_config(cfg)

    def test_token_grids(self):
        """Token grids halve spatially from stage to stage."""
        assert token_grids(tiny_model()) == [(2, 4, 4), (2, 2, 2)]


def test_head_needs_outputs():
    """The head pools at least one branch."""
    cfg = tiny_model()

    with pytest.raises(ContractError):
        classification_head([], FatModel(cfg).head, cfg)
