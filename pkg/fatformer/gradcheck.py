"""
Gradient suite: finite-difference checks of every differentiable operation.

Each check builds, from a random generator, a scalar objective and the tensor it is checked
against. The objective is a fixed random projection of the operation's output, so every output
coordinate contributes to the gradient.

>>> [r.passed for r in run_checks(names=['mul'], seeds=2)]
[True]
"""
from collections import OrderedDict
import logging
from typing import (  # noqa pylint: disable=unused-import
    Callable,
    Dict,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from . import ops
from .attention import (
    SOFTMAX,
    EncoderBlock,
    PatchMerging,
    WindowConfig,
    performer_attention,
    performer_features,
    scaled_dot_product,
)
from .backbone import Backbone, BackboneConfig
from .errors import ContractError
from .forced import (
    LINEAR_BIAS,
    fa_attn_bias,
    fa_channel_concat,
    fa_input_add,
    fa_linear_bias,
    fa_pos_encoding,
)
from .fusion import AUDIO, SEQUENTIAL, CrossAttentionLayer, FusionBlockConfig
from .model import CONCAT_ALL, REGRESSION, FatModel, ModelConfig, ModelInput, StageConfig
from .patching import patchify_segmap
from .tensor import BACKBONE, Tensor, grad_check


_logger = logging.getLogger(__name__)

# The tolerance of single operations; the end-to-end model is checked more loosely.
OP_TOLERANCE = 1e-5
MODEL_TOLERANCE = 1e-4

Objective = Tuple[Callable[[Tensor], Tensor], Tensor]


GradCheck = NamedTuple('GradCheck', [
    ('name', str),
    ('build', Callable[[np.random.Generator], Objective]),
    ('tolerance', float),
])


GradResult = NamedTuple('GradResult', [
    ('name', str),
    ('max_error', float),  # Worst relative error over the seeds.
    ('tolerance', float),
    ('passed', bool),
])


_REGISTRY = OrderedDict()  # type: Dict[str, GradCheck]


def register(name, tolerance=OP_TOLERANCE):
    # type: (str, float) -> Callable
    """Decorator adding an objective builder to the suite."""
    def _register(build):
        if name in _REGISTRY:
            raise ContractError('Gradient check "{}" is registered twice'.format(name))
        _REGISTRY[name] = GradCheck(name=name, build=build, tolerance=tolerance)
        return build

    return _register


def check_names():
    # type: () -> List[str]
    """Return the names of every registered check, in registration order."""
    return list(_REGISTRY)


def run_check(check, seeds=20, base_seed=0):
    # type: (GradCheck, int, int) -> GradResult
    """Run one check once per seed and keep the worst error."""
    worst = 0.0
    for seed in range(base_seed, base_seed + seeds):
        objective, x = check.build(np.random.default_rng(seed))
        worst = max(worst, grad_check(objective, x))
    return GradResult(name=check.name, max_error=worst, tolerance=check.tolerance,
                      passed=worst <= check.tolerance)


def run_checks(names=None, seeds=20, base_seed=0):
    # type: (Optional[Sequence[str]], int, int) -> List[GradResult]
    """
    Run the named checks, or all of them.

    :param names: Subset of :func:`check_names`.
    :param seeds: Random instances per check.
    """
    if names is None:
        names = check_names()
    unknown = [name for name in names if name not in _REGISTRY]
    if unknown:
        raise ContractError('Unknown gradient checks {}, expected some of {}'.format(
            unknown, ', '.join(_REGISTRY)))

    results = []  # type: List[GradResult]
    for name in names:
        check = _REGISTRY[name]
        # The model check is costly; it runs on a few seeds only.
        count = seeds if check.tolerance <= OP_TOLERANCE else min(seeds, 2)
        result = run_check(check, count, base_seed)
        _logger.info('%-24s max rel err %.3e (%s)', name, result.max_error,
                     'ok' if result.passed else 'FAILED')
        results.append(result)
    return results


def _input(rng, *shape):
    # type: (np.random.Generator, int) -> Tensor
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _projected(rng, f, x):
    # type: (np.random.Generator, Callable[[Tensor], Tensor], Tensor) -> Objective
    """Wrap ``f`` into the scalar ``sum(f(x) * r)`` with a fixed random ``r``."""
    weights = {}  # type: Dict[str, np.ndarray]

    def _objective(t):
        out = f(t)
        if 'r' not in weights:
            weights['r'] = rng.standard_normal(out.shape)
        return ops.sum(ops.mul(out, weights['r']))

    return _objective, x


@register('add')
def _check_add(rng):
    other = rng.standard_normal((3, 1))
    return _projected(rng, lambda t: ops.add(t, other), _input(rng, 2, 3, 4))


@register('sub')
def _check_sub(rng):
    other = rng.standard_normal(4)
    return _projected(rng, lambda t: ops.sub(other, t), _input(rng, 3, 4))


@register('mul')
def _check_mul(rng):
    return _projected(rng, lambda t: ops.mul(t, t), _input(rng, 3, 4))


@register('div')
def _check_div(rng):
    denominator = rng.uniform(1.0, 2.0, (3, 4))
    return _projected(rng, lambda t: ops.add(ops.div(t, denominator), ops.div(1.0, t + 4.0)),
                      Tensor(rng.uniform(-1.0, 1.0, (3, 4))))


@register('matmul')
def _check_matmul(rng):
    right = rng.standard_normal((2, 4, 5))
    return _projected(rng, lambda t: ops.matmul(t, right), _input(rng, 2, 3, 4))


@register('exp')
def _check_exp(rng):
    return _projected(rng, ops.exp, _input(rng, 3, 4))


@register('tanh')
def _check_tanh(rng):
    return _projected(rng, ops.tanh, _input(rng, 3, 4))


@register('gelu')
def _check_gelu(rng):
    return _projected(rng, ops.gelu, _input(rng, 3, 4))


@register('sum_mean')
def _check_sum_mean(rng):
    return _projected(rng, lambda t: ops.add(ops.sum(t, axis=1), ops.mean(t, axis=1)),
                      _input(rng, 3, 4, 2))


@register('shapes')
def _check_shapes(rng):
    def _f(t):
        moved = ops.moveaxis(ops.transpose(ops.reshape(t, (4, 6)), (1, 0)), 0, 1)
        return ops.rearrange(moved, 'a (b c) -> c a b', c=2)

    return _projected(rng, _f, _input(rng, 2, 3, 4))


@register('indexing')
def _check_indexing(rng):
    index = np.array([2, 0, 2, 1])

    def _f(t):
        return ops.concat([ops.getitem(t, (slice(1, 3),)), ops.take(t, index)], axis=0)

    return _projected(rng, _f, _input(rng, 3, 5))


@register('pad_roll')
def _check_pad_roll(rng):
    return _projected(rng, lambda t: ops.roll(ops.pad(t, [(1, 0), (0, 2)]), (1, -1), (0, 1)),
                      _input(rng, 3, 4))


@register('softmax')
def _check_softmax(rng):
    return _projected(rng, lambda t: ops.softmax(t, axis=-1), _input(rng, 3, 5))


@register('log_softmax')
def _check_log_softmax(rng):
    return _projected(rng, lambda t: ops.log_softmax(t, axis=0), _input(rng, 4, 3))


@register('linear')
def _check_linear(rng):
    bias = rng.standard_normal(3)
    x = rng.standard_normal((2, 4))
    return _projected(rng, lambda w: ops.linear(x, w, bias), _input(rng, 4, 3))


@register('layer_norm')
def _check_layer_norm(rng):
    gamma = rng.uniform(0.5, 1.5, 6)
    beta = rng.standard_normal(6)
    return _projected(rng, lambda t: ops.layer_norm(t, gamma, beta), _input(rng, 3, 6))


@register('conv3d')
def _check_conv3d(rng):
    x = rng.standard_normal((1, 2, 3, 4, 4))
    return _projected(rng, lambda w: ops.conv3d(x, w, stride=(1, 2, 2)), _input(rng, 2, 2, 3, 3, 3))


@register('conv3d_input')
def _check_conv3d_input(rng):
    weight = rng.standard_normal((2, 2, 1, 3, 3))
    return _projected(rng, lambda t: ops.conv3d(t, weight), _input(rng, 1, 2, 2, 4, 4))


@register('conv_2plus1d')
def _check_conv_2plus1d(rng):
    spatial = rng.standard_normal((3, 2, 1, 3, 3)) * 0.3
    temporal = rng.standard_normal((2, 3, 3, 1, 1)) * 0.3
    return _projected(
        rng, lambda t: ops.conv_2plus1d(t, spatial, np.zeros(3), temporal, np.zeros(2),
                                        spatial_stride=2),
        _input(rng, 1, 2, 3, 4, 4))


@register('conv1d_channels')
def _check_conv1d_channels(rng):
    weight = rng.standard_normal((2, 3))
    return _projected(rng, lambda t: ops.conv1d_channels(t, weight, np.ones(2), axis=1),
                      _input(rng, 2, 3, 4))


@register('adaptive_avg_pool3d')
def _check_pool(rng):
    return _projected(rng, ops.adaptive_avg_pool3d, _input(rng, 2, 3, 2, 2, 3))


@register('mse_loss')
def _check_mse(rng):
    target = rng.standard_normal((4, 5))
    return (lambda t: ops.mse_loss(t, target)), _input(rng, 4, 5)


@register('cross_entropy')
def _check_cross_entropy(rng):
    labels = rng.integers(0, 4, 6)
    return (lambda t: ops.cross_entropy(t, labels)), _input(rng, 6, 4)


@register('scaled_dot_product')
def _check_sdp(rng):
    k = rng.standard_normal((2, 5, 4))
    v = rng.standard_normal((2, 5, 4))
    bias = rng.standard_normal((2, 5, 5))
    return _projected(rng, lambda q: scaled_dot_product(q, k, v, bias)[0], _input(rng, 2, 5, 4))


@register('performer_attention')
def _check_performer(rng):
    projection = performer_features(rng, 4, 16)
    q = rng.standard_normal((2, 6, 4)) * 0.5
    v = rng.standard_normal((2, 6, 4))
    return _projected(rng, lambda k: performer_attention(q, k, v, projection),
                      Tensor(rng.standard_normal((2, 6, 4)) * 0.5))


@register('window_block')
def _check_window_block(rng):
    cfg = WindowConfig(window=(2, 2, 2), heads=2, embed_dim=4, shift=(1, 1, 1))
    block = EncoderBlock(cfg, rng, mlp_ratio=2)
    block.eval()
    return _projected(rng, block, _input(rng, 1, 2, 4, 4, 4))


@register('patch_merging')
def _check_patch_merging(rng):
    merging = PatchMerging(3, rng)
    return _projected(rng, merging, _input(rng, 1, 2, 4, 2, 3))


def _chunk_matrix(rng, grid, e):
    seg = (rng.random(grid) > 0.5).astype(np.float64)
    return patchify_segmap(seg, grid, e)


@register('fa_pos_encoding')
def _check_fa_pos_encoding(rng):
    m = _chunk_matrix(rng, (1, 2, 2), 3)
    x = rng.standard_normal((2, 4, 3))
    return _projected(rng, lambda w1: fa_pos_encoding(x, m, w1), _input(rng, 3))


@register('fa_linear_bias')
def _check_fa_linear_bias(rng):
    m = _chunk_matrix(rng, (1, 2, 2), 3)
    index = np.array([0, 0, 1, 1, 2, 2, 3, 3])
    learned = rng.standard_normal(5)
    attn_out = rng.standard_normal((8, 5))
    return _projected(rng, lambda w2: fa_linear_bias(attn_out, m, learned, w2, index),
                      _input(rng, 3, 5))


@register('fa_attn_bias')
def _check_fa_attn_bias(rng):
    m = _chunk_matrix(rng, (1, 1, 4), 3)
    index = np.arange(4)
    logits = rng.standard_normal((2, 4, 4))

    def _f(adapter):
        return ops.softmax(fa_attn_bias(logits, m, adapter, index), axis=-1)

    return _projected(rng, _f, _input(rng, 3, 2))


@register('fa_channel_concat')
def _check_fa_channel_concat(rng):
    seg = (rng.random((1, 2, 3, 3)) > 0.5).astype(np.float64)
    x = rng.standard_normal((1, 3, 2, 3, 3))
    return _projected(rng, lambda w: fa_channel_concat(x, seg, w), _input(rng, 3, 4))


@register('fa_input_add')
def _check_fa_input_add(rng):
    seg = (rng.random((2, 3, 3)) > 0.5).astype(np.float64)
    gamma = rng.standard_normal(1)
    return _projected(rng, lambda t: fa_input_add(t, seg, gamma), _input(rng, 2, 3, 2, 3, 3))


@register('cross_attention')
def _check_cross_attention(rng):
    layer = CrossAttentionLayer(4, 2, rng, zero_init=False)
    main = rng.standard_normal((1, 5, 4))
    return _projected(rng, lambda side: layer(main, side),
                      Tensor(rng.standard_normal((1, 3, 4)) * 0.5))


@register('backbone')
def _check_backbone(rng):
    cfg = BackboneConfig(in_channels=2, stem_channels=3, block_count=1, downsample_factor=2,
                         out_channels=2, kernel=3, activation=True)
    backbone = Backbone(cfg, rng)
    return _projected(rng, backbone, Tensor(rng.standard_normal((1, 2, 3, 4, 4)) * 0.5))




def tiny_model_config():
    # type: () -> ModelConfig
    """A two-stage model small enough for finite differences, with audio fusion."""
    return ModelConfig(
        task=REGRESSION,
        classes=2,
        modalities=(AUDIO,),
        forced_variant=LINEAR_BIAS,
        late_fusion=CONCAT_ALL,
        use_backbone=True,
        input_shape=(3, 4, 16, 16),
        patch_size=8,
        backbone=BackboneConfig(in_channels=3, stem_channels=4, block_count=1,
                                downsample_factor=2, out_channels=8, kernel=3, activation=True),
        stages=StageConfig(depths=(1, 1), widths=(8, 16), heads=(2, 2), window=(2, 2, 2),
                           token_cube=(2, 2, 2), mlp_ratio=2, drop_path=0.0,
                           attention_kind=SOFTMAX, feature_count=16),
        fusion=FusionBlockConfig(order=(AUDIO,), zero_init=False, attention_kind=SOFTMAX,
                                 mode=SEQUENTIAL),
        audio_width=4,
        transcript_width=4,
        meta_width=2,
        sinusoidal_pos=True,
        seg_min_fraction=0.0,
        seg_per_frame=False,
    )


@register('tiny_model', tolerance=MODEL_TOLERANCE)
def _check_tiny_model(rng):
    cfg = tiny_model_config()
    model = FatModel(cfg, seed=int(rng.integers(1000)))
    model.eval()
    channels, frames, height, width = cfg.input_shape
    sample = ModelInput(
        face=rng.standard_normal((1, channels, frames, height, width)) * 0.5,
        seg=np.concatenate([np.ones((1, height // 2, width)),
                            np.zeros((1, height - height // 2, width))], axis=1),
        audio=rng.standard_normal((1, 2, cfg.audio_width)) * 0.5)

    # The smallest backbone parameter: its gradient flows through every later stage.
    bias = min((p for p in model.parameters() if p.group == BACKBONE), key=lambda p: p.size)
    bias.data = rng.standard_normal(bias.shape) * 0.1
    return _projected(rng, lambda _: model(sample), bias)


def failed(results):
    # type: (Sequence[GradResult]) -> List[GradResult]
    """Return the results over their tolerance."""
    return [r for r in results if not r.passed]
