"""
Cross-attention fusion of side inputs into the face branch.

Each side modality is projected to the branch width by a kernel-1 convolution and attended by
the branch tokens (queries from the branch, keys and values from the side). Cross layers run in
the configured order, each with its own residual, after the block's windowed self-attention.
Paired sides (the two full-frame sequences, audio with transcript) are wrapped by a further
skip connection spanning both layers. Output projections and pair gates start at zero, so an
untrained fusion block computes exactly what its self-attention block does.
"""
from typing import (  # noqa pylint: disable=unused-import
    Any,
    Dict,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from . import ops
from .attention import (
    ATTENTION_KINDS,
    PERFORMER,
    EncoderBlock,
    performer_attention,
    performer_features,
    scaled_dot_product,
)
from .errors import ConfigError, ContractError, DataError, DimensionError
from .nn import Linear, Module, init_uniform_fan_in, module_rng, zeros
from .tensor import Parameter, Tensor, as_tensor


FULLFRAME_TARGET = 'fullframe_target'
FULLFRAME_INTERLOCUTOR = 'fullframe_interlocutor'
AUDIO = 'audio'
TRANSCRIPT = 'transcript'
METADATA = 'metadata'

SIDE_NAMES = (FULLFRAME_TARGET, FULLFRAME_INTERLOCUTOR, AUDIO, TRANSCRIPT, METADATA)

# Sides that share an outer skip connection when they run back to back.
PAIRS = ((FULLFRAME_TARGET, FULLFRAME_INTERLOCUTOR), (AUDIO, TRANSCRIPT))

SEQUENTIAL = 'sequential'
ALTERNATING = 'alternating'
FUSION_MODES = (SEQUENTIAL, ALTERNATING)


SideInput = NamedTuple('SideInput', [
    ('name', str),
    ('features', Tensor),  # B x T x native_channels
])


FusionBlockConfig = NamedTuple('FusionBlockConfig', [
    ('order', Tuple[str, ...]),
    ('zero_init', bool),
    ('attention_kind', str),
    ('mode', str),
])


def validate_fusion_config(cfg):
    # type: (FusionBlockConfig) -> None
    """
    Check a fusion configuration.

    >>> validate_fusion_config(FusionBlockConfig(
    ...     ('audio', 'audio'), True, 'softmax', 'sequential'))
    Traceback (most recent call last):
    ...
    fatformer.errors.ConfigError: Fusion order lists "audio" twice
    """
    seen = set()
    for name in cfg.order:
        if name == METADATA:
            raise ConfigError('Metadata is not attended; it is concatenated to audio and '
                              'transcript tokens')
        if name not in SIDE_NAMES:
            raise ConfigError('Unknown side input "{}", expected one of {}'.format(
                name, ', '.join(SIDE_NAMES[:-1])))
        if name in seen:
            raise ConfigError('Fusion order lists "{}" twice'.format(name))
        seen.add(name)

    order = list(cfg.order)
    if FULLFRAME_INTERLOCUTOR in order:
        position = order.index(FULLFRAME_INTERLOCUTOR)
        if position == 0 or order[position - 1] != FULLFRAME_TARGET:
            raise ConfigError('"{}" must immediately follow "{}" in the fusion order'.format(
                FULLFRAME_INTERLOCUTOR, FULLFRAME_TARGET))

    if cfg.attention_kind not in ATTENTION_KINDS:
        raise ConfigError('Unknown attention kind "{}"'.format(cfg.attention_kind))
    if cfg.mode not in FUSION_MODES:
        raise ConfigError('Unknown fusion mode "{}", expected one of {}'.format(
            cfg.mode, ', '.join(FUSION_MODES)))


def fusion_steps(order):
    # type: (Sequence[str]) -> List[Tuple[str, ...]]
    """
    Group an order into single sides and back-to-back pairs.

    >>> fusion_steps(['fullframe_target', 'fullframe_interlocutor', 'audio', 'transcript'])
    [('fullframe_target', 'fullframe_interlocutor'), ('audio', 'transcript')]
    >>> fusion_steps(['transcript', 'audio'])
    [('transcript',), ('audio',)]
    """
    steps = []  # type: List[Tuple[str, ...]]
    i = 0
    while i < len(order):
        if i + 1 < len(order) and (order[i], order[i + 1]) in PAIRS:
            steps.append((order[i], order[i + 1]))
            i += 2
        else:
            steps.append((order[i],))
            i += 1
    return steps


class SideProjection(Module):
    """Kernel-1 convolution from a side's native channels to the fusion width."""

    def __init__(self, native, width, rng, identity=False):
        # type: (int, int, np.random.Generator, bool) -> None
        if identity:
            if native != width:
                raise DimensionError('Identity projection needs equal widths, got {} and {}'.format(
                    native, width))
            self.weight = Parameter(np.eye(width))
        else:
            self.weight = init_uniform_fan_in(rng, (width, native), native)
        self.bias = zeros((width,))

    def __call__(self, features):
        # type: (Tensor) -> Tensor
        return ops.conv1d_channels(features, self.weight, self.bias, axis=-1)


def channel_project(s, projection):
    # type: (SideInput, SideProjection) -> Tensor
    """Project a side's tokens ``[B x] T x native`` to ``[B x] T x width``."""
    features = as_tensor(s.features)
    if features.size == 0 or features.shape[-2] == 0:
        raise ContractError('Side input "{}" has no tokens'.format(s.name))
    if features.shape[-1] != projection.weight.shape[1]:
        raise DimensionError('Side input "{}" has {} channels, projection expects {}'.format(
            s.name, features.shape[-1], projection.weight.shape[1]))
    return projection(features)


class MetadataMixer(Module):
    """Affine map of ``[tokens | metadata]`` back to the native token width."""

    def __init__(self, native, meta_width):
        # type: (int, int) -> None
        self.native = native
        self.meta_width = meta_width
        self.weight = Parameter(np.vstack([np.eye(native), np.zeros((meta_width, native))]))
        self.bias = zeros((native,))


def concat_metadata(s, meta, mixer):
    # type: (SideInput, Any, MetadataMixer) -> SideInput
    """
    Concatenate a per-sample metadata vector to every token and map back to the native width.

    :param s: Audio or transcript tokens ``B x T x native``.
    :param meta: Metadata ``B x M``.
    """
    meta = np.asarray(meta, dtype=np.float64)
    if meta.ndim != 2 or meta.shape[-1] != mixer.meta_width:
        raise ContractError('Metadata of shape {} does not have the fixed width {}'.format(
            meta.shape, mixer.meta_width))
    if mixer.meta_width == 0:
        return s

    features = as_tensor(s.features)
    if features.shape[-1] != mixer.native or features.shape[0] != meta.shape[0]:
        raise DimensionError('Cannot mix metadata {} into tokens {}'.format(
            meta.shape, features.shape))

    tiled = np.broadcast_to(meta[:, np.newaxis, :],
                            (meta.shape[0], features.shape[1], meta.shape[1]))
    mixed = ops.linear(ops.concat([features, tiled], axis=-1), mixer.weight, mixer.bias)
    return SideInput(name=s.name, features=mixed)


class CrossAttentionLayer(Module):
    """Queries from the main tokens, keys and values from a side, with a residual."""

    def __init__(
            self,
            width,  # type: int
            heads,  # type: int
            rng,  # type: np.random.Generator
            kind=PERFORMER,  # type: str
            feature_count=64,  # type: int
            zero_init=True  # type: bool
    ):
        # type: (...) -> None
        if width % heads:
            raise ContractError('Fusion width {} is not divisible by {} heads'.format(
                width, heads))

        self.heads = heads
        self.kind = kind
        self.q = Linear(width, width, rng)
        self.kv = Linear(width, 2 * width, rng)
        self.proj = Linear(width, width, rng, zero_init=zero_init)
        self.projection = None  # type: Optional[np.ndarray]
        if kind == PERFORMER:
            self.projection = performer_features(rng, width // heads, feature_count)

    def __call__(self, main, side):
        # type: (Tensor, Tensor) -> Tensor
        """
        :param main: ``B x N x E`` branch tokens.
        :param side: ``B x T x E`` projected side tokens.
        """
        if main.shape[-1] != side.shape[-1]:
            raise DimensionError('Cross attention between widths {} and {}'.format(
                main.shape[-1], side.shape[-1]))

        q = ops.rearrange(self.q(main), 'b n (h d) -> b h n d', h=self.heads)
        kv = ops.rearrange(self.kv(side), 'b t (two h d) -> two b h t d', two=2, h=self.heads)
        k, v = kv[0], kv[1]

        if self.kind == PERFORMER:
            out = performer_attention(q, k, v, self.projection)
        else:
            out, _ = scaled_dot_product(q, k, v)

        return main + self.proj(ops.rearrange(out, 'b h n d -> b n (h d)'))


def cross_attention_layer(main, side, layer):
    # type: (Tensor, Tensor, CrossAttentionLayer) -> Tensor
    """Attend from the main tokens to one projected side."""
    return layer(main, side)


class FusionBlock(Module):
    """An encoder block followed by the cross-attention layers of the configured sides."""

    def __init__(
            self,
            block,  # type: EncoderBlock
            cfg,  # type: FusionBlockConfig
            heads,  # type: int
            rng,  # type: np.random.Generator
            feature_count=64  # type: int
    ):
        # type: (...) -> None
        validate_fusion_config(cfg)
        width = block.cfg.embed_dim

        self.block = block
        self.cfg = cfg
        base = int(rng.integers(2 ** 32))
        self.cross = {
            name: CrossAttentionLayer(width, heads, module_rng(base, name), cfg.attention_kind,
                                      feature_count, cfg.zero_init)
            for name in cfg.order
        }
        self.gates = {
            first: zeros((width,)) if cfg.zero_init else Parameter(np.ones(width))
            for first, _ in (step for step in fusion_steps(cfg.order) if len(step) == 2)
        }

    def __call__(
            self,
            x,  # type: Tensor
            sides,  # type: Mapping[str, Tensor]
            rows=None  # type: Optional[np.ndarray]
    ):
        # type: (...) -> Tensor
        """
        :param x: Token grid ``B x D x H x W x E``.
        :param sides: Projected side tokens ``B x T x E`` by name.
        :param rows: Chunk rows for the block's segmentation hook, if it has one.
        """
        x = self.block(x, rows)
        if not self.cfg.order:
            return x

        grid_shape = x.shape
        tokens = ops.reshape(x, (grid_shape[0], -1, grid_shape[-1]))

        for step in fusion_steps(self.cfg.order):
            for name in step:
                if name not in sides:
                    raise DataError('Side input "{}" is missing'.format(name))

            if len(step) == 1:
                tokens = self.cross[step[0]](tokens, sides[step[0]])
            else:
                first, second = step
                inner = self.cross[second](self.cross[first](tokens, sides[first]), sides[second])
                tokens = inner + self.gates[first] * tokens

        return ops.reshape(tokens, grid_shape)


def fusion_block(main, sides, block, rows=None):
    # type: (Tensor, Mapping[str, Tensor], FusionBlock, Optional[np.ndarray]) -> Tensor
    """Self-attention on the main grid, then cross attention to every configured side."""
    return block(main, sides, rows)
