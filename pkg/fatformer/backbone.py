"""
The shared convolutional front end.

Every spatial patch of a video goes through the same factorized (2+1)D convolution stack, and
the feature patches are tiled back in their original arrangement. :class:`CubeEmbedding` then
turns a feature (or raw) volume into the channels-last token grid the encoder stages consume.
"""
from typing import (  # noqa pylint: disable=unused-import
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from . import ops
from .errors import ContractError, DimensionError
from .nn import Linear, Module, init_normal, zeros
from .patching import PatchGrid, merge_patches
from .tensor import BACKBONE, TRANSFORMER, Tensor


BackboneConfig = NamedTuple('BackboneConfig', [
    ('in_channels', int),
    ('stem_channels', int),
    ('block_count', int),
    ('downsample_factor', int),  # Spatial stride of the last convolution.
    ('out_channels', int),
    ('kernel', int),
    ('activation', bool),
])


def default_backbone_config():
    # type: () -> BackboneConfig
    """Return the desk-scale backbone: 8 stem channels, 2 residual blocks, stride 2, 16 out."""
    return BackboneConfig(in_channels=3, stem_channels=8, block_count=2, downsample_factor=2,
                          out_channels=16, kernel=3, activation=True)


class Conv2Plus1D(Module):
    """One factorized convolution: spatial 1 x k x k, then temporal k x 1 x 1."""

    def __init__(
            self,
            in_channels,  # type: int
            out_channels,  # type: int
            kernel,  # type: int
            rng,  # type: np.random.Generator
            spatial_stride=1,  # type: int
            zero_init=False  # type: bool
    ):
        # type: (...) -> None
        spatial_shape = (out_channels, in_channels, 1, kernel, kernel)
        temporal_shape = (out_channels, out_channels, kernel, 1, 1)
        if zero_init:
            self.spatial_weight = zeros(spatial_shape, BACKBONE)
            self.temporal_weight = zeros(temporal_shape, BACKBONE)
        else:
            self.spatial_weight = init_normal(
                rng, spatial_shape, np.sqrt(2.0 / (in_channels * kernel * kernel)), BACKBONE)
            self.temporal_weight = init_normal(
                rng, temporal_shape, np.sqrt(2.0 / (out_channels * kernel)), BACKBONE)
        self.spatial_bias = zeros((out_channels,), BACKBONE)
        self.temporal_bias = zeros((out_channels,), BACKBONE)
        self.spatial_stride = spatial_stride

    def __call__(self, x, activation=True):
        # type: (Tensor, bool) -> Tensor
        return ops.conv_2plus1d(
            x, self.spatial_weight, self.spatial_bias, self.temporal_weight, self.temporal_bias,
            spatial_stride=self.spatial_stride, activation=ops.gelu if activation else None)


class Backbone(Module):
    """Stem convolution, residual (2+1)D blocks, then a strided head convolution."""

    def __init__(self, cfg, rng):
        # type: (BackboneConfig, np.random.Generator) -> None
        if cfg.downsample_factor <= 0 or cfg.block_count < 0:
            raise ContractError('Invalid backbone config {}'.format(cfg))

        self.cfg = cfg
        self.stem = Conv2Plus1D(cfg.in_channels, cfg.stem_channels, cfg.kernel, rng)
        self.blocks = [
            Conv2Plus1D(cfg.stem_channels, cfg.stem_channels, cfg.kernel, rng)
            for _ in range(cfg.block_count)
        ]
        self.head = Conv2Plus1D(cfg.stem_channels, cfg.out_channels, cfg.kernel, rng,
                                spatial_stride=cfg.downsample_factor)

    def __call__(self, x):
        # type: (Tensor) -> Tensor
        """Run a batch of patches, B x C x D x p x p, through the stack."""
        if x.ndim != 5 or x.shape[1] != self.cfg.in_channels:
            raise DimensionError('Backbone expects B x {} x D x H x W input, got {}'.format(
                self.cfg.in_channels, x.shape))
        factor = self.cfg.downsample_factor
        if x.shape[3] % factor or x.shape[4] % factor:
            raise DimensionError('Patch extent {}x{} is not divisible by factor {}'.format(
                x.shape[3], x.shape[4], factor))

        activation = self.cfg.activation
        out = self.stem(x, activation)
        for block in self.blocks:
            out = out + block(out, activation)
        return self.head(out, activation)


def backbone_forward(g, backbone):
    # type: (PatchGrid, Backbone) -> PatchGrid
    """
    Run every patch of a grid through the same backbone.

    Patches are stacked along the batch axis so a single pass evaluates all of them with the
    one shared parameter set. Unbatched ``C x D x p x p`` patches are accepted too.

    :return: The grid of feature patches, same grid extent and order.
    """
    if not g.patches:
        raise ContractError('Patch grid is empty')

    shapes = {tuple(patch.shape) for patch in g.patches}
    if len(shapes) != 1:
        raise ContractError('Patches must share one shape, got {}'.format(sorted(shapes)))

    unbatched = g.patches[0].ndim == 4
    patches = [ops.reshape(p, (1,) + p.shape) if unbatched else p for p in g.patches]
    batch = patches[0].shape[0]

    features = backbone(ops.concat(patches, axis=0))

    out = []  # type: List[Tensor]
    for i in range(len(patches)):
        feature = features[i * batch:(i + 1) * batch]
        out.append(ops.reshape(feature, feature.shape[1:]) if unbatched else feature)

    return PatchGrid(patches=out, grid_extent=g.grid_extent,
                     patch_size=g.patch_size // backbone.cfg.downsample_factor,
                     source_shape=g.source_shape)


def assemble_feature_grid(g):
    # type: (PatchGrid) -> Tensor
    """Tile feature patches in their original row-major arrangement."""
    return merge_patches(g)


class CubeEmbedding(Module):
    """
    Cut a ``B x C x D x H x W`` volume into non-overlapping cubes and embed each linearly.

    The result is the channels-last token grid ``B x D' x H' x W' x E``.
    """

    def __init__(
            self,
            in_channels,  # type: int
            cube,  # type: Sequence[int]
            width,  # type: int
            rng,  # type: np.random.Generator
            group=TRANSFORMER  # type: str
    ):
        # type: (...) -> None
        self.cube = tuple(cube)
        self.in_channels = in_channels
        self.proj = Linear(int(np.prod(self.cube)) * in_channels, width, rng, group=group)

    def __call__(self, x):
        # type: (Tensor) -> Tensor
        if x.ndim != 5 or x.shape[1] != self.in_channels or any(
                extent % c for extent, c in zip(x.shape[2:], self.cube)):
            raise DimensionError('Cannot cut {} into {} cubes of {} channels'.format(
                x.shape, self.cube, self.in_channels))

        a, p, q = self.cube
        tokens = ops.rearrange(x, 'b c (d a) (h p) (w q) -> b d h w (a p q c)', a=a, p=p, q=q)
        return self.proj(tokens)
