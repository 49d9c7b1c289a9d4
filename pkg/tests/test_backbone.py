"""Tests for the shared patch backbone"""
import numpy as np
import pytest

from fatformer import ops
from fatformer.backbone import (
    Backbone,
    BackboneConfig,
    CubeEmbedding,
    assemble_feature_grid,
    backbone_forward,
)
from fatformer.errors import DimensionError
from fatformer.patching import PatchGrid, partition_patches
from fatformer.tensor import BACKBONE, Tensor


def _config(**changes):
    cfg = BackboneConfig(in_channels=2, stem_channels=3, block_count=1, downsample_factor=2,
                         out_channels=4, kernel=3, activation=True)
    return cfg._replace(**changes)


def _identity_backbone(channels):
    cfg = BackboneConfig(in_channels=channels, stem_channels=channels, block_count=0,
                         downsample_factor=1, out_channels=channels, kernel=1, activation=False)
    backbone = Backbone(cfg, np.random.default_rng(0))
    eye = np.eye(channels).reshape(channels, channels, 1, 1, 1)
    for conv in (backbone.stem, backbone.head):
        conv.spatial_weight.data = eye.copy()
        conv.temporal_weight.data = eye.copy()
    return backbone


def test_identity_configuration():
    """With identity kernels and no activation, tiled features equal the input."""
    x = np.random.default_rng(1).standard_normal((2, 4, 8, 12))

    features = backbone_forward(partition_patches(x, 4), _identity_backbone(2))

    assert np.allclose(assemble_feature_grid(features).data, x, atol=1e-12, rtol=0)


def test_feature_grid_shape():
    """Features keep the grid and shrink each patch by the downsampling factor."""
    backbone = Backbone(_config(), np.random.default_rng(2))
    grid = partition_patches(np.zeros((3, 2, 4, 16, 24)), 8)

    features = backbone_forward(grid, backbone)

    assert features.grid_extent == (2, 3)
    assert features.patch_size == 4
    assert assemble_feature_grid(features).shape == (3, 4, 4, 8, 12)


def test_permutation_equivariance():
    """Permuting the patches permutes the features the same way."""
    rng = np.random.default_rng(3)
    backbone = Backbone(_config(), rng)
    grid = partition_patches(rng.standard_normal((2, 3, 16, 16)), 8)
    order = [2, 0, 3, 1]
    shuffled = grid._replace(patches=[grid.patches[i] for i in order])

    expected = backbone_forward(grid, backbone).patches
    actual = backbone_forward(shuffled, backbone).patches

    for position, source in enumerate(order):
        assert np.allclose(actual[position].data, expected[source].data, atol=1e-12, rtol=0)


def test_shared_gradient_is_sum_over_patches():
    """The gradient of the shared weights sums every patch's contribution."""
    rng = np.random.default_rng(4)
    backbone = Backbone(_config(), rng)
    grid = partition_patches(rng.standard_normal((1, 2, 3, 16, 16)), 8)

    ops.sum(assemble_feature_grid(backbone_forward(grid, backbone))).backward()
    together = {name: p.grad.copy() for name, p in backbone.named_parameters()}

    separate = {name: np.zeros(p.shape) for name, p in backbone.named_parameters()}
    for patch in grid.patches:
        backbone.zero_grad()
        single = PatchGrid(patches=[patch], grid_extent=(1, 1), patch_size=8,
                           source_shape=patch.shape)
        ops.sum(backbone_forward(single, backbone).patches[0]).backward()
        for name, p in backbone.named_parameters():
            separate[name] += p.grad

    for name in together:
        assert np.allclose(together[name], separate[name], atol=1e-10, rtol=1e-10), name


def test_parameters_in_backbone_group():
    """Backbone parameters belong to the backbone optimizer group."""
    backbone = Backbone(_config(), np.random.default_rng(5))

    assert {p.group for p in backbone.parameters()} == {BACKBONE}
    assert len(backbone.blocks) == 1


def test_residual_block():
    """Zeroing a block's kernels leaves its input unchanged."""
    rng = np.random.default_rng(6)
    backbone = Backbone(_config(), rng)
    x = Tensor(rng.standard_normal((1, 3, 2, 4, 4)))
    block = backbone.blocks[0]
    block.spatial_weight.data[:] = 0.0
    block.temporal_weight.data[:] = 0.0

    assert np.array_equal((x + block(x)).data, x.data)


def test_indivisible_patch():
    """Patches must be divisible by the downsampling factor."""
    backbone = Backbone(_config(downsample_factor=3), np.random.default_rng(7))

    with pytest.raises(DimensionError):
        backbone(Tensor(np.zeros((1, 2, 2, 8, 8))))


def test_wrong_channel_count():
    """Inputs must have the configured channel count."""
    backbone = Backbone(_config(), np.random.default_rng(8))

    with pytest.raises(DimensionError):
        backbone(Tensor(np.zeros((1, 3, 2, 8, 8))))


class TestCubeEmbedding(object):
    """Cube tokenization"""

    def test_token_grid(self):
        """Cubes become channels-last tokens."""
        embed = CubeEmbedding(4, (2, 2, 2), 6, np.random.default_rng(9))

        assert embed(Tensor(np.zeros((3, 4, 4, 8, 6)))).shape == (3, 2, 4, 3, 6)

    def test_cube_content(self):
        """Each token sees exactly the pixels of its cube."""
        embed = CubeEmbedding(1, (1, 2, 2), 1, np.random.default_rng(10))
        embed.proj.weight.data = np.ones((4, 1))
        x = np.arange(16.0).reshape(1, 1, 1, 4, 4)

        tokens = embed(Tensor(x)).data[0, 0, :, :, 0]

        assert tokens.tolist() == [[0 + 1 + 4 + 5, 2 + 3 + 6 + 7],
                                   [8 + 9 + 12 + 13, 10 + 11 + 14 + 15]]

    def test_indivisible_volume(self):
        """Volumes the cubes do not tile are refused."""
        embed = CubeEmbedding(1, (2, 2, 2), 3, np.random.default_rng(11))

        with pytest.raises(DimensionError):
            embed(Tensor(np.zeros((1, 1, 3, 4, 4))))
