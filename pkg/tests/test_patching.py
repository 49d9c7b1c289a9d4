"""Tests for patch partitioning and chunk matrices"""
import numpy as np
import pytest

from fatformer import ops
from fatformer.errors import BoundsError, ContractError, DimensionError
from fatformer.patching import (
    chunk_of_token,
    merge_patches,
    partition_patches,
    patchify_segmap,
    rescale_m1,
    sample_m1,
    token_rows,
)
from fatformer.tensor import Tensor


class TestPartition(object):
    """Cutting videos into patches"""

    def test_merge_inverts_partition(self):
        """Merging the partition gives the input back exactly."""
        x = np.random.default_rng(0).standard_normal((3, 4, 16, 24))
        grid = partition_patches(x, 8)

        assert grid.grid_extent == (2, 3)
        assert len(grid.patches) == 6
        assert np.array_equal(merge_patches(grid).data, x)

    def test_row_major_order(self):
        """Patch k sits at row k // cols and column k % cols."""
        x = np.arange(16.0).reshape(1, 1, 4, 4)
        grid = partition_patches(x, 2)

        assert grid.patches[1].data.reshape(-1).tolist() == [2.0, 3.0, 6.0, 7.0]
        assert grid.patches[2].data.reshape(-1).tolist() == [8.0, 9.0, 12.0, 13.0]

    def test_batch_axes_carried(self):
        """Leading batch axes survive partitioning."""
        grid = partition_patches(np.zeros((2, 3, 4, 16, 16)), 8)

        assert grid.patches[0].shape == (2, 3, 4, 8, 8)

    def test_indivisible_extent(self):
        """The error suggests a compatible size."""
        with pytest.raises(DimensionError) as exception_info:
            partition_patches(np.zeros((3, 4, 15, 16)), 8)

        assert '16x16' in str(exception_info.value)

    def test_incomplete_grid(self):
        """A grid with a missing patch cannot be merged."""
        grid = partition_patches(np.zeros((1, 1, 4, 4)), 2)
        grid.patches[3] = None

        with pytest.raises(ContractError):
            merge_patches(grid)

    def test_gradient_flows_to_pixels(self):
        """Each pixel receives the gradient of the patch holding it."""
        x = Tensor(np.ones((1, 1, 4, 4)), requires_grad=True)
        grid = partition_patches(x, 2)
        ops.sum(ops.mul(grid.patches[3], 2.0)).backward()

        expected = np.zeros((4, 4))
        expected[2:, 2:] = 2.0
        assert np.array_equal(x.grad[0, 0], expected)


class TestSegmap(object):
    """Chunk matrices of foreground maps"""

    def test_rows_constant(self):
        """Every row is all ones or all zeros."""
        seg = (np.random.default_rng(1).random((16, 16)) > 0.9).astype(np.float64)
        m = patchify_segmap(seg, (4, 4), 5)

        assert m.m1.shape == (16, 5)
        assert np.all((m.m1 == m.m1[:, :1]))

    def test_any_pixel_on_random_maps(self):
        """A chunk is foreground exactly when one of its pixels is."""
        rng = np.random.default_rng(7)
        for _ in range(200):
            seg = (rng.random((16, 16)) < rng.uniform(0.0, 0.1)).astype(np.float64)
            expected = seg.reshape(4, 4, 4, 4).transpose(0, 2, 1, 3).reshape(16, -1).any(axis=1)

            m = patchify_segmap(seg, (4, 4), 3)

            assert np.array_equal(m.m1[:, 0] == 1.0, expected)
            assert np.all(m.m1 == m.m1[:, :1])

    def test_any_pixel_on_random_frames(self):
        """Per-frame chunks follow the same rule in time."""
        rng = np.random.default_rng(8)
        for _ in range(200):
            seg = (rng.random((4, 16, 16)) < rng.uniform(0.0, 0.05)).astype(np.float64)
            expected = (seg.reshape(2, 2, 4, 4, 4, 4).transpose(0, 2, 4, 1, 3, 5)
                        .reshape(32, -1).any(axis=1))

            m = patchify_segmap(seg, (2, 4, 4), 1)

            assert np.array_equal(m.m1[:, 0] == 1.0, expected)

    def test_monotone(self):
        """Adding foreground pixels never clears a chunk."""
        rng = np.random.default_rng(9)
        for _ in range(200):
            seg = (rng.random((16, 16)) < 0.05).astype(np.float64)
            grown = np.maximum(seg, (rng.random((16, 16)) < 0.05).astype(np.float64))

            before = patchify_segmap(seg, (4, 4), 1).m1[:, 0]
            after = patchify_segmap(grown, (4, 4), 1).m1[:, 0]

            assert np.all(after >= before)

    def test_any_pixel_marks_chunk(self):
        """A single foreground pixel makes its chunk foreground."""
        seg = np.zeros((8, 8))
        seg[7, 0] = 1.0
        m = patchify_segmap(seg, (2, 2), 1)

        assert m.m1[:, 0].tolist() == [0.0, 0.0, 1.0, 0.0]

    def test_min_fraction(self):
        """A chunk needs more than the minimum fraction of foreground."""
        seg = np.zeros((4, 4))
        seg[0, 0] = 1.0
        seg[2:, 2:] = 1.0

        m = patchify_segmap(seg, (2, 2), 1, min_fraction=0.3)

        assert m.m1[:, 0].tolist() == [0.0, 0.0, 0.0, 1.0]

    def test_per_frame_grid(self):
        """A per-frame map keeps time chunks when the grid has three extents."""
        seg = np.zeros((4, 4, 4))
        seg[3, 0, 0] = 1.0

        assert patchify_segmap(seg, (2, 2, 2), 1).m1[:, 0].tolist() == [0, 0, 0, 0, 1, 0, 0, 0]
        assert patchify_segmap(seg, (2, 2), 1).m1[:, 0].tolist() == [1, 0, 0, 0]

    def test_non_binary(self):
        """Soft maps are rejected."""
        with pytest.raises(ContractError):
            patchify_segmap(np.full((4, 4), 0.5), (2, 2), 1)

    def test_grid_does_not_tile(self):
        """The chunk grid must divide the map."""
        with pytest.raises(DimensionError):
            patchify_segmap(np.zeros((6, 6)), (4, 4), 1)

    def test_sample_bounds(self):
        """Rows outside the matrix are out of bounds."""
        m = patchify_segmap(np.ones((4, 4)), (2, 2), 2)

        assert sample_m1(m, 3).tolist() == [1.0, 1.0]
        with pytest.raises(BoundsError):
            sample_m1(m, 4)
        with pytest.raises(BoundsError):
            sample_m1(m, -1)


class TestRescale(object):
    """Re-binning chunk matrices onto coarser grids"""

    def test_square_merge(self):
        """Merging 2x2 chunks keeps foreground when any constituent is."""
        seg = np.zeros((8, 8))
        seg[0, 0] = 1.0
        m = patchify_segmap(seg, (4, 4), 3)

        coarse = rescale_m1(m, 4, 6)

        assert coarse.grid == (1, 2, 2)
        assert coarse.m1.shape == (4, 6)
        assert coarse.m1[:, 0].tolist() == [1.0, 0.0, 0.0, 0.0]

    def test_explicit_grid(self):
        """A temporal coarsening can be requested directly."""
        seg = np.zeros((2, 4, 4))
        seg[1] = 1.0
        m = patchify_segmap(seg, (2, 2, 2), 1)

        coarse = rescale_m1(m, 4, 1, new_grid=(1, 2, 2))

        assert coarse.m1[:, 0].tolist() == [1.0, 1.0, 1.0, 1.0]

    def test_not_a_coarsening(self):
        """Chunk counts that do not nest are rejected."""
        m = patchify_segmap(np.zeros((6, 6)), (3, 3), 1)

        with pytest.raises(ContractError):
            rescale_m1(m, 4, 1)


def test_chunk_of_token_refines():
    """Fine token grids map onto the chunk that contains them."""
    index = chunk_of_token((2, 4, 4), (1, 2, 2)).reshape(2, 4, 4)

    assert index[0].tolist() == [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]]
    assert np.array_equal(index[0], index[1])


def test_chunk_of_token_coarser():
    """Token grids coarser than the chunk grid are refused."""
    with pytest.raises(DimensionError):
        chunk_of_token((1, 2, 2), (1, 4, 4))


def test_token_rows():
    """Token rows repeat the chunk rows over each chunk's tokens."""
    seg = np.zeros((4, 4))
    seg[:2, :2] = 1.0
    m = patchify_segmap(seg, (2, 2), 2)

    rows = token_rows(m, (1, 4, 4))

    assert rows.shape == (1, 4, 4, 2)
    assert rows[0, :2, :2].sum() == 8.0
    assert rows[0, 2:].sum() == 0.0
