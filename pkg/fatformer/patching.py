"""
Patch partitioning of videos and chunk matrices of segmentation maps.

A video is cut into square spatial patches that keep their row-major arrangement, and a
foreground segmentation map is reduced to one 0/1 row per chunk of a chunk grid (the matrix
M1). Token grids of any resolution that refine the chunk grid look their rows up through
:func:`chunk_of_token`.

>>> seg = np.zeros((4, 4))
>>> seg[0, 0] = 1
>>> m = patchify_segmap(seg, (2, 2), 3)
>>> m.m1.tolist()
[[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
>>> sample_m1(m, 0).tolist()
[1.0, 1.0, 1.0]
"""
from typing import (  # noqa pylint: disable=unused-import
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

import einops
import numpy as np

from . import ops
from .errors import BoundsError, ContractError, DimensionError
from .tensor import Tensor, as_tensor


PatchGrid = NamedTuple('PatchGrid', [
    ('patches', List[Tensor]),  # Row-major over spatial positions, each [...]xCxDxpxp.
    ('grid_extent', Tuple[int, int]),  # (rows, cols) of patch positions.
    ('patch_size', int),
    ('source_shape', Tuple[int, ...]),
])


SegPatchMatrix = NamedTuple('SegPatchMatrix', [
    ('m1', np.ndarray),  # nc x e, every row all ones or all zeros.
    ('nc', int),
    ('e', int),
    ('grid', Tuple[int, int, int]),  # Chunk grid (gd, gh, gw); nc == gd * gh * gw.
])


def partition_patches(x, p):
    # type: (Tensor, int) -> PatchGrid
    """
    Cut the trailing two (spatial) axes of a video into p x p patches.

    Works on a single ``C x D x H x W`` video or on a batch; leading axes are carried along.
    The result is differentiable with respect to ``x``.

    :param x: Video tensor.
    :param p: Patch side in pixels. Must divide both spatial extents.

    :return: The patch grid in row-major order.
    """
    x = as_tensor(x)
    if x.ndim < 4:
        raise DimensionError('partition_patches expects C x D x H x W, got {}'.format(x.shape))

    height, width = x.shape[-2:]
    if p <= 0 or height % p or width % p:
        raise DimensionError(
            'Cannot partition {}x{} frames into {}x{} patches; resize the input to {}x{}'.format(
                height, width, p, p, _round_up(height, p), _round_up(width, p)))

    rows, cols = height // p, width // p
    patches = [
        x[..., r * p:(r + 1) * p, c * p:(c + 1) * p]
        for r in range(rows)
        for c in range(cols)
    ]

    return PatchGrid(patches=patches, grid_extent=(rows, cols), patch_size=p,
                     source_shape=tuple(x.shape))


def merge_patches(g):
    # type: (PatchGrid) -> Tensor
    """
    Reassemble a patch grid in its original arrangement.

    The patches need not have the pixel patch size; any homogeneous grid of feature patches
    is tiled the same way.
    """
    rows, cols = g.grid_extent
    if len(g.patches) != rows * cols or any(patch is None for patch in g.patches):
        present = sum(1 for patch in g.patches if patch is not None)
        raise ContractError('Patch grid {}x{} is incomplete: {} of {} patches present'.format(
            rows, cols, present, rows * cols))

    shapes = {tuple(patch.shape) for patch in g.patches}
    if len(shapes) != 1:
        raise ContractError('Patch grid is heterogeneous: shapes {}'.format(sorted(shapes)))

    row_tensors = [
        ops.concat(g.patches[r * cols:(r + 1) * cols], axis=-1)
        for r in range(rows)
    ]
    return ops.concat(row_tensors, axis=-2)


def patchify_segmap(
        seg,  # type: np.ndarray
        chunk_grid,  # type: Sequence[int]
        e,  # type: int
        min_fraction=0.0  # type: float
):
    # type: (...) -> SegPatchMatrix
    """
    Build the chunk matrix of a binary foreground map.

    :param seg: Binary map, ``H x W`` (static) or ``D x H x W`` (per frame).
    :param chunk_grid: Chunk counts ``(gh, gw)`` or ``(gd, gh, gw)``; must tile the map. A
        per-frame map reduced with a two-element grid collapses time into one chunk layer.
    :param e: Width of each row.
    :param min_fraction: A chunk is foreground when more than this fraction of its pixels is.
        The default of zero means any foreground pixel marks the chunk.

    :return: The chunk matrix, rows in row-major chunk order.
    """
    seg = np.asarray(seg, dtype=np.float64)
    if seg.ndim == 2:
        seg = seg[np.newaxis]
    if seg.ndim != 3:
        raise DimensionError('Segmentation map must be H x W or D x H x W, got {}'.format(
            seg.shape))

    if not np.all((seg == 0.0) | (seg == 1.0)):
        raise ContractError('Segmentation map must be binary (values 0 and 1)')

    grid = tuple(chunk_grid)
    if len(grid) == 2:
        grid = (1,) + grid
    if len(grid) != 3 or any(extent <= 0 or n % extent for extent, n in zip(grid, seg.shape)):
        raise DimensionError('Chunk grid {} does not tile a map of shape {}'.format(
            tuple(chunk_grid), seg.shape))

    fractions = einops.reduce(seg, '(gd a) (gh b) (gw c) -> (gd gh gw)', 'mean',
                              gd=grid[0], gh=grid[1], gw=grid[2])
    flags = (fractions > min_fraction).astype(np.float64)

    return SegPatchMatrix(m1=_broadcast_rows(flags, e), nc=flags.size, e=e, grid=grid)


def sample_m1(m, chunk_index):
    # type: (SegPatchMatrix, int) -> np.ndarray
    """Return row ``chunk_index`` of the chunk matrix."""
    if not 0 <= chunk_index < m.nc:
        raise BoundsError('Chunk index {} out of range [0, {})'.format(chunk_index, m.nc))

    return m.m1[chunk_index].copy()


def rescale_m1(
        m,  # type: SegPatchMatrix
        new_nc,  # type: int
        new_e,  # type: int
        new_grid=None  # type: Optional[Sequence[int]]
):
    # type: (...) -> SegPatchMatrix
    """
    Re-bin a chunk matrix onto a coarser tiling made of whole chunks and re-broadcast its width.

    A merged chunk is foreground when any of its constituent chunks is.

    :param new_grid: The coarser chunk grid. When omitted it is inferred from ``new_nc``,
        preferring square spatial merges (the patch-merging pattern), then temporal merges,
        then merges along the width and then the height alone.
    """
    if new_grid is None:
        new_grid = _infer_coarser_grid(m.grid, new_nc)
    new_grid = tuple(new_grid)

    if len(new_grid) != 3 or int(np.prod(new_grid)) != new_nc or any(
            extent <= 0 or old % extent for old, extent in zip(m.grid, new_grid)):
        raise ContractError('Chunk grid {} is not a coarsening of {} with {} chunks'.format(
            new_grid, m.grid, new_nc))

    flags = m.m1[:, 0].reshape(m.grid) if m.e else np.zeros(m.grid)
    merged = einops.reduce(flags, '(gd a) (gh b) (gw c) -> (gd gh gw)', 'max',
                           gd=new_grid[0], gh=new_grid[1], gw=new_grid[2])

    return SegPatchMatrix(m1=_broadcast_rows(merged, new_e), nc=new_nc, e=new_e, grid=new_grid)


def chunk_of_token(token_grid, chunk_grid):
    # type: (Sequence[int], Sequence[int]) -> np.ndarray
    """
    Map every token of a ``D x H x W`` token grid (row-major) to its chunk index.

    Token ``(d, h, w)`` belongs to chunk ``(d * gd // D, h * gh // H, w * gw // W)``.

    >>> chunk_of_token((1, 2, 4), (1, 1, 2)).tolist()
    [0, 0, 1, 1, 0, 0, 1, 1]
    """
    token_grid, chunk_grid = tuple(token_grid), tuple(chunk_grid)
    if any(extent % chunks for extent, chunks in zip(token_grid, chunk_grid)):
        raise DimensionError('Token grid {} does not refine chunk grid {}'.format(
            token_grid, chunk_grid))

    axes = [np.arange(extent) * chunks // extent for extent, chunks in zip(token_grid, chunk_grid)]
    d, h, w = np.meshgrid(*axes, indexing='ij')
    index = (d * chunk_grid[1] + h) * chunk_grid[2] + w
    return index.reshape(-1)


def token_rows(m, token_grid):
    # type: (SegPatchMatrix, Sequence[int]) -> np.ndarray
    """Return the chunk-matrix row of every token, shaped ``D x H x W x e``."""
    index = chunk_of_token(token_grid, m.grid)
    return m.m1[index].reshape(tuple(token_grid) + (m.e,))


def _broadcast_rows(flags, e):
    # type: (np.ndarray, int) -> np.ndarray
    return np.repeat(flags.reshape(-1, 1), e, axis=1)


def _infer_coarser_grid(grid, new_nc):
    # type: (Tuple[int, int, int], int) -> Tuple[int, int, int]
    nc = int(np.prod(grid))
    if new_nc <= 0 or nc % new_nc:
        raise ContractError('Cannot merge {} chunks into {}'.format(nc, new_nc))

    ratio = nc // new_nc
    side = int(round(np.sqrt(ratio)))
    candidates = [
        (1, side, side) if side * side == ratio else None,
        (ratio, 1, 1),
        (1, 1, ratio),
        (1, ratio, 1),
    ]
    for factors in candidates:
        if factors and all(extent % f == 0 for extent, f in zip(grid, factors)):
            return tuple(extent // f for extent, f in zip(grid, factors))  # type: ignore

    raise ContractError('Chunk grid {} has no nested tiling with {} chunks'.format(grid, new_nc))


def _round_up(value, multiple):
    # type: (int, int) -> int
    return -(-value // multiple) * multiple
