"""
Windowed 3D self-attention.

Token grids are channels-last, ``B x D x H x W x E``. Attention is computed inside local
``(d, h, w)`` windows with a learnable relative position bias per head; odd blocks of a stage
shift the windows by half a window and mask pairs that were not neighbours before the shift.

Logits are ``Q K^T / sqrt(d_head) + relative bias + optional extra bias``. The extra bias slot
is where segmentation-driven biases enter. A positive random feature (performer) path replaces
the softmax when requested; it cannot take pairwise biases.
"""
from typing import (  # noqa pylint: disable=unused-import
    Any,
    Callable,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from . import ops
from .errors import ContractError, DimensionError, UnsupportedCombination
from .nn import LayerNorm, Linear, Mlp, Module, init_normal, zeros
from .tensor import Tensor, as_tensor


SOFTMAX = 'softmax'
PERFORMER = 'performer'
ATTENTION_KINDS = (SOFTMAX, PERFORMER)

_MASK_VALUE = -100.0


WindowConfig = NamedTuple('WindowConfig', [
    ('window', Tuple[int, int, int]),
    ('heads', int),
    ('embed_dim', int),
    ('shift', Tuple[int, int, int]),
])


WindowLayout = NamedTuple('WindowLayout', [
    ('batch', int),
    ('grid', Tuple[int, int, int]),  # Token grid before padding.
    ('padded', Tuple[int, int, int]),
    ('window', Tuple[int, int, int]),
    ('shift', Tuple[int, int, int]),
])


def validate_window_config(cfg):
    # type: (WindowConfig) -> None
    """Raise a ContractError unless the heads divide the width and shifts fit the window."""
    if cfg.heads <= 0 or cfg.embed_dim % cfg.heads:
        raise ContractError('Embedding width {} is not divisible by {} heads'.format(
            cfg.embed_dim, cfg.heads))
    if any(s < 0 or s >= w for s, w in zip(cfg.shift, cfg.window)):
        raise ContractError('Shift {} does not fit window {}'.format(cfg.shift, cfg.window))


def effective_window(grid, window, shift):
    # type: (Sequence[int], Sequence[int], Sequence[int]) -> Tuple[Tuple[int, ...], Tuple[int, ...]]
    """
    Clamp the window to the grid; axes the window already covers are not shifted.

    >>> effective_window((1, 8, 8), (2, 4, 4), (1, 2, 2))
    ((1, 4, 4), (0, 2, 2))
    """
    use_window = tuple(min(g, w) for g, w in zip(grid, window))
    use_shift = tuple(0 if g <= w else s for g, w, s in zip(grid, window, shift))
    return use_window, use_shift


def window_partition(x, window, shift=(0, 0, 0)):
    # type: (Any, Sequence[int], Sequence[int]) -> Tuple[Tensor, WindowLayout]
    """
    Regroup a token grid into windows.

    The grid is zero-padded up to whole windows and cyclically shifted by ``-shift`` first.

    :param x: Token grid ``B x D x H x W x E``.
    :param window: Window extents ``(d, h, w)``.
    :param shift: Cyclic shift per axis.

    :return: Windows ``(B * nW) x N x E`` in row-major window order, and the layout needed to
        reverse the partition.
    """
    x = as_tensor(x)
    if x.ndim != 5:
        raise DimensionError('window_partition expects B x D x H x W x E, got {}'.format(x.shape))

    window, shift = tuple(window), tuple(shift)
    grid = tuple(x.shape[1:4])
    padded = tuple(-(-g // w) * w for g, w in zip(grid, window))
    if padded != grid:
        x = ops.pad(x, [(0, 0)] + [(0, p - g) for p, g in zip(padded, grid)] + [(0, 0)])
    if any(shift):
        x = ops.roll(x, [-s for s in shift], (1, 2, 3))

    windows = ops.rearrange(
        x, 'b (nd wd) (nh wh) (nw ww) e -> (b nd nh nw) (wd wh ww) e',
        wd=window[0], wh=window[1], ww=window[2])

    layout = WindowLayout(batch=x.shape[0], grid=grid, padded=padded, window=window, shift=shift)
    return windows, layout


def window_reverse(windows, layout):
    # type: (Tensor, WindowLayout) -> Tensor
    """Invert :func:`window_partition`, undoing the shift and the padding."""
    window = layout.window
    x = ops.rearrange(
        windows, '(b nd nh nw) (wd wh ww) e -> b (nd wd) (nh wh) (nw ww) e',
        b=layout.batch,
        nd=layout.padded[0] // window[0],
        nh=layout.padded[1] // window[1],
        nw=layout.padded[2] // window[2],
        wd=window[0], wh=window[1], ww=window[2])

    if any(layout.shift):
        x = ops.roll(x, list(layout.shift), (1, 2, 3))
    if layout.padded != layout.grid:
        d, h, w = layout.grid
        x = x[:, :d, :h, :w]
    return x


def shifted_window_mask(padded, window, shift):
    # type: (Sequence[int], Sequence[int], Sequence[int]) -> Optional[np.ndarray]
    """
    Additive mask ``nW x N x N`` for shifted windows; None when nothing is shifted.

    Regions are labelled in the shifted frame; tokens that wrapped around the grid edge form
    their own regions, and pairs from different regions get -100.
    """
    if not any(shift):
        return None

    regions = np.zeros(tuple(padded))
    region = 0
    for d in _shift_slices(window[0], shift[0]):
        for h in _shift_slices(window[1], shift[1]):
            for w in _shift_slices(window[2], shift[2]):
                regions[d, h, w] = region
                region += 1

    ids, _ = window_partition(regions[np.newaxis, ..., np.newaxis], window)
    ids = ids.data[..., 0]
    return np.where(ids[:, :, np.newaxis] != ids[:, np.newaxis, :], _MASK_VALUE, 0.0)


def _shift_slices(window, shift):
    # type: (int, int) -> List[slice]
    if not shift:
        return [slice(None)]
    return [slice(0, -window), slice(-window, -shift), slice(-shift, None)]


def relative_position_index(window, table_window=None):
    # type: (Sequence[int], Optional[Sequence[int]]) -> np.ndarray
    """
    Return the ``N x N`` table index of every token pair of a window.

    The index depends only on the coordinate difference of the pair.

    :param table_window: The window the table was sized for, when it is larger than ``window``.

    >>> relative_position_index((1, 1, 2)).tolist()
    [[1, 0], [2, 1]]
    """
    table_window = tuple(table_window or window)
    if any(w > t for w, t in zip(window, table_window)):
        raise DimensionError('Window {} exceeds the bias table window {}'.format(
            tuple(window), table_window))

    d, h, w = window
    _, th, tw = table_window
    coords = np.stack(np.meshgrid(np.arange(d), np.arange(h), np.arange(w), indexing='ij'))
    flat = coords.reshape(3, -1)
    relative = flat[:, :, np.newaxis] - flat[:, np.newaxis, :]
    relative = relative + (np.array(table_window) - 1).reshape(3, 1, 1)
    return (relative[0] * (2 * th - 1) + relative[1]) * (2 * tw - 1) + relative[2]


class RelPosBias(Module):
    """A per-head table of logit offsets indexed by the coordinate delta of a token pair."""

    def __init__(self, window, heads, rng, zero_init=False):
        # type: (Sequence[int], int, np.random.Generator, bool) -> None
        d, h, w = window
        shape = ((2 * d - 1) * (2 * h - 1) * (2 * w - 1), heads)
        self.table = zeros(shape) if zero_init else init_normal(rng, shape, 0.02)
        self.window = tuple(window)
        self.index = relative_position_index(window)

    def __call__(self, window=None):
        # type: (Optional[Sequence[int]]) -> Tensor
        """
        Return the bias as ``heads x N x N``.

        :param window: A window no larger than the constructed one; its pairs index the same
            table, so a window clamped to a small grid reuses the learned offsets.
        """
        index = self.index
        if window is not None and tuple(window) != self.window:
            index = relative_position_index(window, self.window)
        return ops.rearrange(ops.take(self.table, index), 'i j h -> h i j')


def scaled_dot_product(
        q,  # type: Tensor
        k,  # type: Tensor
        v,  # type: Tensor
        bias=None,  # type: Optional[Any]
):
    # type: (...) -> Tuple[Tensor, Tensor]
    """
    Softmax attention over the last two axes of ``... x N x d`` operands.

    :return: The attended values and the attention weights (rows sum to one).
    """
    logits = ops.matmul(q, ops.transpose(k, _swap_last(k.ndim))) * (q.shape[-1] ** -0.5)
    if bias is not None:
        logits = logits + bias
    weights = ops.softmax(logits, axis=-1)
    return ops.matmul(weights, v), weights


def performer_features(rng, head_dim, feature_count):
    # type: (np.random.Generator, int, int) -> np.ndarray
    """Draw the shared Gaussian projection ``head_dim x m`` of the positive random features."""
    if feature_count < 1:
        raise ContractError('Performer needs at least one random feature, got {}'.format(
            feature_count))
    return rng.standard_normal((head_dim, feature_count))


def _positive_features(x, projection, per_row):
    # type: (Tensor, np.ndarray, bool) -> Tensor
    feature_count = projection.shape[1]
    logits = ops.matmul(x, projection) - ops.sum(x * x, axis=-1, keepdims=True) * 0.5
    # The stabilizer cancels in the per-query normalization.
    if per_row:
        stabilizer = np.max(logits.data, axis=-1, keepdims=True)
    else:
        stabilizer = np.max(logits.data, axis=(-2, -1), keepdims=True)
    return ops.exp(logits - stabilizer) * (feature_count ** -0.5)


def performer_attention(
        q,  # type: Tensor
        k,  # type: Tensor
        v,  # type: Tensor
        projection,  # type: np.ndarray
        extra_bias=None  # type: Optional[Any]
):
    # type: (...) -> Tensor
    """
    Linear attention with positive random features approximating the softmax kernel.

    ``phi(x) = exp(w^T x - |x|^2 / 2) / sqrt(m)`` with queries and keys scaled by
    ``d_head ** -1/4``; each query's output is normalized by its total kernel mass.

    :param projection: The ``d_head x m`` Gaussian projection shared by queries and keys.
    """
    if extra_bias is not None:
        raise UnsupportedCombination('Pairwise attention biases need the softmax attention path')

    scale = q.shape[-1] ** -0.25
    phi_q = _positive_features(q * scale, projection, per_row=True)
    phi_k = _positive_features(k * scale, projection, per_row=False)

    context = ops.matmul(ops.transpose(phi_k, _swap_last(phi_k.ndim)), v)
    numerator = ops.matmul(phi_q, context)
    denominator = ops.matmul(phi_q, ops.sum(phi_k, axis=-2, keepdims=True).transpose(
        _swap_last(phi_k.ndim)))
    return numerator / denominator


def _swap_last(ndim):
    # type: (int) -> Tuple[int, ...]
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


class WindowAttention(Module):
    """Multi-head attention inside windows, projecting heads back to the embedding width."""

    def __init__(
            self,
            cfg,  # type: WindowConfig
            rng,  # type: np.random.Generator
            kind=SOFTMAX,  # type: str
            feature_count=64,  # type: int
            zero_proj=False,  # type: bool
            zero_bias=False  # type: bool
    ):
        # type: (...) -> None
        validate_window_config(cfg)
        if kind not in ATTENTION_KINDS:
            raise ContractError('Unknown attention kind "{}"'.format(kind))

        self.cfg = cfg
        self.kind = kind
        self.qkv = Linear(cfg.embed_dim, 3 * cfg.embed_dim, rng)
        self.proj = Linear(cfg.embed_dim, cfg.embed_dim, rng, zero_init=zero_proj)
        self.relative_bias = RelPosBias(cfg.window, cfg.heads, rng, zero_init=zero_bias)
        self.projection = None  # type: Optional[np.ndarray]
        if kind == PERFORMER:
            self.projection = performer_features(
                rng, cfg.embed_dim // cfg.heads, feature_count)
        self.last_weights = None  # type: Optional[np.ndarray]

    def __call__(
            self,
            windows,  # type: Tensor
            extra_bias=None,  # type: Optional[Any]
            mask=None,  # type: Optional[np.ndarray]
            window=None,  # type: Optional[Sequence[int]]
            record=False  # type: bool
    ):
        # type: (...) -> Tensor
        """
        Attend within each window.

        :param windows: ``(B * nW) x N x E`` tokens.
        :param extra_bias: Optional additive logits broadcastable to ``(B * nW) x heads x N x N``.
        :param mask: Optional ``nW x N x N`` shifted-window mask.
        :param window: The window extents the tokens were grouped with; defaults to the
            configured window.
        :param record: Keep the attention weights in ``last_weights``.

        :return: Projected attention output, without the residual.
        """
        count, tokens, width = windows.shape
        if width != self.cfg.embed_dim:
            raise DimensionError('Token width {} does not match embedding width {}'.format(
                width, self.cfg.embed_dim))

        heads = self.cfg.heads
        qkv = ops.rearrange(self.qkv(windows), 'n t (three h d) -> three n h t d',
                            three=3, h=heads)
        q, k, v = qkv[0], qkv[1], qkv[2]

        if self.kind == PERFORMER:
            if mask is not None:
                raise UnsupportedCombination('Shifted-window masks need the softmax attention path')
            out = performer_attention(q, k, v, self.projection, extra_bias)
            self.last_weights = None
        else:
            bias = self.relative_bias(window)  # heads x N x N
            if bias.shape[-1] != tokens:
                raise DimensionError('Relative bias covers {} tokens, windows hold {}'.format(
                    bias.shape[-1], tokens))
            if extra_bias is not None:
                extra_bias = as_tensor(extra_bias)
                if extra_bias.shape[-2:] not in ((tokens, tokens), (1, tokens)):
                    raise DimensionError(
                        'Extra bias of shape {} does not cover {} x {} token pairs'.format(
                            extra_bias.shape, tokens, tokens))
                bias = bias + extra_bias
            if mask is not None:
                # Windows are ordered sample-major, so the per-sample mask tiles over the batch.
                tiled = np.tile(mask, (count // mask.shape[0], 1, 1))
                bias = bias + tiled[:, np.newaxis]
            out, weights = scaled_dot_product(q, k, v, bias)
            self.last_weights = weights.data.copy() if record else None

        return self.proj(ops.rearrange(out, 'n h t d -> n t (h d)'))


def mhsa_window(
        tokens,  # type: Tensor
        attention,  # type: WindowAttention
        extra_bias=None,  # type: Optional[Any]
        mask=None  # type: Optional[np.ndarray]
):
    # type: (...) -> Tensor
    """Apply windowed multi-head self-attention to ``(B * nW) x N x E`` tokens."""
    return attention(tokens, extra_bias=extra_bias, mask=mask)


# Per-block segmentation hooks. ``rows`` is the B x D x H x W x e chunk-matrix row of every
# token; an adapter returns a Tensor.
BlockHooks = NamedTuple('BlockHooks', [
    ('linear_bias', Optional[Callable[[np.ndarray], Tensor]]),
    ('attn_bias', Optional[Callable[[Tensor], Tensor]]),
])

NO_HOOKS = BlockHooks(linear_bias=None, attn_bias=None)


class EncoderBlock(Module):
    """
    Pre-norm residual block: norm, windowed attention, residual, norm, feedforward, residual.

    Both residual branches are gated by per-sample stochastic depth during training.
    """

    def __init__(
            self,
            cfg,  # type: WindowConfig
            rng,  # type: np.random.Generator
            mlp_ratio=2,  # type: int
            drop_path=0.0,  # type: float
            kind=SOFTMAX,  # type: str
            feature_count=64,  # type: int
            hooks=NO_HOOKS,  # type: BlockHooks
            zero_init=False  # type: bool
    ):
        # type: (...) -> None
        if kind == PERFORMER and any(cfg.shift):
            raise UnsupportedCombination('Shifted windows need the softmax attention path')
        if kind == PERFORMER and hooks.attn_bias is not None:
            raise UnsupportedCombination(
                'The attention-logit segmentation bias needs the softmax attention path')

        self.cfg = cfg
        self.norm1 = LayerNorm(cfg.embed_dim)
        self.attn = WindowAttention(cfg, rng, kind, feature_count, zero_proj=zero_init)
        self.norm2 = LayerNorm(cfg.embed_dim)
        self.mlp = Mlp(cfg.embed_dim, mlp_ratio * cfg.embed_dim, rng)
        if zero_init:
            self.mlp.fc2 = Linear(mlp_ratio * cfg.embed_dim, cfg.embed_dim, rng, zero_init=True)
        self.drop_path = drop_path
        self.linear_bias = hooks.linear_bias
        self.attn_bias = hooks.attn_bias
        self.rng = np.random.default_rng(rng.integers(2 ** 32))
        self.record = False
        self.last_layout = None  # type: Optional[WindowLayout]

    def __call__(self, x, rows=None):
        # type: (Tensor, Optional[np.ndarray]) -> Tensor
        """
        :param x: Token grid ``B x D x H x W x E``.
        :param rows: Chunk-matrix rows of the tokens, needed when a segmentation hook is set.
        """
        hooked = self.linear_bias is not None or self.attn_bias is not None
        if hooked and rows is None:
            raise ContractError('Encoder block with a segmentation hook needs chunk rows')

        grid = x.shape[1:4]
        window, shift = effective_window(grid, self.cfg.window, self.cfg.shift)

        windows, layout = window_partition(self.norm1(x), window, shift)
        mask = shifted_window_mask(layout.padded, window, shift)

        extra_bias = None
        if self.attn_bias is not None:
            key_rows, _ = window_partition(rows, window, shift)
            extra_bias = self.attn_bias(key_rows)

        attended = self.attn(windows, extra_bias=extra_bias, mask=mask, window=window,
                             record=self.record)
        self.last_layout = layout if self.record else None

        out = x + ops.drop_path(window_reverse(attended, layout), self.drop_path,
                                self.training, self.rng)
        if self.linear_bias is not None:
            out = out + self.linear_bias(rows)

        return out + ops.drop_path(self.mlp(self.norm2(out)), self.drop_path,
                                   self.training, self.rng)


def encoder_block(x, block, rows=None):
    # type: (Tensor, EncoderBlock, Optional[np.ndarray]) -> Tensor
    """Apply one encoder block to a token grid."""
    return block(x, rows)


class PatchMerging(Module):
    """Concatenate 2 x 2 spatial neighbours and reduce 4E channels to 2E."""

    def __init__(self, width, rng):
        # type: (int, np.random.Generator) -> None
        self.width = width
        self.reduction = Linear(4 * width, 2 * width, rng, bias=False)

    def __call__(self, x):
        # type: (Tensor) -> Tensor
        if x.ndim != 5 or x.shape[-1] != self.width:
            raise DimensionError('Patch merging expects B x D x H x W x {}, got {}'.format(
                self.width, x.shape))
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise DimensionError('Patch merging needs even spatial extents, got {}x{}'.format(
                x.shape[2], x.shape[3]))

        merged = ops.rearrange(x, 'b d (h p) (w q) e -> b d h w (p q e)', p=2, q=2)
        return self.reduction(merged)


def patch_merging(x, merging):
    # type: (Tensor, PatchMerging) -> Tensor
    """Halve the spatial resolution of a token grid and double its width."""
    return merging(x)


def sinusoidal_position_encoding(grid, width):
    # type: (Sequence[int], int) -> np.ndarray
    """
    Fixed 3D sine/cosine encoding ``D x H x W x width``.

    The channels are split between the depth, height and width axes, each axis getting an even
    share of sine/cosine pairs.
    """
    if width % 2:
        raise DimensionError('Positional encoding width must be even, got {}'.format(width))

    shares = [2 * (width // 6), 2 * (width // 6)]
    shares.append(width - sum(shares))

    encodings = []
    for axis, (extent, share) in enumerate(zip(grid, shares)):
        positions = np.arange(extent, dtype=np.float64)
        frequencies = 1.0 / (10000.0 ** (np.arange(0, share, 2) / max(share, 1)))
        angles = positions[:, np.newaxis] * frequencies[np.newaxis]
        axis_encoding = np.zeros((extent, share))
        axis_encoding[:, 0::2] = np.sin(angles)
        axis_encoding[:, 1::2] = np.cos(angles)
        shape = [1, 1, 1, share]
        shape[axis] = extent
        encodings.append(np.broadcast_to(axis_encoding.reshape(shape), tuple(grid) + (share,)))

    return np.concatenate(encodings, axis=-1)


def attention_weights(block):
    # type: (EncoderBlock) -> Optional[np.ndarray]
    """Return the weights a recording block kept from its last forward, if any."""
    return block.attn.last_weights


def with_recording(blocks, enabled=True):
    # type: (Sequence[EncoderBlock], bool) -> None
    """Switch attention recording on or off for a set of blocks."""
    for block in blocks:
        block.record = enabled
        if not enabled:
            block.attn.last_weights = None
