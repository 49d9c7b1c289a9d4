"""
Segmentation-driven attention forcing.

Five ways of injecting a foreground map into the network, selected by a single tag:

======  ================  ==============================================================
tag     name              effect
======  ================  ==============================================================
``a``   pos_encoding      ``x += w1 * row`` on the tokens, next to the sinusoidal encoding
``b``   linear_bias       ``learned_bias * (row @ w2)`` added after each attention residual
``c``   attn_bias         per-head logit shift keyed on the key token's chunk
``d``   channel_concat    map appended as a fourth input channel, reduced back to three
``e``   input_add         ``x + gamma * map`` on every input channel
======  ================  ==============================================================

Every learnable piece starts where it changes nothing: ``w1``, ``learned_bias`` and the logit
adapter at zero, the channel reduction as a pass-through of the first three channels.
``gamma`` starts at one.
"""
from typing import (  # noqa pylint: disable=unused-import
    Any,
    Optional,
    Sequence,
)

import numpy as np

from . import ops
from .attention import PERFORMER, SOFTMAX
from .errors import ConfigError, DimensionError, UnsupportedCombination
from .nn import Module, zeros
from .patching import SegPatchMatrix
from .tensor import Parameter, Tensor, as_tensor


OFF = 'off'
POS_ENCODING = 'a'
LINEAR_BIAS = 'b'
ATTN_BIAS = 'c'
CHANNEL_CONCAT = 'd'
INPUT_ADD = 'e'

FORCED_VARIANTS = (OFF, POS_ENCODING, LINEAR_BIAS, ATTN_BIAS, CHANNEL_CONCAT, INPUT_ADD)

_VARIANT_NAMES = {
    'pos_encoding': POS_ENCODING,
    'linear_bias': LINEAR_BIAS,
    'attn_bias': ATTN_BIAS,
    'channel_concat': CHANNEL_CONCAT,
    'input_add': INPUT_ADD,
}

# Variants that act on the token grid and therefore need chunk rows.
TOKEN_VARIANTS = (POS_ENCODING, LINEAR_BIAS, ATTN_BIAS)
# Variants that act on the raw input video.
INPUT_VARIANTS = (CHANNEL_CONCAT, INPUT_ADD)


def parse_forced_variant(text):
    # type: (str) -> str
    """
    Normalize a variant given by tag or by name.

    >>> parse_forced_variant('linear_bias')
    'b'
    >>> parse_forced_variant('E')
    'e'
    """
    value = text.strip().lower()
    value = _VARIANT_NAMES.get(value, value)
    if value not in FORCED_VARIANTS:
        raise ConfigError('Unknown forced variant "{}", expected one of {} or {}'.format(
            text, ', '.join(FORCED_VARIANTS), ', '.join(sorted(_VARIANT_NAMES))))
    return value


def _rows_for_tokens(m, tokens, chunk_index):
    # type: (SegPatchMatrix, int, Optional[np.ndarray]) -> np.ndarray
    if chunk_index is None:
        if tokens != m.nc:
            raise DimensionError('{} tokens do not match {} chunks'.format(tokens, m.nc))
        return m.m1
    chunk_index = np.asarray(chunk_index)
    if chunk_index.shape != (tokens,):
        raise DimensionError('Chunk map covers {} tokens, got {}'.format(
            chunk_index.shape, tokens))
    return m.m1[chunk_index]


def fa_pos_encoding(x, m, w1, chunk_index=None):
    # type: (Any, SegPatchMatrix, Any, Optional[np.ndarray]) -> Tensor
    """
    Add ``w1 * row`` of each token's chunk to the tokens.

    :param x: Tokens ``... x N x E``.
    :param m: Chunk matrix of width E.
    :param w1: Width-E weights.
    :param chunk_index: Chunk of every token; when omitted, token i is chunk i.
    """
    x = as_tensor(x)
    rows = _rows_for_tokens(m, x.shape[-2], chunk_index)
    if rows.shape[-1] != x.shape[-1]:
        raise DimensionError('Chunk rows of width {} cannot shift tokens of width {}'.format(
            rows.shape[-1], x.shape[-1]))
    return x + as_tensor(w1) * rows


def fa_linear_bias(attn_out, m, learned_bias, w2, chunk_index):
    # type: (Any, SegPatchMatrix, Any, Any, np.ndarray) -> Tensor
    """
    Add the forced bias ``learned_bias * (row @ w2)`` to an attention block's output.

    :param attn_out: The output projection of attention plus its residual, ``... x N x E``.
    :param w2: Width adapter ``e x E``.
    """
    attn_out = as_tensor(attn_out)
    rows = _rows_for_tokens(m, attn_out.shape[-2], chunk_index)
    bias = ops.matmul(rows, w2)
    if bias.shape[-1] != attn_out.shape[-1]:
        raise DimensionError('Forced bias of width {} does not match tokens of width {}'.format(
            bias.shape[-1], attn_out.shape[-1]))
    return attn_out + as_tensor(learned_bias) * bias


def fa_attn_bias(logits, m, adapter, chunk_index, kind=SOFTMAX):
    # type: (Any, SegPatchMatrix, Any, np.ndarray, str) -> Tensor
    """
    Shift the attention logits ``... x heads x N x N`` of every key by its chunk's adapted row.

    :param adapter: Width-adapting map ``e x heads``.
    :param kind: The attention path in use; only the softmax path has logits.
    """
    if kind == PERFORMER:
        raise UnsupportedCombination('Logit biases need the softmax attention path')

    logits = as_tensor(logits)
    rows = _rows_for_tokens(m, logits.shape[-1], chunk_index)
    shift = ops.matmul(rows, adapter)  # N x heads
    if shift.shape[-1] != logits.shape[-3]:
        raise DimensionError('Adapter gives {} heads, logits have {}'.format(
            shift.shape[-1], logits.shape[-3]))
    return logits + ops.rearrange(shift, 't h -> h 1 t')


def _seg_channel(seg, video_shape):
    # type: (Any, Sequence[int]) -> np.ndarray
    """Broadcast a static or per-frame map to ``[B x] 1 x D x H x W`` of a video."""
    seg = np.asarray(seg, dtype=np.float64)
    batched = len(video_shape) == 5
    spatial = tuple(video_shape[-2:])
    frames = video_shape[-3]
    core = tuple(seg.shape[1:]) if batched else tuple(seg.shape)

    if core[-2:] != spatial or len(core) not in (2, 3) or (len(core) == 3 and core[0] != frames):
        raise DimensionError('Segmentation map {} does not match video {}'.format(
            seg.shape, tuple(video_shape)))

    if len(core) == 2:
        seg = seg[..., np.newaxis, :, :]
    seg = np.broadcast_to(seg, seg.shape[:-3] + (frames,) + spatial)
    return seg[:, np.newaxis] if batched else seg[np.newaxis]


def fa_channel_concat(x, seg, weight, bias=None):
    # type: (Any, Any, Any, Optional[Any]) -> Tensor
    """
    Append the map as a fourth channel and reduce back to three with a kernel-1 convolution.

    :param x: Video ``[B x] C x D x H x W``.
    :param seg: Map ``[B x] H x W`` or ``[B x] D x H x W``.
    :param weight: Kernel ``C x (C + 1)``.
    """
    x = as_tensor(x)
    channel_axis = x.ndim - 4
    stacked = ops.concat([x, _seg_channel(seg, x.shape)], axis=channel_axis)
    return ops.conv1d_channels(stacked, weight, bias, axis=channel_axis)


def fa_input_add(x, seg, gamma):
    # type: (Any, Any, Any) -> Tensor
    """Add ``gamma * map`` to every channel of the video."""
    x = as_tensor(x)
    return x + as_tensor(gamma) * _seg_channel(seg, x.shape)


class PositionForcing(Module):
    """Learnable width-E weights scaling the chunk rows added to the tokens."""

    def __init__(self, width):
        # type: (int) -> None
        self.w1 = zeros((width,))

    def __call__(self, x, rows):
        # type: (Tensor, np.ndarray) -> Tensor
        return x + self.w1 * rows


class LinearBiasForcing(Module):
    """Per-block forced bias added after the attention residual."""

    def __init__(self, row_width, width):
        # type: (int, int) -> None
        self.w2 = Parameter(np.full((row_width, width), 1.0 / row_width))
        self.learned_bias = zeros((width,))

    def __call__(self, rows):
        # type: (np.ndarray) -> Tensor
        return self.learned_bias * ops.matmul(rows, self.w2)


class AttnBiasForcing(Module):
    """Per-block adapter from a key token's chunk row to a logit shift per head."""

    def __init__(self, row_width, heads):
        # type: (int, int) -> None
        self.adapter = zeros((row_width, heads))

    def __call__(self, key_rows):
        # type: (Tensor) -> Tensor
        """Map ``(B * nW) x N x e`` windowed rows to ``(B * nW) x heads x 1 x N`` shifts."""
        return ops.rearrange(ops.matmul(key_rows, self.adapter), 'n t h -> n h 1 t')


class ChannelConcatForcing(Module):
    """The 4 to 3 channel reduction, initialized to pass the video through."""

    def __init__(self, channels=3):
        # type: (int) -> None
        self.weight = Parameter(np.hstack([np.eye(channels), np.zeros((channels, 1))]))
        self.bias = zeros((channels,))

    def __call__(self, video, seg):
        # type: (Tensor, np.ndarray) -> Tensor
        return fa_channel_concat(video, seg, self.weight, self.bias)


class InputAddForcing(Module):
    """A learnable scalar scaling the map added to the input."""

    def __init__(self):
        # type: () -> None
        self.gamma = Parameter(np.ones(1))

    def __call__(self, video, seg):
        # type: (Tensor, np.ndarray) -> Tensor
        return fa_input_add(video, seg, self.gamma)
