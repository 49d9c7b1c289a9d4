"""
The full model: face branch, full-frame branches, side inputs and the prediction head.

The face branch is the main input. Its video is cut into patches that go through the shared
backbone, the reassembled feature volume is cut into token cubes, and the token grid passes
through the encoder stages. Segmentation forcing acts on the input video (variants d and e),
on the first token grid (a), or inside every encoder block (b and c). The blocks of the last
stage attend to the side inputs.

Full-frame branches share the backbone but have their own transformer weights; their pooled
outputs join the face branch's at the head (late fusion) and their token grids are side inputs
of the face branch.
"""
import logging
from typing import (  # noqa pylint: disable=unused-import
    Any,
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
    BlockHooks,
    EncoderBlock,
    NO_HOOKS,
    PatchMerging,
    WindowConfig,
    sinusoidal_position_encoding,
)
from .backbone import (
    Backbone,
    BackboneConfig,
    CubeEmbedding,
    assemble_feature_grid,
    backbone_forward,
)
from .errors import ConfigError, ContractError, DataError, DimensionError
from .forced import (
    ATTN_BIAS,
    CHANNEL_CONCAT,
    FORCED_VARIANTS,
    INPUT_ADD,
    LINEAR_BIAS,
    OFF,
    POS_ENCODING,
    TOKEN_VARIANTS,
    AttnBiasForcing,
    ChannelConcatForcing,
    InputAddForcing,
    LinearBiasForcing,
    PositionForcing,
)
from .fusion import (
    ALTERNATING,
    AUDIO,
    FULLFRAME_INTERLOCUTOR,
    FULLFRAME_TARGET,
    METADATA,
    TRANSCRIPT,
    FusionBlock,
    FusionBlockConfig,
    MetadataMixer,
    SideInput,
    SideProjection,
    channel_project,
    concat_metadata,
    validate_fusion_config,
)
from .nn import Linear, Module, module_rng
from .patching import partition_patches, patchify_segmap, rescale_m1, token_rows
from .tensor import Tensor, as_tensor


_logger = logging.getLogger(__name__)


REGRESSION = 'regression_ocean'
CLASSIFICATION = 'classification'
TASKS = (REGRESSION, CLASSIFICATION)

OCEAN_WIDTH = 5

FACE_ONLY = 'face_only'
CONCAT_ALL = 'concat_all'
LATE_FUSION_MODES = (FACE_ONLY, CONCAT_ALL)

FACE = 'face'
SEG = 'seg'
MODALITIES = (FULLFRAME_TARGET, FULLFRAME_INTERLOCUTOR, AUDIO, TRANSCRIPT, METADATA)
FULLFRAME_BRANCHES = (FULLFRAME_TARGET, FULLFRAME_INTERLOCUTOR)


StageConfig = NamedTuple('StageConfig', [
    ('depths', Tuple[int, ...]),
    ('widths', Tuple[int, ...]),
    ('heads', Tuple[int, ...]),
    ('window', Tuple[int, int, int]),
    ('token_cube', Tuple[int, int, int]),
    ('mlp_ratio', int),
    ('drop_path', float),
    ('attention_kind', str),
    ('feature_count', int),
])


ModelConfig = NamedTuple('ModelConfig', [
    ('task', str),
    ('classes', int),
    ('modalities', Tuple[str, ...]),  # Active inputs besides the face video.
    ('forced_variant', str),
    ('late_fusion', str),
    ('use_backbone', bool),
    ('input_shape', Tuple[int, int, int, int]),  # C x D x H x W of every video.
    ('patch_size', int),
    ('backbone', BackboneConfig),
    ('stages', StageConfig),
    ('fusion', FusionBlockConfig),
    ('audio_width', int),
    ('transcript_width', int),
    ('meta_width', int),
    ('sinusoidal_pos', bool),
    ('seg_min_fraction', float),
    ('seg_per_frame', bool),  # Maps are B x D x H x W instead of static B x H x W.
])


# One batch of model inputs. Absent modalities are None.
ModelInput = NamedTuple('ModelInput', [
    ('face', np.ndarray),  # B x C x D x H x W
    ('seg', Optional[np.ndarray]),  # B x H x W, or B x D x H x W per frame
    ('fullframe_target', Optional[np.ndarray]),
    ('fullframe_interlocutor', Optional[np.ndarray]),
    ('audio', Optional[np.ndarray]),  # B x T x audio_width
    ('transcript', Optional[np.ndarray]),  # B x T x transcript_width
    ('metadata', Optional[np.ndarray]),  # B x meta_width
])
ModelInput.__new__.__defaults__ = (None,) * 6  # type: ignore


def output_width(cfg):
    # type: (ModelConfig) -> int
    """Return the width of the predictions: five traits, or one logit per class."""
    return OCEAN_WIDTH if cfg.task == REGRESSION else cfg.classes


def validate_model_config(cfg):
    # type: (ModelConfig) -> None
    """Raise a ConfigError for an inconsistent model configuration."""
    if cfg.task not in TASKS:
        raise ConfigError('Unknown task "{}", expected one of {}'.format(
            cfg.task, ', '.join(TASKS)))
    if cfg.task == CLASSIFICATION and cfg.classes < 2:
        raise ConfigError('Classification needs at least 2 classes, got {}'.format(cfg.classes))
    if cfg.forced_variant not in FORCED_VARIANTS:
        raise ConfigError('Unknown forced variant "{}"'.format(cfg.forced_variant))
    if cfg.late_fusion not in LATE_FUSION_MODES:
        raise ConfigError('Unknown late fusion mode "{}"'.format(cfg.late_fusion))
    for name in cfg.modalities:
        if name not in MODALITIES:
            raise ConfigError('Unknown modality "{}", expected one of {}'.format(
                name, ', '.join(MODALITIES)))
    if FULLFRAME_INTERLOCUTOR in cfg.modalities and FULLFRAME_TARGET not in cfg.modalities:
        raise ConfigError('The interlocutor branch needs the target full-frame branch')
    if METADATA in cfg.modalities and not (
            AUDIO in cfg.modalities or TRANSCRIPT in cfg.modalities):
        raise ConfigError('Metadata is concatenated to audio or transcript tokens; '
                          'neither is active')

    stages = cfg.stages
    if not len(stages.depths) == len(stages.widths) == len(stages.heads) or not stages.depths:
        raise ConfigError('Stage depths, widths and heads must have one entry per stage')
    for previous, width in zip(stages.widths, stages.widths[1:]):
        if width != 2 * previous:
            raise ConfigError('Each stage must double the width of the previous one, got {}'.format(
                stages.widths))

    validate_fusion_config(cfg.fusion)
    token_grids(cfg)


def token_grids(cfg):
    # type: (ModelConfig) -> List[Tuple[int, int, int]]
    """Return the token grid ``D x H x W`` of every stage."""
    _, frames, height, width = cfg.input_shape
    if height % cfg.patch_size or width % cfg.patch_size:
        raise ConfigError('Input {}x{} is not divisible into {}-pixel patches'.format(
            height, width, cfg.patch_size))

    factor = cfg.backbone.downsample_factor
    if cfg.patch_size % factor:
        raise ConfigError('Patch size {} is not divisible by the downsample factor {}'.format(
            cfg.patch_size, factor))

    cube = cfg.stages.token_cube
    extents = (frames, height // factor, width // factor)
    if any(extent % c for extent, c in zip(extents, cube)):
        raise ConfigError('Feature volume {} is not divisible into {} token cubes'.format(
            extents, cube))

    grid = tuple(extent // c for extent, c in zip(extents, cube))
    grids = [grid]  # type: List[Tuple[int, int, int]]
    for _ in cfg.stages.depths[1:]:
        d, h, w = grids[-1]
        if h % 2 or w % 2:
            raise ConfigError('Token grid {} cannot be merged to a coarser stage'.format(
                grids[-1]))
        grids.append((d, h // 2, w // 2))
    return grids  # type: ignore


def fusion_order(cfg):
    # type: (ModelConfig) -> Tuple[str, ...]
    """The configured fusion order restricted to the active modalities."""
    return tuple(name for name in cfg.fusion.order if name in cfg.modalities)


class Branch(Module):
    """One video branch: tokenization and the encoder stages."""

    def __init__(
            self,
            name,  # type: str
            cfg,  # type: ModelConfig
            backbone,  # type: Optional[Backbone]
            seed,  # type: int
            forced_variant=OFF,  # type: str
            order=()  # type: Tuple[str, ...]
    ):
        # type: (...) -> None
        self.name = name
        self.forced_variant = forced_variant
        self.grids = token_grids(cfg)
        self.sinusoidal_pos = cfg.sinusoidal_pos
        self.patch_size = cfg.patch_size
        self.backbone = backbone

        stages = cfg.stages
        width = stages.widths[0]
        channels = cfg.input_shape[0]
        if backbone is not None:
            self.embed = CubeEmbedding(cfg.backbone.out_channels, stages.token_cube, width,
                                       module_rng(seed, name, 'embed'))
        else:
            factor = cfg.backbone.downsample_factor
            d, h, w = stages.token_cube
            self.embed = CubeEmbedding(channels, (d, h * factor, w * factor), width,
                                       module_rng(seed, name, 'embed'))

        self.input_forcing = None  # type: Optional[Module]
        if forced_variant == CHANNEL_CONCAT:
            self.input_forcing = ChannelConcatForcing(channels)
        elif forced_variant == INPUT_ADD:
            self.input_forcing = InputAddForcing()

        self.position = PositionForcing(width) if forced_variant == POS_ENCODING else None

        self.stages = []  # type: List[List[EncoderBlock]]
        self.mergings = []  # type: List[PatchMerging]
        for s, (depth, stage_width, heads) in enumerate(
                zip(stages.depths, stages.widths, stages.heads)):
            if s > 0:
                self.mergings.append(PatchMerging(
                    stages.widths[s - 1], module_rng(seed, name, 'merge', str(s))))
            shift = tuple(w // 2 for w in stages.window)
            if stages.attention_kind != SOFTMAX:
                shift = (0, 0, 0)
            blocks = []
            for j in range(depth):
                window_cfg = WindowConfig(window=stages.window, heads=heads,
                                          embed_dim=stage_width,
                                          shift=shift if j % 2 else (0, 0, 0))
                blocks.append(EncoderBlock(
                    window_cfg, module_rng(seed, name, 'stage', str(s), str(j)),
                    mlp_ratio=stages.mlp_ratio, drop_path=stages.drop_path,
                    kind=stages.attention_kind, feature_count=stages.feature_count,
                    hooks=_block_hooks(forced_variant, stage_width, heads)))
            self.stages.append(blocks)

        self.fusions = []  # type: List[FusionBlock]
        if order:
            last = len(stages.depths) - 1
            for j, block in enumerate(self.stages[last]):
                block_order = order
                if cfg.fusion.mode == ALTERNATING:
                    block_order = (order[j % len(order)],)
                self.fusions.append(FusionBlock(
                    block, cfg.fusion._replace(order=block_order), stages.heads[last],
                    module_rng(seed, name, 'fusion', str(j)), stages.feature_count))

    def uses_rows(self):
        # type: () -> bool
        """Return whether the branch needs chunk rows of a segmentation map."""
        return self.forced_variant in TOKEN_VARIANTS

    def __call__(
            self,
            video,  # type: Any
            seg=None,  # type: Optional[np.ndarray]
            rows=None,  # type: Optional[List[np.ndarray]]
            sides=None  # type: Optional[Dict[str, Tensor]]
    ):
        # type: (...) -> Tensor
        """
        Run the branch.

        :param video: ``B x C x D x H x W``.
        :param seg: Segmentation maps for input forcing.
        :param rows: Chunk rows of every stage for token forcing.
        :param sides: Projected side tokens for the fusion blocks.

        :return: Token grid of the last stage, ``B x D x H x W x E``.
        """
        video = as_tensor(video)
        if self.input_forcing is not None:
            video = self.input_forcing(video, seg)

        if self.backbone is not None:
            grid = partition_patches(video, self.patch_size)
            volume = assemble_feature_grid(backbone_forward(grid, self.backbone))
        else:
            volume = video

        x = self.embed(volume)
        if tuple(x.shape[1:4]) != self.grids[0]:
            raise DimensionError('Branch "{}" expected token grid {}, got {}'.format(
                self.name, self.grids[0], x.shape[1:4]))

        if self.sinusoidal_pos:
            x = x + sinusoidal_position_encoding(self.grids[0], x.shape[-1])
        if self.position is not None:
            x = self.position(x, rows[0])

        last = len(self.stages) - 1
        for s, blocks in enumerate(self.stages):
            if s > 0:
                x = self.mergings[s - 1](x)
            stage_rows = rows[s] if rows is not None else None
            for j, block in enumerate(blocks):
                if s == last and self.fusions:
                    x = self.fusions[j](x, sides or {}, stage_rows)
                else:
                    x = block(x, stage_rows)

        return x

    def blocks(self):
        # type: () -> List[EncoderBlock]
        """Return every encoder block, stage by stage."""
        return [block for blocks in self.stages for block in blocks]


def _block_hooks(variant, width, heads):
    # type: (str, int, int) -> BlockHooks
    if variant == LINEAR_BIAS:
        return BlockHooks(linear_bias=LinearBiasForcing(width, width), attn_bias=None)
    if variant == ATTN_BIAS:
        return BlockHooks(linear_bias=None, attn_bias=AttnBiasForcing(width, heads))
    return NO_HOOKS


class FatModel(Module):
    """The assembled model."""

    def __init__(self, cfg, seed=0):
        # type: (ModelConfig, int) -> None
        validate_model_config(cfg)
        self.cfg = cfg

        self.backbone = None  # type: Optional[Backbone]
        if cfg.use_backbone:
            self.backbone = Backbone(cfg.backbone, module_rng(seed, 'backbone'))

        order = fusion_order(cfg)
        self.face = Branch(FACE, cfg, self.backbone, seed, cfg.forced_variant, order)
        self.fullframe = {
            name: Branch(name, cfg, self.backbone, seed)
            for name in FULLFRAME_BRANCHES if name in cfg.modalities
        }

        fusion_width = cfg.stages.widths[-1]
        native = {
            FULLFRAME_TARGET: fusion_width,
            FULLFRAME_INTERLOCUTOR: fusion_width,
            AUDIO: cfg.audio_width,
            TRANSCRIPT: cfg.transcript_width,
        }
        self.projections = {
            name: SideProjection(native[name], fusion_width, module_rng(seed, 'project', name))
            for name in order
        }
        self.mixers = {}  # type: Dict[str, MetadataMixer]
        if METADATA in cfg.modalities:
            self.mixers = {
                name: MetadataMixer(native[name], cfg.meta_width)
                for name in (AUDIO, TRANSCRIPT) if name in cfg.modalities
            }

        head_width = fusion_width
        if cfg.late_fusion == CONCAT_ALL:
            head_width *= 1 + len(self.fullframe)
        self.head = Linear(head_width, output_width(cfg), module_rng(seed, 'head'))

        _logger.debug('Built model with %d parameters', sum(p.size for p in self.parameters()))

    def __call__(self, sample):
        # type: (ModelInput) -> Tensor
        """Predict for one batch: ``B x 5`` trait scores or ``B x k`` class logits."""
        return classification_head(self.branch_outputs(sample), self.head, self.cfg)

    def branch_outputs(self, sample):
        # type: (ModelInput) -> List[Tensor]
        """Run every branch the head reads; the face branch comes first."""
        cfg = self.cfg
        face = _require(sample, FACE)

        seg = None
        if cfg.forced_variant != OFF:
            seg = getattr(sample, SEG, None)
            if seg is None:
                raise ConfigError('Forced variant "{}" needs a segmentation map'.format(
                    cfg.forced_variant))

        fullframe_grids = {
            name: branch(_require(sample, name)) for name, branch in self.fullframe.items()
        }

        sides = {}  # type: Dict[str, Tensor]
        for name in self.projections:
            if name in FULLFRAME_BRANCHES:
                grid = fullframe_grids[name]
                features = ops.reshape(grid, (grid.shape[0], -1, grid.shape[-1]))
            else:
                features = as_tensor(_require(sample, name))
                if name in self.mixers:
                    mixed = concat_metadata(SideInput(name, features),
                                            _require(sample, METADATA), self.mixers[name])
                    features = mixed.features
            sides[name] = channel_project(SideInput(name, features), self.projections[name])

        rows = None
        if seg is not None and self.face.uses_rows():
            rows = stage_rows(seg, self.cfg)

        outputs = [_channels_first(self.face(face, seg, rows, sides))]
        if cfg.late_fusion == CONCAT_ALL:
            outputs.extend(_channels_first(fullframe_grids[name]) for name in self.fullframe)
        return outputs

    def attention_blocks(self):
        # type: () -> List[List[EncoderBlock]]
        """Return the face branch's encoder blocks grouped by stage."""
        return self.face.stages


def stage_rows(seg, cfg):
    # type: (np.ndarray, ModelConfig) -> List[np.ndarray]
    """
    Return the chunk rows of every token at every stage, ``B x D x H x W x E_s`` each.

    Chunks are the patch positions of the input. With ``seg_per_frame`` the maps are also
    chunked in time, one chunk layer per token layer of the first stage. Stages whose token grid
    is coarser than the chunk grid get the chunk matrix re-binned onto their grid.
    """
    seg = np.asarray(seg, dtype=np.float64)
    expected = 4 if cfg.seg_per_frame else 3
    if seg.ndim != expected:
        raise DataError('Segmentation maps must be {}, got {}'.format(
            'B x D x H x W' if cfg.seg_per_frame else 'B x H x W', seg.shape))

    grids = token_grids(cfg)
    chunk_grid = (cfg.input_shape[2] // cfg.patch_size,
                  cfg.input_shape[3] // cfg.patch_size)  # type: Tuple[int, ...]
    if cfg.seg_per_frame:
        chunk_grid = (grids[0][0],) + chunk_grid

    out = [[] for _ in grids]  # type: List[List[np.ndarray]]
    for sample_seg in seg:
        base = patchify_segmap(sample_seg, chunk_grid, cfg.stages.widths[0],
                               cfg.seg_min_fraction)
        for s, (grid, width) in enumerate(zip(grids, cfg.stages.widths)):
            target = tuple(min(c, t) for c, t in zip(base.grid, grid))
            m = rescale_m1(base, int(np.prod(target)), width, target)
            out[s].append(token_rows(m, grid))

    return [np.stack(stage) for stage in out]


def _require(sample, name):
    # type: (Any, str) -> np.ndarray
    value = getattr(sample, name, None)
    if value is None:
        raise DataError('Sample has no "{}" input, but the model is configured to read it'.format(
            name))
    return value


def _channels_first(grid):
    # type: (Tensor) -> Tensor
    return ops.rearrange(grid, 'b d h w e -> b e d h w')


def face_branch_forward(model, sample):
    # type: (FatModel, ModelInput) -> Tensor
    """Return the face branch output ``B x C x D x H x W`` with forcing and fusion applied."""
    return model.branch_outputs(sample)[0]


def fullframe_branch_forward(model, video, name=FULLFRAME_TARGET):
    # type: (FatModel, Any, str) -> Tensor
    """Return a full-frame branch output ``B x C x D x H x W``."""
    if name not in model.fullframe:
        raise ConfigError('Full-frame branch "{}" is not active'.format(name))
    return _channels_first(model.fullframe[name](video))


def classification_head(outputs, head, cfg):
    # type: (Sequence[Tensor], Linear, ModelConfig) -> Tensor
    """
    Pool every branch output, concatenate the channels and apply the affine head.

    With face-only late fusion, only the first (face) output is used.
    """
    if not outputs:
        raise ContractError('The head needs at least one branch output')

    used = list(outputs[:1]) if cfg.late_fusion == FACE_ONLY else list(outputs)
    pooled = [
        ops.reshape(ops.adaptive_avg_pool3d(out), (out.shape[0], out.shape[1]))
        for out in used
    ]
    features = pooled[0] if len(pooled) == 1 else ops.concat(pooled, axis=-1)
    return head(features)


def model_forward(model, sample):
    # type: (FatModel, ModelInput) -> Tensor
    """Predict for one batch of samples."""
    return model(sample)
