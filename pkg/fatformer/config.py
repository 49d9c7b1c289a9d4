"""
Experiment configuration files.

An experiment file is a sectioned ``key = value`` document:

.. sourcecode:: ini

    [experiment]
    name = udiva
    seed = 0
    seeds = 1
    ablation = full

    [model]
    task = regression_ocean
    forced_variant = b
    ...

    [model.stages]
    depths = 2, 2
    ...

Every section is declared with :mod:`fatformer.declconf` processors, so the same declarations
parse and serialize, and validation errors name the offending section and key. Missing optional
keys take the defaults of the desk-scale presets.
"""
import hashlib
from typing import (  # noqa pylint: disable=unused-import
    Any,
    Callable,
    Dict,
    NamedTuple,
    Optional,
    Tuple,
)

from . import declconf as conf
from .attention import ATTENTION_KINDS, PERFORMER, SOFTMAX
from .backbone import BackboneConfig, default_backbone_config
from .data import GenerationSpec, default_generation_spec, generation_spec_processor
from .errors import ConfigError
from .forced import LINEAR_BIAS, parse_forced_variant
from .fusion import (
    AUDIO,
    FULLFRAME_INTERLOCUTOR,
    FULLFRAME_TARGET,
    METADATA,
    SEQUENTIAL,
    TRANSCRIPT,
    FusionBlockConfig,
    validate_fusion_config,
)
from .model import (
    CLASSIFICATION,
    CONCAT_ALL,
    REGRESSION,
    ModelConfig,
    StageConfig,
    validate_model_config,
)


DataConfig = NamedTuple('DataConfig', [
    ('samples', int),
    ('split', float),
    ('seed', int),
    ('balanced', bool),  # Class-balanced batches; classification only.
    ('spec', GenerationSpec),
])


OptimizerConfig = NamedTuple('OptimizerConfig', [
    ('lr_transformer', float),
    ('lr_backbone', float),
    ('weight_decay', float),
    ('epochs', int),
    ('batch_size', int),
])


OutputConfig = NamedTuple('OutputConfig', [
    ('directory', str),
])


ExperimentConfig = NamedTuple('ExperimentConfig', [
    ('name', str),
    ('seed', int),
    ('seeds', int),  # Runs per ablation row, with seeds seed, seed + 1, ...
    ('ablation', str),
    ('model', ModelConfig),
    ('data', DataConfig),
    ('optimizer', OptimizerConfig),
    ('outputs', OutputConfig),
])


def default_stage_config():
    # type: () -> StageConfig
    """Two stages of two blocks, widths 32 and 64."""
    return StageConfig(depths=(2, 2), widths=(32, 64), heads=(2, 4), window=(2, 4, 4),
                       token_cube=(2, 2, 2), mlp_ratio=2, drop_path=0.1,
                       attention_kind=SOFTMAX, feature_count=64)


def default_fusion_config():
    # type: () -> FusionBlockConfig
    """All sides in order, zero-initialized, on the performer path."""
    return FusionBlockConfig(
        order=(FULLFRAME_TARGET, FULLFRAME_INTERLOCUTOR, AUDIO, TRANSCRIPT),
        zero_init=True, attention_kind=PERFORMER, mode=SEQUENTIAL)


def default_model_config():
    # type: () -> ModelConfig
    """The desk-scale dyadic regression model with every side input."""
    spec = default_generation_spec()
    return ModelConfig(
        task=REGRESSION,
        classes=spec.classes,
        modalities=(FULLFRAME_TARGET, FULLFRAME_INTERLOCUTOR, AUDIO, TRANSCRIPT),
        forced_variant=LINEAR_BIAS,
        late_fusion=CONCAT_ALL,
        use_backbone=True,
        input_shape=(spec.channels, spec.frames, spec.height, spec.width),
        patch_size=8,
        backbone=default_backbone_config(),
        stages=default_stage_config(),
        fusion=default_fusion_config(),
        audio_width=spec.audio_width,
        transcript_width=spec.transcript_width,
        meta_width=spec.meta_width,
        sinusoidal_pos=True,
        seg_min_fraction=0.0,
        seg_per_frame=False,
    )


def _udiva():
    # type: () -> ExperimentConfig
    return ExperimentConfig(
        name='udiva',
        seed=0,
        seeds=1,
        ablation='full',
        model=default_model_config(),
        data=DataConfig(samples=64, split=0.75, seed=0, balanced=False,
                        spec=default_generation_spec()),
        optimizer=OptimizerConfig(lr_transformer=3e-4, lr_backbone=3e-5, weight_decay=0.02,
                                  epochs=10, batch_size=8),
        outputs=OutputConfig(directory='runs'),
    )


def _first_impressions():
    # type: () -> ExperimentConfig
    cfg = _udiva()
    model = cfg.model._replace(
        modalities=(FULLFRAME_TARGET, AUDIO, TRANSCRIPT, METADATA),
        fusion=cfg.model.fusion._replace(order=(FULLFRAME_TARGET, AUDIO, TRANSCRIPT)))
    return cfg._replace(name='first_impressions', model=model)


def _mpigi():
    # type: () -> ExperimentConfig
    cfg = _udiva()
    weights = (8.0, 6.0, 5.0, 4.0, 4.0, 3.0, 3.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    spec = cfg.data.spec._replace(class_weights=weights)
    model = cfg.model._replace(
        task=CLASSIFICATION, classes=spec.classes, modalities=(AUDIO,),
        fusion=cfg.model.fusion._replace(order=(AUDIO,)))
    return cfg._replace(
        name='mpigi',
        model=model,
        data=cfg.data._replace(balanced=True, spec=spec),
        optimizer=cfg.optimizer._replace(lr_transformer=6e-4, lr_backbone=6e-5,
                                         weight_decay=0.03, batch_size=15))


PRESETS = {
    'udiva': _udiva,
    'first_impressions': _first_impressions,
    'mpigi': _mpigi,
}  # type: Dict[str, Callable[[], ExperimentConfig]]


def preset(name):
    # type: (str) -> ExperimentConfig
    """
    Return a task preset.

    >>> preset('mpigi').optimizer.weight_decay
    0.03
    """
    if name not in PRESETS:
        raise ConfigError('Unknown preset "{}", expected one of {}'.format(
            name, ', '.join(sorted(PRESETS))))
    return PRESETS[name]()


def default_experiment_config():
    # type: () -> ExperimentConfig
    """The dyadic regression preset."""
    return preset('udiva')


def _as_tuple(_, value):
    return tuple(value)


_TUPLE = conf.Hooks(after_parse=_as_tuple)


def _located(check):
    # type: (Callable[[Any], None]) -> conf.Hooks
    """Hooks that run a validator after parsing and report its errors at the section."""
    def _after_parse(state, value):
        try:
            check(value)
        except ConfigError as error:
            state.raise_error(ConfigError, str(error))
        return value

    return conf.Hooks(after_parse=_after_parse)


def _check_stages(stages):
    # type: (StageConfig) -> None
    if stages.attention_kind not in ATTENTION_KINDS:
        raise ConfigError('Unknown attention kind "{}"'.format(stages.attention_kind))
    if not 0.0 <= stages.drop_path < 1.0:
        raise ConfigError('drop_path must lie in [0, 1), got {}'.format(stages.drop_path))


def _located_forced_variant(state, value):
    try:
        return parse_forced_variant(value)
    except ConfigError as error:
        state.raise_error(ConfigError, str(error))


def _defaults_from(factory):
    # type: (Callable[[], Any]) -> Dict[str, Any]
    return factory()._asdict()


def _model_processor():
    # type: () -> Any
    model = _defaults_from(default_model_config)
    backbone = _defaults_from(default_backbone_config)
    stages = _defaults_from(default_stage_config)
    fusion = _defaults_from(default_fusion_config)

    return conf.named_tuple('model', ModelConfig, [
        conf.string('task', required=False, default=model['task']),
        conf.integer('classes', required=False, default=model['classes']),
        conf.array(conf.string('modalities', required=False), hooks=_TUPLE),
        conf.string('forced_variant', required=False, default=model['forced_variant'],
                    hooks=conf.Hooks(after_parse=_located_forced_variant)),
        conf.string('late_fusion', required=False, default=model['late_fusion']),
        conf.boolean('use_backbone', required=False, default=model['use_backbone']),
        conf.array(conf.integer('input_shape'), hooks=_TUPLE),
        conf.integer('patch_size', required=False, default=model['patch_size']),
        conf.named_tuple('backbone', BackboneConfig, [
            conf.integer('in_channels', required=False, default=backbone['in_channels']),
            conf.integer('stem_channels', required=False, default=backbone['stem_channels']),
            conf.integer('block_count', required=False, default=backbone['block_count']),
            conf.integer('downsample_factor', required=False,
                         default=backbone['downsample_factor']),
            conf.integer('out_channels', required=False, default=backbone['out_channels']),
            conf.integer('kernel', required=False, default=backbone['kernel']),
            conf.boolean('activation', required=False, default=backbone['activation']),
        ], required=False),
        conf.named_tuple('stages', StageConfig, [
            conf.array(conf.integer('depths'), hooks=_TUPLE),
            conf.array(conf.integer('widths'), hooks=_TUPLE),
            conf.array(conf.integer('heads'), hooks=_TUPLE),
            conf.array(conf.integer('window'), hooks=_TUPLE),
            conf.array(conf.integer('token_cube'), hooks=_TUPLE),
            conf.integer('mlp_ratio', required=False, default=stages['mlp_ratio']),
            conf.floating_point('drop_path', required=False, default=stages['drop_path']),
            conf.string('attention_kind', required=False, default=stages['attention_kind']),
            conf.integer('feature_count', required=False, default=stages['feature_count']),
        ], hooks=_located(_check_stages)),
        conf.named_tuple('fusion', FusionBlockConfig, [
            conf.array(conf.string('order', required=False), hooks=_TUPLE),
            conf.boolean('zero_init', required=False, default=fusion['zero_init']),
            conf.string('attention_kind', required=False, default=fusion['attention_kind']),
            conf.string('mode', required=False, default=fusion['mode']),
        ], hooks=_located(validate_fusion_config)),
        conf.integer('audio_width', required=False, default=model['audio_width']),
        conf.integer('transcript_width', required=False, default=model['transcript_width']),
        conf.integer('meta_width', required=False, default=model['meta_width']),
        conf.boolean('sinusoidal_pos', required=False, default=model['sinusoidal_pos']),
        conf.floating_point('seg_min_fraction', required=False,
                            default=model['seg_min_fraction']),
        conf.boolean('seg_per_frame', required=False, default=model['seg_per_frame']),
    ], hooks=_located(validate_model_config))


def _fill_lr_backbone(state, value):
    # type: (Any, OptimizerConfig) -> OptimizerConfig
    if value.lr_backbone is None:
        value = value._replace(lr_backbone=value.lr_transformer / 10.0)
    if min(value.lr_transformer, value.lr_backbone, value.weight_decay) < 0:
        state.raise_error(ConfigError, 'Learning rates and weight decay must be non-negative')
    if value.epochs < 0 or value.batch_size <= 0:
        state.raise_error(ConfigError, 'epochs must be non-negative and batch_size positive')
    return value


def _check_data(data):
    # type: (DataConfig) -> None
    if data.samples < 2:
        raise ConfigError('A dataset needs at least 2 samples, got {}'.format(data.samples))
    if not 0.0 < data.split < 1.0:
        raise ConfigError('split must lie in (0, 1), got {}'.format(data.split))


def validate_experiment(cfg):
    # type: (ExperimentConfig) -> None
    """Check that the data, model and optimizer sections agree with each other."""
    validate_model_config(cfg.model)
    spec = cfg.data.spec
    extents = (spec.channels, spec.frames, spec.height, spec.width)
    if tuple(cfg.model.input_shape) != extents:
        raise ConfigError('Model input {} does not match generated clips {}'.format(
            tuple(cfg.model.input_shape), extents))
    if cfg.model.backbone.in_channels != spec.channels:
        raise ConfigError('Backbone reads {} channels, clips have {}'.format(
            cfg.model.backbone.in_channels, spec.channels))
    for name, model_width, data_width in (
            ('audio', cfg.model.audio_width, spec.audio_width),
            ('transcript', cfg.model.transcript_width, spec.transcript_width),
            ('meta', cfg.model.meta_width, spec.meta_width)):
        if model_width != data_width:
            raise ConfigError('Model {} width {} does not match the data width {}'.format(
                name, model_width, data_width))
    if cfg.model.task == CLASSIFICATION and cfg.model.classes != spec.classes:
        raise ConfigError('Model has {} classes, data has {}'.format(
            cfg.model.classes, spec.classes))
    if cfg.data.balanced and cfg.model.task != CLASSIFICATION:
        raise ConfigError('Balanced batches need the classification task')
    if cfg.data.balanced and cfg.optimizer.batch_size < spec.classes:
        raise ConfigError('Balanced batches of {} cannot hold all {} classes'.format(
            cfg.optimizer.batch_size, spec.classes))
    if cfg.seeds < 1:
        raise ConfigError('seeds must be at least 1')


def _experiment_processor():
    # type: () -> Any
    base = default_experiment_config()
    return conf.named_tuple('experiment', ExperimentConfig, [
        conf.string('name', required=False, default=base.name),
        conf.integer('seed', required=False, default=base.seed),
        conf.integer('seeds', required=False, default=base.seeds),
        conf.string('ablation', required=False, default=base.ablation),
        _model_processor(),
        conf.named_tuple('data', DataConfig, [
            conf.integer('samples', required=False, default=base.data.samples),
            conf.floating_point('split', required=False, default=base.data.split),
            conf.integer('seed', required=False, default=base.data.seed),
            conf.boolean('balanced', required=False, default=base.data.balanced),
            generation_spec_processor(),
        ], hooks=_located(_check_data)),
        conf.named_tuple('optimizer', OptimizerConfig, [
            conf.floating_point('lr_transformer', required=False,
                                default=base.optimizer.lr_transformer),
            conf.floating_point('lr_backbone', required=False, default=None),
            conf.floating_point('weight_decay', required=False,
                                default=base.optimizer.weight_decay),
            conf.integer('epochs', required=False, default=base.optimizer.epochs),
            conf.integer('batch_size', required=False, default=base.optimizer.batch_size),
        ], required=False, hooks=conf.Hooks(after_parse=_fill_lr_backbone)),
        conf.named_tuple('outputs', OutputConfig, [
            conf.string('directory', required=False, default=base.outputs.directory),
        ], required=False),
    ], hooks=_located(validate_experiment))


EXPERIMENT_PROCESSOR = _experiment_processor()


def parse_experiment(text):
    # type: (str) -> ExperimentConfig
    """Parse an experiment document."""
    return conf.parse_from_string(EXPERIMENT_PROCESSOR, text)


def load_experiment(path):
    # type: (str) -> ExperimentConfig
    """Read an experiment file."""
    try:
        return conf.parse_from_file(EXPERIMENT_PROCESSOR, path)
    except (IOError, OSError) as error:
        raise ConfigError('Cannot read experiment file "{}": {}'.format(path, error))


def dump_experiment(cfg):
    # type: (ExperimentConfig) -> str
    """Serialize a configuration; equal configurations give identical text."""
    return conf.serialize_to_string(EXPERIMENT_PROCESSOR, cfg)


def save_experiment(cfg, path):
    # type: (ExperimentConfig, str) -> None
    """Write a configuration file."""
    conf.serialize_to_file(EXPERIMENT_PROCESSOR, cfg, path)


def config_hash(cfg):
    # type: (ExperimentConfig) -> str
    """SHA-256 of the serialized configuration."""
    return hashlib.sha256(dump_experiment(cfg).encode('utf-8')).hexdigest()


def with_overrides(
        cfg,  # type: ExperimentConfig
        seed=None,  # type: Optional[int]
        directory=None,  # type: Optional[str]
        forced_variant=None,  # type: Optional[str]
        seg_per_frame=None  # type: Optional[bool]
):
    # type: (...) -> ExperimentConfig
    """Apply command-line overrides."""
    if seed is not None:
        cfg = cfg._replace(seed=seed)
    if directory is not None:
        cfg = cfg._replace(outputs=cfg.outputs._replace(directory=directory))
    if forced_variant is not None:
        cfg = cfg._replace(model=cfg.model._replace(
            forced_variant=parse_forced_variant(forced_variant)))
    if seg_per_frame is not None:
        cfg = cfg._replace(model=cfg.model._replace(seg_per_frame=seg_per_frame))
    validate_experiment(cfg)
    return cfg
