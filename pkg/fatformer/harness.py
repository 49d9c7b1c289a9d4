"""
Experiment runs: training, ablations, evaluation and attention export.

Every run writes into its own directory::

    <out>/experiment.cfg    the configuration, as parsed
    <out>/history.csv       train loss and validation metrics of every epoch
    <out>/best.ckpt         parameters of the best validation epoch
    <out>/best.manifest

Epoch 0 is the evaluation of the initial parameters, so a run of zero epochs still reports
and checkpoints something.
"""
from collections import OrderedDict
import logging
import os
import time
from typing import (  # noqa pylint: disable=unused-import
    Any,
    Dict,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)
import warnings

import numpy as np
import pandas as pd

from . import ops
from .attention import PERFORMER, window_reverse, with_recording
from .checkpoint import read_checkpoint, restore, save_checkpoint
from .config import (
    ExperimentConfig,
    config_hash,
    dump_experiment,
    parse_experiment,
    validate_experiment,
)
from .data import (
    BalancedBatchSampler,
    SyntheticDataset,
    SyntheticSample,
    collate,
    generate_dataset,
    shuffled_batches,
    targets,
)
from .errors import ConfigError, ContractError, NumericError, UnsupportedCombination
from .forced import OFF
from .fusion import ALTERNATING, AUDIO, METADATA, TRANSCRIPT
from .imaging import render_heatmap_png, upsample, write_csv_matrix, write_graymap
from .metrics import (
    TRAITS,
    MetricReport,
    classification_report,
    format_report,
    regression_report,
    report_rows,
    selection_score,
    write_report_csv,
)
from .model import FACE_ONLY, REGRESSION, FatModel, ModelConfig, ModelInput
from .nn import module_rng
from .optim import AdamW, adamw_config
from .tensor import Tensor, no_grad


_logger = logging.getLogger(__name__)

CHECKPOINT_NAME = 'best.ckpt'
CONFIG_NAME = 'experiment.cfg'
HISTORY_NAME = 'history.csv'

FULL = 'full'
ABLATION_ROWS = (
    FULL,
    'wo_forced',
    'wo_backbone',
    'wo_cross',
    'wo_late_fusion',
    'wo_audio',
    'wo_transcript',
)


RunRecord = NamedTuple('RunRecord', [
    ('name', str),
    ('ablation', str),
    ('seed', int),
    ('config_hash', str),
    ('train_loss', Tuple[float, ...]),  # One entry per trained epoch.
    ('val_reports', Tuple[MetricReport, ...]),  # Entry 0 is the initial model.
    ('best_epoch', int),
    ('wall_time', float),
    ('checkpoint', Optional[str]),
])


def best_report(record):
    # type: (RunRecord) -> MetricReport
    """Return the validation report of the selected epoch."""
    return record.val_reports[record.best_epoch]


def loss_of(prediction, samples, task):
    # type: (Tensor, Sequence[SyntheticSample], str) -> Tensor
    """Mean squared error on the trait targets, or cross-entropy on the class labels."""
    labels, classes = targets(samples)
    if task == REGRESSION:
        return ops.mse_loss(prediction, labels)
    return ops.cross_entropy(prediction, classes)


def _batch_input(samples, cfg):
    # type: (Sequence[SyntheticSample], ModelConfig) -> ModelInput
    return collate(samples, cfg.modalities, cfg.seg_per_frame)


def predict(model, samples, batch_size):
    # type: (FatModel, Sequence[SyntheticSample], int) -> np.ndarray
    """Run the model in evaluation mode over samples, batch by batch."""
    if not samples:
        raise ContractError('Nothing to predict')
    model.eval()
    outputs = []
    with no_grad():
        for start in range(0, len(samples), batch_size):
            batch = samples[start:start + batch_size]
            outputs.append(model(_batch_input(batch, model.cfg)).data)
    return np.concatenate(outputs)


def evaluate_samples(model, samples, batch_size):
    # type: (FatModel, Sequence[SyntheticSample], int) -> MetricReport
    """Score the model on samples."""
    prediction = predict(model, samples, batch_size)
    labels, classes = targets(samples)
    if model.cfg.task == REGRESSION:
        return regression_report(labels, prediction)
    return classification_report(classes, prediction, model.cfg.classes)


def dataset_for(cfg):
    # type: (ExperimentConfig) -> SyntheticDataset
    """Generate the dataset an experiment trains on."""
    return generate_dataset(cfg.data.samples, cfg.data.seed, cfg.data.spec, cfg.data.split)


def _epoch_batches(
        cfg,  # type: ExperimentConfig
        train_samples,  # type: Sequence[SyntheticSample]
        epoch,  # type: int
        rng  # type: np.random.Generator
):
    # type: (...) -> List[np.ndarray]
    if cfg.data.balanced:
        _, classes = targets(train_samples)
        sampler = BalancedBatchSampler(classes, cfg.optimizer.batch_size, cfg.seed)
        return sampler.epoch(epoch)
    return shuffled_batches(len(train_samples), cfg.optimizer.batch_size, rng)


def train(cfg, dataset=None, out_dir=None):
    # type: (ExperimentConfig, Optional[SyntheticDataset], Optional[str]) -> RunRecord
    """
    Train a model and keep the parameters of the best validation epoch.

    :param cfg: The experiment.
    :param dataset: The data to use; generated from the configuration when omitted.
    :param out_dir: Directory for the run's files; nothing is written when omitted.

    :raises NumericError: when a batch loss is not finite.
    """
    validate_experiment(cfg)
    started = time.time()
    if dataset is None:
        dataset = dataset_for(cfg)
    train_samples = [dataset.samples[i] for i in dataset.train]
    val_samples = [dataset.samples[i] for i in dataset.val]

    model = FatModel(cfg.model, seed=cfg.seed)
    optimizer = AdamW(model.parameters(), adamw_config(
        cfg.optimizer.lr_transformer, cfg.optimizer.lr_backbone, cfg.optimizer.weight_decay))
    rng = module_rng(cfg.seed, 'batches')
    batch_size = cfg.optimizer.batch_size

    reports = [evaluate_samples(model, val_samples, batch_size)]
    losses = []  # type: List[float]
    best_epoch, best_state = 0, model.state_dict()
    _logger.info('%s/%s seed %d: initial validation score %.6f', cfg.name, cfg.ablation,
                 cfg.seed, selection_score(reports[0]))

    for epoch in range(1, cfg.optimizer.epochs + 1):
        model.train()
        total, count = 0.0, 0
        for b, index in enumerate(_epoch_batches(cfg, train_samples, epoch, rng)):
            batch = [train_samples[i] for i in index]
            optimizer.zero_grad()
            loss = loss_of(model(_batch_input(batch, cfg.model)), batch, cfg.model.task)
            loss.backward()
            value = loss.item()
            if not np.isfinite(value):
                max_grad = optimizer.max_abs_grad()
                raise NumericError(
                    'Loss is {} at epoch {}, batch {} (max |grad| {:.3e})'.format(
                        value, epoch, b, max_grad),
                    epoch=epoch, batch=b, max_abs_grad=max_grad)
            optimizer.step()
            total += value * len(batch)
            count += len(batch)

        losses.append(total / count)
        reports.append(evaluate_samples(model, val_samples, batch_size))
        if selection_score(reports[-1]) > selection_score(reports[best_epoch]):
            best_epoch, best_state = epoch, model.state_dict()
        _logger.info('%s/%s seed %d epoch %d: train loss %.6f, validation score %.6f',
                     cfg.name, cfg.ablation, cfg.seed, epoch, losses[-1],
                     selection_score(reports[-1]))

    checkpoint = None
    if out_dir is not None:
        checkpoint = _write_run(cfg, model, best_state, losses, reports, out_dir)

    return RunRecord(
        name=cfg.name,
        ablation=cfg.ablation,
        seed=cfg.seed,
        config_hash=config_hash(cfg),
        train_loss=tuple(losses),
        val_reports=tuple(reports),
        best_epoch=best_epoch,
        wall_time=time.time() - started,
        checkpoint=checkpoint,
    )


def _write_run(
        cfg,  # type: ExperimentConfig
        model,  # type: FatModel
        best_state,  # type: Dict[str, np.ndarray]
        losses,  # type: List[float]
        reports,  # type: List[MetricReport]
        out_dir  # type: str
):
    # type: (...) -> str
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir)

    config_text = dump_experiment(cfg)
    with open(os.path.join(out_dir, CONFIG_NAME), 'w', encoding='utf-8', newline='\n') as f:
        f.write(config_text)

    history_frame(losses, reports).to_csv(
        os.path.join(out_dir, HISTORY_NAME), index=False, float_format='%.17g',
        lineterminator='\n')

    model.load_state_dict(best_state)
    path = os.path.join(out_dir, CHECKPOINT_NAME)
    save_checkpoint(path, model, config_text)
    return path


def history_frame(losses, reports):
    # type: (Sequence[float], Sequence[MetricReport]) -> pd.DataFrame
    """One row per epoch: the train loss (empty for epoch 0) and the validation metrics."""
    rows = []
    for epoch, report in enumerate(reports):
        row = OrderedDict([('epoch', epoch),
                           ('train_loss', losses[epoch - 1] if epoch else np.nan)])
        row.update(report_rows(report))
        rows.append(row)
    return pd.DataFrame(rows)


def ablation_config(base, row):
    # type: (ExperimentConfig, str) -> ExperimentConfig
    """
    Derive the configuration of one ablation row from the full model.

    Each row changes one aspect of the model and nothing else.
    """
    if row not in ABLATION_ROWS:
        raise ConfigError('Unknown ablation row "{}", expected one of {}'.format(
            row, ', '.join(ABLATION_ROWS)))

    model = base.model
    if row == 'wo_forced':
        model = model._replace(forced_variant=OFF)
    elif row == 'wo_backbone':
        model = model._replace(use_backbone=False)
    elif row == 'wo_cross':
        model = model._replace(fusion=model.fusion._replace(mode=ALTERNATING))
    elif row == 'wo_late_fusion':
        model = model._replace(late_fusion=FACE_ONLY)
    elif row in ('wo_audio', 'wo_transcript'):
        model = _without_side(model, AUDIO if row == 'wo_audio' else TRANSCRIPT)

    if row != FULL and model == base.model:
        warnings.warn('Ablation row "{}" does not change the configured model'.format(row))

    cfg = base._replace(ablation=row, model=model)
    validate_experiment(cfg)
    return cfg


def _without_side(model, side):
    # type: (Any, str) -> Any
    modalities = tuple(m for m in model.modalities if m != side)
    if METADATA in modalities and AUDIO not in modalities and TRANSCRIPT not in modalities:
        modalities = tuple(m for m in modalities if m != METADATA)
    order = tuple(name for name in model.fusion.order if name != side)
    return model._replace(modalities=modalities, fusion=model.fusion._replace(order=order))


def parse_rows(text):
    # type: (str) -> Tuple[str, ...]
    """
    Parse a comma-separated list of ablation rows.

    >>> parse_rows('full, wo_forced')
    ('full', 'wo_forced')
    """
    rows = tuple(part.strip() for part in text.split(',') if part.strip())
    unknown = [row for row in rows if row not in ABLATION_ROWS]
    if unknown or not rows:
        raise ConfigError('Unknown ablation rows {}, expected some of {}'.format(
            unknown, ', '.join(ABLATION_ROWS)))
    return rows


AblationResult = NamedTuple('AblationResult', [
    ('records', List[RunRecord]),
    ('runs', pd.DataFrame),  # One row per run.
    ('table', pd.DataFrame),  # One row per ablation row, averaged over seeds.
])


def run_ablation(base, rows=ABLATION_ROWS, seeds=None, out_dir=None):
    # type: (ExperimentConfig, Sequence[str], Optional[int], Optional[str]) -> AblationResult
    """
    Train every ablation row once per seed, all on the same data.

    :param rows: Rows to run, in the given order.
    :param seeds: Runs per row; defaults to the configured count. Seeds count up from the
        configured seed.
    :param out_dir: When given, runs go to ``<out_dir>/<row>/seed<k>`` and the tables to
        ``ablation.csv`` and ``runs.csv``.
    """
    configs = [ablation_config(base, row) for row in rows]
    count = base.seeds if seeds is None else seeds
    if count < 1:
        raise ConfigError('An ablation needs at least one seed')

    dataset = dataset_for(base)
    records = []  # type: List[RunRecord]
    for cfg in configs:
        for seed in range(base.seed, base.seed + count):
            run_dir = None
            if out_dir is not None:
                run_dir = os.path.join(out_dir, cfg.ablation, 'seed{}'.format(seed))
            records.append(train(cfg._replace(seed=seed), dataset, run_dir))

    runs = runs_frame(records)
    table = ablation_table(runs)
    if out_dir is not None:
        for frame, name in ((table, 'ablation.csv'), (runs, 'runs.csv')):
            frame.to_csv(os.path.join(out_dir, name), index=False, float_format='%.17g',
                         lineterminator='\n')
        _logger.info('Wrote %d runs to %s', len(records), out_dir)
    return AblationResult(records=records, runs=runs, table=table)


def _score_columns(report):
    # type: (MetricReport) -> List[Tuple[str, float]]
    if report.per_trait_mse is not None:
        columns = list(zip(TRAITS, report.per_trait_mse.per_trait))
        return columns + [('mean', report.per_trait_mse.mean)]
    return [('accuracy', report.classification_accuracy), ('weighted_f1', report.weighted_f1)]


def runs_frame(records):
    # type: (Sequence[RunRecord]) -> pd.DataFrame
    """One row per run with the scores of its selected epoch."""
    rows = []
    for record in records:
        row = OrderedDict([('ablation', record.ablation), ('seed', record.seed),
                           ('best_epoch', record.best_epoch),
                           ('config_hash', record.config_hash)])
        row.update(_score_columns(best_report(record)))
        rows.append(row)
    return pd.DataFrame(rows)


def ablation_table(runs):
    # type: (pd.DataFrame) -> pd.DataFrame
    """Average the runs of every ablation row over seeds, keeping the row order."""
    scores = [c for c in runs.columns if c not in ('ablation', 'seed', 'best_epoch', 'config_hash')]
    grouped = runs.groupby('ablation', sort=False)
    table = grouped[scores].mean()
    table.insert(0, 'runs', grouped.size())
    return table.reset_index()


def load_model(path):
    # type: (str) -> Tuple[ExperimentConfig, FatModel]
    """Rebuild the model stored in a checkpoint."""
    checkpoint = read_checkpoint(path)
    cfg = parse_experiment(checkpoint.config_text)
    model = FatModel(cfg.model, seed=cfg.seed)
    restore(model, checkpoint)
    model.eval()
    return cfg, model


def evaluate(checkpoint_path, out_dir=None):
    # type: (str, Optional[str]) -> MetricReport
    """
    Score a checkpoint on the validation split of its experiment's data.

    Writes ``metrics.csv`` to ``out_dir`` when given.
    """
    cfg, model = load_model(checkpoint_path)
    dataset = dataset_for(cfg)
    report = evaluate_samples(model, [dataset.samples[i] for i in dataset.val],
                              cfg.optimizer.batch_size)
    _logger.info('Validation metrics of %s:\n%s', checkpoint_path, format_report(report))
    if out_dir is not None:
        if not os.path.isdir(out_dir):
            os.makedirs(out_dir)
        write_report_csv(report, os.path.join(out_dir, 'metrics.csv'))
    return report


def attention_maps(model, sample):
    # type: (FatModel, ModelInput) -> Dict[Tuple[int, int], np.ndarray]
    """
    Attention received by every token position of the face branch, per stage and head.

    For every block, each key's weight is averaged over the queries of its window; the maps of
    a stage's blocks and of all frames are averaged, and the result is upsampled from the
    token grid to the frame resolution.

    :param sample: A batch of one sample.

    :return: ``H x W`` maps keyed by ``(stage, head)``.
    """
    if model.cfg.stages.attention_kind == PERFORMER:
        raise UnsupportedCombination('The performer path has no explicit attention weights')
    if sample.face.shape[0] != 1:
        raise ContractError('Attention export takes one sample, got {}'.format(
            sample.face.shape[0]))

    stages = model.attention_blocks()
    blocks = [block for blocks in stages for block in blocks]
    model.eval()
    with_recording(blocks, True)
    try:
        with no_grad():
            model(sample)
        frame = tuple(model.cfg.input_shape[2:])
        maps = {}  # type: Dict[Tuple[int, int], np.ndarray]
        for s, stage in enumerate(stages):
            received = np.mean([_received(block) for block in stage], axis=0)
            per_head = received[0].mean(axis=0)  # H x W x heads
            for head in range(per_head.shape[-1]):
                maps[(s, head)] = upsample(per_head[..., head], frame)
        return maps
    finally:
        with_recording(blocks, False)


def _received(block):
    # type: (Any) -> np.ndarray
    weights = block.attn.last_weights  # (B * nW) x heads x N x N
    received = np.swapaxes(weights.mean(axis=2), 1, 2)  # (B * nW) x N x heads
    return window_reverse(Tensor(received), block.last_layout).data


def export_attention(checkpoint_path, sample, out_dir, png=False):
    # type: (str, ModelInput, str, bool) -> List[str]
    """
    Write the attention maps of a checkpoint for one sample.

    Every stage and head gives ``stage<s>_head<h>.pgm``, scaled so the largest value is white,
    and ``stage<s>_head<h>.csv`` with the raw values; with ``png`` also a rendered PNG.

    :return: The paths written.
    """
    _, model = load_model(checkpoint_path)
    maps = attention_maps(model, sample)
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir)

    paths = []  # type: List[str]
    for (stage, head), values in sorted(maps.items()):
        stem = os.path.join(out_dir, 'stage{}_head{}'.format(stage, head))
        peak = values.max()
        write_graymap(stem + '.pgm', values / peak if peak > 0 else values)
        write_csv_matrix(stem + '.csv', values)
        paths.extend([stem + '.pgm', stem + '.csv'])
        if png:
            render_heatmap_png(stem + '.png', values / peak if peak > 0 else values,
                               'stage {} head {}'.format(stage, head))
            paths.append(stem + '.png')

    _logger.info('Wrote %d attention files to %s', len(paths), out_dir)
    return paths


def validation_sample(cfg, index=0):
    # type: (ExperimentConfig, int) -> ModelInput
    """Return validation sample ``index`` of an experiment's data as a batch of one."""
    dataset = dataset_for(cfg)
    if not 0 <= index < len(dataset.val):
        raise ContractError('Validation sample {} out of range [0, {})'.format(
            index, len(dataset.val)))
    return _batch_input([dataset.samples[dataset.val[index]]], cfg.model)
