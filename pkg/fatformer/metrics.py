"""
Evaluation metrics.

Regression is scored per trait by mean squared error and by one minus the mean absolute error
(the usual accuracy of the personality benchmarks). Classification is scored by accuracy and by
the support-weighted F1 score.
"""
from typing import (  # noqa pylint: disable=unused-import
    Any,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
import pandas as pd

from .errors import ContractError, DataError, DimensionError


TRAITS = ('O', 'C', 'E', 'A', 'N')


TraitScores = NamedTuple('TraitScores', [
    ('per_trait', Tuple[float, ...]),
    ('mean', float),
])


MetricReport = NamedTuple('MetricReport', [
    ('per_trait_mse', Optional[TraitScores]),
    ('mae_accuracy', Optional[TraitScores]),
    ('classification_accuracy', Optional[float]),
    ('weighted_f1', Optional[float]),
    ('support', Tuple[int, ...]),
])


def mse_per_trait(truth, pred):
    # type: (Any, Any) -> TraitScores
    """
    Column-wise mean squared error and its mean over the columns.

    :param truth: ``N x T`` targets.
    :param pred: ``N x T`` predictions.
    """
    truth, pred = _paired(truth, pred, 2)
    per_trait = np.mean((truth - pred) ** 2, axis=0)
    return TraitScores(per_trait=tuple(float(v) for v in per_trait),
                       mean=float(np.mean(per_trait)))


def mae_accuracy(truth, pred):
    # type: (Any, Any) -> float
    """
    One minus the mean absolute difference of scores in ``[0, 1]``.

    :param truth: Ground-truth scores.
    :param pred: Predicted scores.
    """
    truth, pred = _paired(truth, pred, 1)
    for name, values in (('truth', truth), ('pred', pred)):
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ContractError('Accuracy needs {} scores in [0, 1]'.format(name))
    return float(1.0 - np.mean(np.abs(truth - pred)))


def mae_accuracy_per_trait(truth, pred):
    # type: (Any, Any) -> TraitScores
    """Score accuracy for every column of ``N x T`` score matrices."""
    truth, pred = _paired(truth, pred, 2)
    per_trait = [mae_accuracy(truth[:, i], pred[:, i]) for i in range(truth.shape[1])]
    return TraitScores(per_trait=tuple(per_trait), mean=float(np.mean(per_trait)))


def confusion_matrix(truth, pred, k):
    # type: (Any, Any, int) -> np.ndarray
    """
    Count ``(true class, predicted class)`` pairs.

    >>> confusion_matrix([0, 1, 1], [0, 1, 0], 2).tolist()
    [[1, 0], [1, 1]]
    """
    truth, pred = _labels(truth, k, 'truth'), _labels(pred, k, 'pred')
    if truth.shape != pred.shape:
        raise DimensionError('Label shapes {} and {} differ'.format(truth.shape, pred.shape))
    if truth.size == 0:
        raise ContractError('Cannot score an empty set of labels')

    matrix = np.zeros((k, k), dtype=np.int64)
    np.add.at(matrix, (truth, pred), 1)
    return matrix


def classification_accuracy(truth, pred, k):
    # type: (Any, Any, int) -> float
    """Fraction of labels predicted exactly."""
    matrix = confusion_matrix(truth, pred, k)
    return float(np.trace(matrix) / np.sum(matrix))


def weighted_f1(truth, pred, k):
    # type: (Any, Any, int) -> float
    """
    Per-class F1 weighted by each class's share of the true labels.

    A class without true or predicted members scores zero; classes with no support have no
    weight.
    """
    matrix = confusion_matrix(truth, pred, k)
    true_positive = np.diag(matrix).astype(np.float64)
    predicted = matrix.sum(axis=0).astype(np.float64)
    support = matrix.sum(axis=1).astype(np.float64)

    precision = np.divide(true_positive, predicted, out=np.zeros(k), where=predicted > 0)
    recall = np.divide(true_positive, support, out=np.zeros(k), where=support > 0)
    total = precision + recall
    f1 = np.divide(2.0 * precision * recall, total, out=np.zeros(k), where=total > 0)

    return float(np.sum(support / np.sum(support) * f1))


def regression_report(truth, pred):
    # type: (Any, Any) -> MetricReport
    """
    Score trait predictions.

    Predictions are clipped to ``[0, 1]`` for the accuracy, the range of the targets.
    """
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    return MetricReport(
        per_trait_mse=mse_per_trait(truth, pred),
        mae_accuracy=mae_accuracy_per_trait(truth, np.clip(pred, 0.0, 1.0)),
        classification_accuracy=None,
        weighted_f1=None,
        support=(),
    )


def classification_report(truth, logits, k):
    # type: (Any, Any, int) -> MetricReport
    """Score class logits ``N x k`` (or predicted labels ``N``) against true labels."""
    logits = np.asarray(logits)
    pred = np.argmax(logits, axis=-1) if logits.ndim == 2 else logits
    matrix = confusion_matrix(truth, pred, k)
    return MetricReport(
        per_trait_mse=None,
        mae_accuracy=None,
        classification_accuracy=float(np.trace(matrix) / np.sum(matrix)),
        weighted_f1=weighted_f1(truth, pred, k),
        support=tuple(int(v) for v in matrix.sum(axis=1)),
    )


def selection_score(report):
    # type: (MetricReport) -> float
    """Higher is better: negated mean MSE for regression, accuracy for classification."""
    if report.per_trait_mse is not None:
        return -report.per_trait_mse.mean
    if report.classification_accuracy is None:
        raise ContractError('Report has no metric to select by')
    return report.classification_accuracy


def report_rows(report):
    # type: (MetricReport) -> List[Tuple[str, float]]
    """Flatten a report into ``(metric, value)`` rows."""
    rows = []  # type: List[Tuple[str, float]]
    for prefix, scores in (('mse', report.per_trait_mse), ('acc', report.mae_accuracy)):
        if scores is not None:
            names = TRAITS if len(scores.per_trait) == len(TRAITS) else [
                str(i) for i in range(len(scores.per_trait))]
            rows.extend(('{}_{}'.format(prefix, name), value)
                        for name, value in zip(names, scores.per_trait))
            rows.append(('{}_mean'.format(prefix), scores.mean))
    if report.classification_accuracy is not None:
        rows.append(('accuracy', report.classification_accuracy))
    if report.weighted_f1 is not None:
        rows.append(('weighted_f1', report.weighted_f1))
    rows.extend(('support_{}'.format(c), float(n)) for c, n in enumerate(report.support))
    return rows


def report_frame(report):
    # type: (MetricReport) -> pd.DataFrame
    """Return the report as a two-column ``metric, value`` frame."""
    return pd.DataFrame(report_rows(report), columns=['metric', 'value'])


def write_report_csv(report, path):
    # type: (MetricReport, str) -> None
    """Write one row per metric, with every float in full precision."""
    report_frame(report).to_csv(path, index=False, float_format='%.17g', lineterminator='\n')


def format_report(report):
    # type: (MetricReport) -> str
    """Return a fixed-width table for terminals."""
    frame = report_frame(report)
    return frame.to_string(index=False, float_format=lambda v: '{:.6f}'.format(v))


def _paired(truth, pred, ndim):
    # type: (Any, Any, int) -> Tuple[np.ndarray, np.ndarray]
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.shape != pred.shape or truth.ndim != ndim:
        raise DimensionError('Cannot compare truth {} with predictions {}'.format(
            truth.shape, pred.shape))
    if truth.shape[0] == 0:
        raise ContractError('Cannot score an empty set of samples')
    return truth, pred


def _labels(values, k, what):
    # type: (Any, int, str) -> np.ndarray
    labels = np.asarray(values)
    if labels.size and not np.issubdtype(labels.dtype, np.integer):
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise DataError('{} labels must be integers'.format(what))
        labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError('{} label out of range [0, {})'.format(what, k))
    return labels.astype(np.int64).reshape(-1)
