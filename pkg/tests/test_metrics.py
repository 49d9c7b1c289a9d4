"""Tests for evaluation metrics"""
import numpy as np
import pandas as pd
import pytest

from fatformer.errors import ContractError, DataError, DimensionError
from fatformer.metrics import (
    TRAITS,
    classification_accuracy,
    classification_report,
    confusion_matrix,
    mae_accuracy,
    mae_accuracy_per_trait,
    format_report,
    mse_per_trait,
    regression_report,
    report_rows,
    selection_score,
    weighted_f1,
    write_report_csv,
)


_TRUTH = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2]
_PRED = [0, 0, 1, 1, 1, 1, 0, 2, 2, 2]


def test_mae_accuracy_example():
    """Accuracy is one minus the mean absolute difference."""
    assert mae_accuracy([0.2, 0.8], [0.3, 0.6]) == pytest.approx(0.85, abs=1e-12)


def test_mae_accuracy_perfect():
    """Perfect predictions score one."""
    scores = np.random.default_rng(0).random(7)

    assert mae_accuracy(scores, scores) == 1.0


def test_mae_accuracy_range():
    """Scores outside [0, 1] are rejected."""
    with pytest.raises(ContractError):
        mae_accuracy([0.5, 1.2], [0.5, 0.5])


def test_mae_accuracy_per_trait():
    """Columns are scored separately."""
    truth = np.array([[0.0, 1.0], [1.0, 1.0]])
    pred = np.array([[0.0, 0.5], [1.0, 0.5]])

    scores = mae_accuracy_per_trait(truth, pred)

    assert scores.per_trait == (1.0, 0.5)
    assert scores.mean == 0.75


def test_mse_per_trait():
    """Squared errors are averaged per column."""
    truth = np.zeros((2, 5))
    pred = np.array([[1.0, 0.0, 2.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0, 0.0]])

    scores = mse_per_trait(truth, pred)

    assert scores.per_trait == (1.0, 0.0, 2.0, 0.0, 0.0)
    assert scores.mean == pytest.approx(0.6, abs=1e-12)


@pytest.mark.parametrize('truth,pred', [
    (np.zeros((3, 5)), np.zeros((3, 4))),
    (np.zeros(5), np.zeros(5)),
])
def test_mse_shapes(truth, pred):
    """Truth and predictions must be matching matrices."""
    with pytest.raises(DimensionError):
        mse_per_trait(truth, pred)


def test_empty():
    """Empty inputs cannot be scored."""
    with pytest.raises(ContractError):
        mse_per_trait(np.zeros((0, 5)), np.zeros((0, 5)))
    with pytest.raises(ContractError):
        confusion_matrix([], [], 3)


class TestClassification(object):
    """Classification scores"""

    def test_confusion_matrix(self):
        """Rows are true classes, columns predicted ones."""
        assert confusion_matrix(_TRUTH, _PRED, 3).tolist() == [[2, 1, 0], [0, 3, 0], [1, 0, 3]]

    def test_accuracy(self):
        """Accuracy is the trace share."""
        assert classification_accuracy(_TRUTH, _PRED, 3) == pytest.approx(0.8, abs=1e-12)

    def test_weighted_f1(self):
        """F1 is weighted by support."""
        assert weighted_f1(_TRUTH, _PRED, 3) == pytest.approx(0.8, abs=1e-12)

    def test_weighted_f1_perfect_and_absent_class(self):
        """Perfect predictions score one even when a class never occurs."""
        assert weighted_f1([0, 2, 2], [0, 2, 2], 3) == pytest.approx(1.0, abs=1e-12)

    def test_weighted_f1_all_wrong(self):
        """Never predicting the true class scores zero."""
        assert weighted_f1([0, 0, 1], [1, 1, 0], 2) == 0.0

    def test_out_of_range(self):
        """Labels must lie in [0, k)."""
        with pytest.raises(DataError):
            confusion_matrix([0, 3], [0, 1], 3)
        with pytest.raises(DataError):
            confusion_matrix([0, 1], [0, -1], 3)

    def test_fractional_labels(self):
        """Labels must be whole numbers."""
        with pytest.raises(DataError):
            confusion_matrix([0.5, 1.0], [0, 1], 3)

    def test_length_mismatch(self):
        """Truth and predictions pair up."""
        with pytest.raises(DimensionError):
            confusion_matrix([0, 1], [0, 1, 1], 3)

    def test_report_from_logits(self):
        """Reports take logits and count support."""
        logits = np.eye(3)[_PRED] * 2.0 - 1.0

        report = classification_report(_TRUTH, logits, 3)

        assert report.classification_accuracy == pytest.approx(0.8, abs=1e-12)
        assert report.weighted_f1 == pytest.approx(0.8, abs=1e-12)
        assert report.support == (3, 3, 4)
        assert selection_score(report) == report.classification_accuracy


class TestReports(object):
    """Regression reports and their files"""

    def _report(self):
        truth = np.array([[0.2, 0.4, 0.6, 0.8, 1.0], [0.0, 0.5, 0.5, 0.5, 0.5]])
        pred = np.array([[0.3, 0.4, 0.6, 0.8, 1.3], [0.0, 0.5, 0.5, 0.5, 0.5]])
        return regression_report(truth, pred)

    def test_clipped_accuracy(self):
        """Predictions above one are clipped for the accuracy, not for the error."""
        report = self._report()

        assert report.mae_accuracy.per_trait[4] == 1.0
        assert report.per_trait_mse.per_trait[4] == pytest.approx(0.045, abs=1e-12)
        assert selection_score(report) == -report.per_trait_mse.mean

    def test_rows_named_by_trait(self):
        """Rows are named by metric and trait."""
        names = [name for name, _ in report_rows(self._report())]

        assert names == (['mse_' + t for t in TRAITS] + ['mse_mean'] +
                         ['acc_' + t for t in TRAITS] + ['acc_mean'])

    def test_csv_full_precision(self, tmpdir):
        """Written values read back exactly."""
        path = str(tmpdir.join('metrics.csv'))
        report = self._report()

        write_report_csv(report, path)
        frame = pd.read_csv(path, float_precision='round_trip')

        assert list(frame.columns) == ['metric', 'value']
        assert frame['value'].tolist() == [value for _, value in report_rows(report)]

    def test_format(self):
        """The terminal table lists every metric."""
        text = format_report(self._report())

        assert 'mse_mean' in text
        assert 'acc_N' in text
