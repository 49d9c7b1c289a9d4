"""Tests for image and matrix files"""
import numpy as np
import pytest

from fatformer.errors import DataError, DimensionError
from fatformer.imaging import (
    load_frames_segmap,
    load_segmap,
    read_csv_matrix,
    read_graymap,
    render_heatmap_png,
    upsample,
    write_csv_matrix,
    write_frames_graymap,
    write_graymap,
)


def _write_text(tmpdir, name, text):
    path = tmpdir.join(name)
    path.write(text)
    return str(path)


class TestSegmentationMaps(object):
    """Reading segmentation maps"""

    def test_ascii_graymap(self, tmpdir):
        """Plain graymaps are thresholded at half their peak."""
        path = _write_text(tmpdir, 'seg.pgm', 'P2\n3 2\n255\n0 128 255\n255 0 10\n')

        assert load_segmap(path).tolist() == [[0.0, 1.0, 1.0], [1.0, 0.0, 0.0]]

    def test_raw_values(self, tmpdir):
        """Graymap samples are read as written."""
        path = _write_text(tmpdir, 'seg.pgm', 'P2\n2 1\n255\n7 200\n')

        assert read_graymap(path).tolist() == [[7.0, 200.0]]

    def test_binary_graymap(self, tmpdir):
        """Binary maps written by write_graymap read back."""
        path = str(tmpdir.join('seg.pgm'))
        seg = np.zeros((4, 6))
        seg[1:3, 2:5] = 1.0

        write_graymap(path, seg)

        assert np.array_equal(load_segmap(path), seg)

    def test_black_graymap(self, tmpdir):
        """An all-black map is all background."""
        path = _write_text(tmpdir, 'seg.pgm', 'P2\n2 2\n255\n0 0\n0 0\n')

        assert np.array_equal(load_segmap(path), np.zeros((2, 2)))

    def test_csv(self, tmpdir):
        """CSV maps hold zeros and ones."""
        path = _write_text(tmpdir, 'seg.csv', '0,1,1\n1,0,0\n')

        assert load_segmap(path).tolist() == [[0.0, 1.0, 1.0], [1.0, 0.0, 0.0]]

    def test_csv_not_binary(self, tmpdir):
        """Other values are rejected."""
        path = _write_text(tmpdir, 'seg.csv', '0,0.5\n1,0\n')

        with pytest.raises(DataError):
            load_segmap(path)

    def test_unsupported_extension(self, tmpdir):
        """Only graymaps and CSV files are maps."""
        with pytest.raises(DataError):
            load_segmap(_write_text(tmpdir, 'seg.jpg', 'not an image'))

    def test_unreadable_graymap(self, tmpdir):
        """Broken graymaps are data errors."""
        with pytest.raises(DataError):
            load_segmap(_write_text(tmpdir, 'seg.pgm', 'not an image'))

    def test_frames(self, tmpdir):
        """Stacks of frames are written top to bottom and read back."""
        path = str(tmpdir.join('frames.pgm'))
        frames = np.zeros((3, 4, 5))
        frames[0, 0, 0] = frames[1, 2, 3] = frames[2, 3, 4] = 1.0

        write_frames_graymap(path, frames)

        assert np.array_equal(load_frames_segmap(path, 3), frames)
        with pytest.raises(DataError):
            load_frames_segmap(path, 5)


class TestMatrices(object):
    """CSV matrices"""

    def test_full_precision(self, tmpdir):
        """Floats read back exactly."""
        path = str(tmpdir.join('m.csv'))
        values = np.random.default_rng(0).standard_normal((3, 4))

        write_csv_matrix(path, values)

        assert np.array_equal(read_csv_matrix(path), values)

    def test_vector(self, tmpdir):
        """Vectors are written as one row."""
        path = str(tmpdir.join('v.csv'))

        write_csv_matrix(path, [0.1, 0.2])

        assert read_csv_matrix(path).tolist() == [[0.1, 0.2]]

    def test_non_numeric(self, tmpdir):
        """Text cells are rejected."""
        with pytest.raises(DataError):
            read_csv_matrix(_write_text(tmpdir, 'm.csv', '1,a\n2,b\n'))


def test_graymap_rank(tmpdir):
    """Graymaps are two-dimensional."""
    with pytest.raises(DimensionError):
        write_graymap(str(tmpdir.join('x.pgm')), np.zeros((2, 2, 2)))


def test_upsample():
    """Every value fills a block of the target."""
    assert upsample([[1, 2]], (2, 4)).tolist() == [[1, 1, 2, 2], [1, 1, 2, 2]]

    with pytest.raises(DimensionError):
        upsample([[1, 2]], (2, 3))


def test_render_png(tmpdir):
    """Heatmaps render to PNG files."""
    path = str(tmpdir.join('map.png'))

    render_heatmap_png(path, np.linspace(0.0, 1.0, 16).reshape(4, 4), 'stage 0 head 0')

    with open(path, 'rb') as png_file:
        assert png_file.read(8) == b'\x89PNG\r\n\x1a\n'
