"""
Image files: graymaps for segmentation maps and heatmaps, PNG renderings of heatmaps.

Segmentation maps are read from portable graymaps (ASCII ``P2`` or binary ``P5``) and from
0/1 CSV files. Graymaps are always written as binary ``P5``.
"""
import io
import logging
import os
from typing import (  # noqa pylint: disable=unused-import
    Any,
    Optional,
    Sequence,
)

from matplotlib.figure import Figure
import numpy as np
import pandas as pd
from PIL import Image

from .errors import DataError, DimensionError


_logger = logging.getLogger(__name__)

GRAYMAP_EXTENSIONS = ('.pgm', '.pnm')


def read_graymap(path):
    # type: (str) -> np.ndarray
    """Read a P2 or P5 graymap into a float array of its raw sample values."""
    try:
        with Image.open(path) as image:
            image.load()
            values = np.asarray(image, dtype=np.float64)
    except (IOError, OSError, SyntaxError, ValueError) as error:
        raise DataError('Cannot read graymap "{}": {}'.format(path, error))

    if values.ndim != 2:
        raise DataError('Graymap "{}" is not single-channel'.format(path))
    return values


def write_graymap(path, values):
    # type: (str, Any) -> None
    """
    Write values in ``[0, 1]`` as an 8-bit binary graymap.

    :param values: ``H x W`` array; values are clipped to ``[0, 1]`` and scaled to 255.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise DimensionError('A graymap is H x W, got {}'.format(values.shape))

    pixels = np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(pixels).save(path, format='PPM')


def load_segmap(path):
    # type: (str) -> np.ndarray
    """
    Load a binary segmentation map.

    Graymaps are thresholded at half their largest value. CSV files must hold only 0 and 1.
    """
    extension = os.path.splitext(path)[1].lower()
    if extension in GRAYMAP_EXTENSIONS:
        values = read_graymap(path)
        peak = values.max()
        if peak <= 0:
            return np.zeros_like(values)
        return (values > 0.5 * peak).astype(np.float64)

    if extension == '.csv':
        values = read_csv_matrix(path)
        if not np.all((values == 0.0) | (values == 1.0)):
            raise DataError('Segmentation map "{}" must contain only 0 and 1'.format(path))
        return values

    raise DataError('Unsupported segmentation map format "{}"'.format(extension))


def write_frames_graymap(path, frames):
    # type: (str, Any) -> None
    """Write a stack ``D x H x W`` of maps as one graymap, frames top to bottom."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3:
        raise DimensionError('Expected D x H x W frames, got {}'.format(frames.shape))
    write_graymap(path, frames.reshape(-1, frames.shape[-1]))


def load_frames_segmap(path, frames):
    # type: (str, int) -> np.ndarray
    """Load a map written by :func:`write_frames_graymap` as ``D x H x W``."""
    values = load_segmap(path)
    if values.shape[0] % frames:
        raise DataError('Graymap "{}" of height {} does not hold {} frames'.format(
            path, values.shape[0], frames))
    return values.reshape(frames, -1, values.shape[-1])


def read_csv_matrix(path):
    # type: (str) -> np.ndarray
    """Read a headerless numeric CSV file exactly as written."""
    try:
        frame = pd.read_csv(path, header=None, float_precision='round_trip')
    except (IOError, OSError, ValueError, pd.errors.ParserError) as error:
        raise DataError('Cannot read CSV "{}": {}'.format(path, error))
    if not all(np.issubdtype(dtype, np.number) for dtype in frame.dtypes):
        raise DataError('CSV "{}" holds non-numeric values'.format(path))
    return frame.to_numpy(dtype=np.float64)


def write_csv_matrix(path, values):
    # type: (str, Any) -> None
    """Write a 2D array as a headerless CSV with every float in full precision."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[np.newaxis]
    pd.DataFrame(values).to_csv(path, index=False, header=False, float_format='%.17g',
                                lineterminator='\n')


def upsample(values, shape):
    # type: (Any, Sequence[int]) -> np.ndarray
    """Nearest-neighbour upsampling of an ``h x w`` map to ``H x W`` by whole factors."""
    values = np.asarray(values)
    height, width = shape
    if height % values.shape[0] or width % values.shape[1]:
        raise DimensionError('Cannot upsample {} to {} by whole factors'.format(
            values.shape, tuple(shape)))
    rows = np.repeat(values, height // values.shape[0], axis=0)
    return np.repeat(rows, width // values.shape[1], axis=1)


def render_heatmap_png(path, values, title=None):
    # type: (str, Any, Optional[str]) -> None
    """Render a heatmap with a colour bar to a PNG file."""
    values = np.asarray(values, dtype=np.float64)
    figure = Figure(figsize=(4, 3.5))
    axes = figure.subplots()
    image = axes.imshow(values, cmap='viridis', vmin=0.0, vmax=1.0)
    if title:
        axes.set_title(title)
    axes.set_axis_off()
    figure.colorbar(image, ax=axes)
    figure.tight_layout()

    buffer = io.BytesIO()
    figure.savefig(buffer, format='png', metadata={'Software': None})
    with open(path, 'wb') as png_file:
        png_file.write(buffer.getvalue())
    _logger.debug('Wrote heatmap %s', path)
