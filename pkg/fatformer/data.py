"""
Synthetic multimodal samples and batching.

Every sample shows a bright disc moving over a noisy background. The five regression targets are
the disc's horizontal and vertical speed, its brightness, its radius and how often it flickers,
each normalized to ``[0, 1]``; the class label is the binned horizontal speed. Only the disc
carries the label: background pixels are noise from a separate stream. The segmentation map
marks the disc in every frame. Audio and transcript tokens carry a noisy copy of the targets, so
models that drop them lose information.

>>> spec = default_generation_spec()
>>> sample = generate_sample(7, spec)
>>> sample.face_video.shape, sample.seg_map.shape, sample.audio_tokens.shape
((3, 8, 32, 32), (8, 32, 32), (6, 8))
>>> bool(np.allclose(decode_label(sample.face_video, sample.seg_map, spec), sample.label))
True
"""
import logging
import os
from typing import (  # noqa pylint: disable=unused-import
    Any,
    Iterator,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
import pandas as pd

from . import declconf as conf
from .errors import ConfigError, ContractError, DataError, SpecError
from .imaging import (
    load_frames_segmap,
    read_csv_matrix,
    write_csv_matrix,
    write_frames_graymap,
)
from .model import ModelInput


_logger = logging.getLogger(__name__)


GenerationSpec = NamedTuple('GenerationSpec', [
    ('channels', int),
    ('frames', int),
    ('height', int),
    ('width', int),
    ('radius_min', int),
    ('radius_max', int),
    ('max_speed', float),  # Pixels per frame.
    ('intensity_min', float),
    ('intensity_max', float),
    ('max_cycles', int),  # Flicker cycles per clip.
    ('noise', float),  # Standard deviation of the background.
    ('side_tokens', int),
    ('audio_width', int),
    ('transcript_width', int),
    ('meta_width', int),
    ('side_redundancy', float),  # Share of the side-token variance carried by the targets.
    ('classes', int),
    ('class_weights', Tuple[float, ...]),  # Relative class frequencies; empty for no control.
])


BlobParams = NamedTuple('BlobParams', [
    ('speed_x', int),  # Whole pixels travelled over the clip.
    ('speed_y', int),
    ('intensity', float),
    ('radius', int),
    ('cycles', int),
    ('x0', int),
    ('y0', int),
])


SyntheticSample = NamedTuple('SyntheticSample', [
    ('face_video', np.ndarray),  # C x D x H x W
    ('fullframe_video', np.ndarray),
    ('interlocutor_video', np.ndarray),
    ('seg_map', np.ndarray),  # D x H x W
    ('audio_tokens', np.ndarray),  # T x audio_width
    ('transcript_tokens', np.ndarray),  # T x transcript_width
    ('metadata', np.ndarray),  # meta_width
    ('label', np.ndarray),  # 5 targets in [0, 1]
    ('label_class', int),
    ('seed', int),
])


SyntheticDataset = NamedTuple('SyntheticDataset', [
    ('spec', GenerationSpec),
    ('seed', int),
    ('split', float),
    ('samples', List[SyntheticSample]),
    ('train', Tuple[int, ...]),
    ('val', Tuple[int, ...]),
])


TARGET_COUNT = 5
_FLICKER_FLOOR = 0.75


def default_generation_spec():
    # type: () -> GenerationSpec
    """Return the desk-scale generation spec: 3 x 8 x 32 x 32 clips, 15 speed classes."""
    return GenerationSpec(
        channels=3, frames=8, height=32, width=32,
        radius_min=3, radius_max=6,
        max_speed=1.0,
        intensity_min=0.5, intensity_max=1.0,
        max_cycles=3,
        noise=0.3,
        side_tokens=6, audio_width=8, transcript_width=8, meta_width=4,
        side_redundancy=0.5,
        classes=15,
        class_weights=(),
    )


def speed_levels(spec):
    # type: (GenerationSpec) -> int
    """Return K: speeds are ``k / (D - 1)`` pixels per frame for integer ``k`` in ``[-K, K]``."""
    return int(round(spec.max_speed * (spec.frames - 1)))


def validate_generation_spec(spec):
    # type: (GenerationSpec) -> None
    """Raise a SpecError for a spec that cannot be generated or decoded."""
    if min(spec.channels, spec.frames, spec.height, spec.width) <= 0:
        raise SpecError('Video extents must be positive')
    if spec.frames < 2:
        raise SpecError('Motion needs at least 2 frames, got {}'.format(spec.frames))
    if not 1 <= spec.radius_min <= spec.radius_max:
        raise SpecError('Radius range [{}, {}] is empty or not positive'.format(
            spec.radius_min, spec.radius_max))

    levels = speed_levels(spec)
    if levels < 1:
        raise SpecError('max_speed {} allows no motion over {} frames'.format(
            spec.max_speed, spec.frames))
    extent = 2 * spec.radius_max + 1 + levels
    if extent > min(spec.height, spec.width):
        raise SpecError('A blob of radius {} moving {} pixels does not fit a {}x{} frame'.format(
            spec.radius_max, levels, spec.height, spec.width))

    if not 0.0 < spec.intensity_min <= spec.intensity_max:
        raise SpecError('Intensity range must be positive')
    if spec.max_cycles < 0 or 2 * spec.max_cycles >= spec.frames:
        raise SpecError('Flicker cycles must stay below half the frame count')
    if spec.noise < 0.0:
        raise SpecError('Noise must not be negative')
    if not 0.0 <= spec.side_redundancy <= 1.0:
        raise SpecError('side_redundancy must lie in [0, 1]')
    if spec.side_tokens <= 0 or min(spec.audio_width, spec.transcript_width) < TARGET_COUNT:
        raise SpecError('Side inputs need tokens at least {} channels wide'.format(TARGET_COUNT))
    if not 2 <= spec.classes <= 2 * levels + 1:
        raise SpecError('{} classes cannot bin {} speed levels'.format(
            spec.classes, 2 * levels + 1))
    if spec.class_weights and (len(spec.class_weights) != spec.classes or
                               any(w < 0 for w in spec.class_weights) or
                               not sum(spec.class_weights) > 0):
        raise SpecError('class_weights needs {} non-negative weights'.format(spec.classes))


def speed_class(speed_x, spec):
    # type: (int, GenerationSpec) -> int
    """
    Bin a horizontal speed level into a class.

    >>> spec = default_generation_spec()
    >>> [speed_class(k, spec) for k in (-7, 0, 7)]
    [0, 7, 14]
    """
    levels = speed_levels(spec)
    target = (speed_x + levels) / (2.0 * levels)
    return min(int(target * spec.classes), spec.classes - 1)


def label_of(params, spec):
    # type: (BlobParams, GenerationSpec) -> np.ndarray
    """Return the five normalized targets of a blob."""
    levels = speed_levels(spec)
    intensity_span = spec.intensity_max - spec.intensity_min
    radius_span = spec.radius_max - spec.radius_min
    return np.array([
        (params.speed_x + levels) / (2.0 * levels),
        (params.speed_y + levels) / (2.0 * levels),
        (params.intensity - spec.intensity_min) / intensity_span if intensity_span else 0.0,
        (params.radius - spec.radius_min) / float(radius_span) if radius_span else 0.0,
        params.cycles / float(spec.max_cycles) if spec.max_cycles else 0.0,
    ])


def sample_blob(rng, spec, label_class=None):
    # type: (np.random.Generator, GenerationSpec, Optional[int]) -> BlobParams
    """Draw blob parameters; with a class given, the horizontal speed is drawn from its bin."""
    levels = speed_levels(spec)
    speeds = np.arange(-levels, levels + 1)
    if label_class is not None:
        if not 0 <= label_class < spec.classes:
            raise DataError('Class {} out of range [0, {})'.format(label_class, spec.classes))
        speeds = np.array([k for k in speeds if speed_class(k, spec) == label_class])

    speed_x = int(rng.choice(speeds))
    speed_y = int(rng.integers(-levels, levels + 1))
    intensity = float(rng.uniform(spec.intensity_min, spec.intensity_max))
    radius = int(rng.integers(spec.radius_min, spec.radius_max + 1))
    cycles = int(rng.integers(0, spec.max_cycles + 1))

    x0 = int(rng.integers(radius - min(0, speed_x), spec.width - radius - max(0, speed_x)))
    y0 = int(rng.integers(radius - min(0, speed_y), spec.height - radius - max(0, speed_y)))
    return BlobParams(speed_x, speed_y, intensity, radius, cycles, x0, y0)


def render_blob(params, spec):
    # type: (BlobParams, GenerationSpec) -> Tuple[np.ndarray, np.ndarray]
    """
    Return the disc's support ``D x H x W`` and its brightness in every frame.

    The disc centre starts on a pixel and ends on a pixel, so the first and last frames are
    symmetric about whole-pixel centres.
    """
    t = np.arange(spec.frames, dtype=np.float64)
    progress = t / (spec.frames - 1)
    cx = params.x0 + params.speed_x * progress
    cy = params.y0 + params.speed_y * progress

    yy, xx = np.meshgrid(np.arange(spec.height), np.arange(spec.width), indexing='ij')
    distance = (xx[np.newaxis] - cx[:, None, None]) ** 2 + (yy[np.newaxis] - cy[:, None, None]) ** 2
    support = (distance <= params.radius ** 2 + 1e-9).astype(np.float64)

    flicker = _FLICKER_FLOOR + (1.0 - _FLICKER_FLOOR) * np.cos(
        2.0 * np.pi * params.cycles * t / spec.frames)
    return support, params.intensity * flicker


def _compose(support, brightness, background):
    # type: (np.ndarray, np.ndarray, np.ndarray) -> np.ndarray
    foreground = support * brightness[:, None, None]
    return np.where(support[np.newaxis] > 0, foreground[np.newaxis], background)


def _side_tokens(rng, label, tokens, width, redundancy):
    # type: (np.random.Generator, np.ndarray, int, int, float) -> np.ndarray
    noise = rng.standard_normal((tokens, width))
    signal = np.zeros((tokens, width))
    signal[:, :TARGET_COUNT] = 2.0 * label - 1.0
    return np.sqrt(redundancy) * signal + np.sqrt(1.0 - redundancy) * noise


def generate_sample(seed, spec, label_class=None):
    # type: (int, GenerationSpec, Optional[int]) -> SyntheticSample
    """
    Generate one sample. Equal seeds give bit-identical samples.

    :param seed: Sample seed.
    :param spec: Generation spec.
    :param label_class: Class the sample must belong to, if any.
    """
    validate_generation_spec(spec)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(6)]
    blob_rng, background_rng, fullframe_rng, other_rng, side_rng, meta_rng = streams

    params = sample_blob(blob_rng, spec, label_class)
    label = label_of(params, spec)
    support, brightness = render_blob(params, spec)

    shape = (spec.channels, spec.frames, spec.height, spec.width)
    face = _compose(support, brightness, spec.noise * background_rng.standard_normal(shape))
    fullframe = _compose(support, 0.5 * brightness,
                         spec.noise * fullframe_rng.standard_normal(shape))

    other_support, other_brightness = render_blob(sample_blob(other_rng, spec), spec)
    interlocutor = _compose(other_support, other_brightness,
                            spec.noise * other_rng.standard_normal(shape))

    return SyntheticSample(
        face_video=face,
        fullframe_video=fullframe,
        interlocutor_video=interlocutor,
        seg_map=support,
        audio_tokens=_side_tokens(side_rng, label, spec.side_tokens, spec.audio_width,
                                  spec.side_redundancy),
        transcript_tokens=_side_tokens(side_rng, label, spec.side_tokens, spec.transcript_width,
                                       spec.side_redundancy),
        metadata=meta_rng.standard_normal(spec.meta_width),
        label=label,
        label_class=speed_class(params.speed_x, spec),
        seed=seed,
    )


def decode_label(video, seg, spec):
    # type: (Any, Any, GenerationSpec) -> np.ndarray
    """
    Recover the five targets from the foreground pixels of a face video.

    :param video: ``C x D x H x W``.
    :param seg: ``D x H x W`` support of the disc.
    """
    video = np.asarray(video, dtype=np.float64)
    seg = np.asarray(seg) > 0
    last = spec.frames - 1
    if not seg[0].any() or not seg[last].any():
        raise DataError('The segmentation map marks no foreground to decode')

    def centre(frame):
        ys, xs = np.nonzero(seg[frame])
        return xs.mean(), ys.mean()

    x_first, y_first = centre(0)
    x_last, y_last = centre(last)
    xs = np.nonzero(seg[0])[1]
    radius = int(round((xs.max() - xs.min()) / 2.0))

    first = video[0, 0][seg[0]].mean()
    second = video[0, 1][seg[1]].mean()
    cosine = np.clip((second / first - _FLICKER_FLOOR) / (1.0 - _FLICKER_FLOOR), -1.0, 1.0)
    cycles = int(round(np.arccos(cosine) * spec.frames / (2.0 * np.pi)))

    params = BlobParams(
        speed_x=int(round(x_last - x_first)),
        speed_y=int(round(y_last - y_first)),
        intensity=float(first),
        radius=radius,
        cycles=cycles,
        x0=int(round(x_first)),
        y0=int(round(y_first)),
    )
    return label_of(params, spec)


def class_counts(n, weights):
    # type: (int, Sequence[float]) -> List[int]
    """
    Split n samples over classes in proportion to weights, by largest remainder.

    >>> class_counts(85, (50, 30, 5))
    [50, 30, 5]
    >>> class_counts(10, (1, 1, 1))
    [4, 3, 3]
    """
    weights = np.asarray(weights, dtype=np.float64)
    exact = n * weights / weights.sum()
    counts = np.floor(exact).astype(int)
    remainder = n - counts.sum()
    order = sorted(range(len(weights)), key=lambda c: (-(exact[c] - counts[c]), c))
    for c in order[:remainder]:
        counts[c] += 1
    return [int(c) for c in counts]


def generate_dataset(n, seed, spec, split=0.8):
    # type: (int, int, GenerationSpec, float) -> SyntheticDataset
    """
    Generate n samples and split them into disjoint train and validation index sets.

    With class weights in the generation spec, class sizes follow them exactly.
    """
    if n < 2:
        raise ContractError('A dataset needs at least 2 samples, got {}'.format(n))
    if not 0.0 < split < 1.0:
        raise ConfigError('Split fraction must lie in (0, 1), got {}'.format(split))
    validate_generation_spec(spec)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    sample_seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]

    classes = [None] * n  # type: List[Optional[int]]
    if spec.class_weights:
        assigned = np.repeat(np.arange(spec.classes), class_counts(n, spec.class_weights))
        classes = [int(c) for c in rng.permutation(assigned)]

    samples = [generate_sample(s, spec, c) for s, c in zip(sample_seeds, classes)]

    train_count = min(max(int(round(n * split)), 1), n - 1)
    order = rng.permutation(n)
    train = tuple(sorted(int(i) for i in order[:train_count]))
    val = tuple(sorted(int(i) for i in order[train_count:]))

    _logger.info('Generated %d samples (%d train, %d val) from seed %d', n, len(train),
                 len(val), seed)
    return SyntheticDataset(spec=spec, seed=seed, split=split, samples=samples, train=train,
                            val=val)


def class_histogram(samples, k):
    # type: (Sequence[SyntheticSample], int) -> List[int]
    """Count the samples of every class."""
    return [int(c) for c in np.bincount([s.label_class for s in samples], minlength=k)]


class BalancedBatchSampler(object):
    """
    Batches with (almost) equally many samples of every class.

    Every batch holds ``batch_size // C`` samples of each of the C classes present, and the
    remaining slots rotate over the classes from batch to batch. Each class draws from its own
    reshuffled cycle of indices, so rare classes repeat (oversampling) and frequent classes are
    cut short (undersampling). An epoch has ``ceil(N / batch_size)`` batches.

    Labels whose class sizes differ by at most one are already balanced: the last batch is then
    left short, and an epoch is a permutation of the indices without repeats.
    """

    def __init__(
            self,
            labels,  # type: Sequence[int]
            batch_size,  # type: int
            seed=0  # type: int
    ):
        # type: (...) -> None
        labels = np.asarray(labels, dtype=np.int64)
        if labels.ndim != 1 or labels.size == 0:
            raise ContractError('The sampler needs a non-empty sequence of class labels')

        self.classes = [int(c) for c in np.unique(labels)]
        if batch_size < len(self.classes):
            raise ConfigError('Batch size {} is smaller than the {} classes present'.format(
                batch_size, len(self.classes)))

        self.batch_size = batch_size
        self.seed = seed
        self.members = {c: np.nonzero(labels == c)[0] for c in self.classes}
        self.batch_count = -(-labels.size // batch_size)

        sizes = [self.members[c].size for c in self.classes]
        self.balanced = max(sizes) - min(sizes) <= 1
        self.batch_sizes = [batch_size] * self.batch_count
        if self.balanced:
            self.batch_sizes[-1] = labels.size - batch_size * (self.batch_count - 1)
        # Spare slots go to larger classes first.
        self._rotation = sorted(range(len(self.classes)), key=lambda i: -sizes[i])

    def __len__(self):
        # type: () -> int
        return self.batch_count

    def epoch(self, number=0):
        # type: (int) -> List[np.ndarray]
        """Return the batches of one epoch."""
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, number]))
        count = len(self.classes)

        quotas = []  # type: List[List[int]]
        cursor = 0
        for size in self.batch_sizes:
            per_class, extra = divmod(size, count)
            bonus = {self._rotation[(cursor + i) % count] for i in range(extra)}
            cursor += extra
            quotas.append([per_class + (i in bonus) for i in range(count)])

        streams = {}
        for i, c in enumerate(self.classes):
            need = sum(q[i] for q in quotas)
            streams[c] = _cycled_permutations(rng, self.members[c], need)

        batches = []
        used = {c: 0 for c in self.classes}
        for quota in quotas:
            batch = []
            for i, c in enumerate(self.classes):
                batch.extend(streams[c][used[c]:used[c] + quota[i]])
                used[c] += quota[i]
            batches.append(rng.permutation(np.asarray(batch, dtype=np.int64)))
        return batches

    def __iter__(self):
        # type: () -> Iterator[np.ndarray]
        return iter(self.epoch())


def _cycled_permutations(rng, members, need):
    # type: (np.random.Generator, np.ndarray, int) -> np.ndarray
    rounds = [rng.permutation(members) for _ in range(-(-need // members.size))]
    return np.concatenate(rounds)[:need] if rounds else members[:0]


def balanced_batches(labels, batch_size, seed=0):
    # type: (Sequence[int], int, int) -> List[np.ndarray]
    """
    Return one epoch of class-balanced batches of positions into labels.

    >>> batches = balanced_batches([0] * 90 + [1] * 10, 10, seed=1)
    >>> len(batches), sorted({int((b < 90).sum()) for b in batches})
    (10, [5])
    """
    return BalancedBatchSampler(labels, batch_size, seed).epoch()


def shuffled_batches(count, batch_size, rng):
    # type: (int, int, np.random.Generator) -> List[np.ndarray]
    """Split a random permutation of ``range(count)`` into batches."""
    if batch_size <= 0:
        raise ConfigError('Batch size must be positive, got {}'.format(batch_size))
    order = rng.permutation(count)
    return [order[i:i + batch_size] for i in range(0, count, batch_size)]


def collate(samples, modalities=None, seg_per_frame=False):
    # type: (Sequence[SyntheticSample], Optional[Sequence[str]], bool) -> ModelInput
    """
    Stack samples into one model input batch.

    :param modalities: Side inputs to include; all of them when omitted. Inputs left out are
        None, so a model configured to read them fails.
    :param seg_per_frame: Keep the ``D x H x W`` maps. Otherwise each map is reduced to the
        static ``H x W`` union of its frames.
    """
    if not samples:
        raise ContractError('Cannot collate an empty batch')
    wanted = set(modalities) if modalities is not None else None

    def stacked(name, field):
        if wanted is not None and name not in wanted:
            return None
        return np.stack([getattr(s, field) for s in samples])

    seg = np.stack([s.seg_map for s in samples])
    if not seg_per_frame:
        seg = np.max(seg, axis=1)

    return ModelInput(
        face=np.stack([s.face_video for s in samples]),
        seg=seg,
        fullframe_target=stacked('fullframe_target', 'fullframe_video'),
        fullframe_interlocutor=stacked('fullframe_interlocutor', 'interlocutor_video'),
        audio=stacked('audio', 'audio_tokens'),
        transcript=stacked('transcript', 'transcript_tokens'),
        metadata=stacked('metadata', 'metadata'),
    )


def targets(samples):
    # type: (Sequence[SyntheticSample]) -> Tuple[np.ndarray, np.ndarray]
    """Return the regression targets ``N x 5`` and the class labels ``N``."""
    return (np.stack([s.label for s in samples]),
            np.array([s.label_class for s in samples], dtype=np.int64))


def _tuple_hooks():
    # type: () -> conf.Hooks
    return conf.Hooks(after_parse=lambda _, value: tuple(value), before_serialize=None)


def generation_spec_processor(section='spec'):
    # type: (str) -> Any
    """Declare the document layout of a generation spec."""
    return conf.named_tuple(section, GenerationSpec, [
        conf.integer('channels'),
        conf.integer('frames'),
        conf.integer('height'),
        conf.integer('width'),
        conf.integer('radius_min'),
        conf.integer('radius_max'),
        conf.floating_point('max_speed'),
        conf.floating_point('intensity_min'),
        conf.floating_point('intensity_max'),
        conf.integer('max_cycles'),
        conf.floating_point('noise'),
        conf.integer('side_tokens'),
        conf.integer('audio_width'),
        conf.integer('transcript_width'),
        conf.integer('meta_width'),
        conf.floating_point('side_redundancy'),
        conf.integer('classes'),
        conf.array(conf.floating_point('class_weights', required=False), omit_empty=True,
                   hooks=_tuple_hooks()),
    ])


_MANIFEST_PROCESSOR = conf.dictionary('dataset', [
    conf.integer('seed'),
    conf.floating_point('split'),
    conf.array(conf.integer('train')),
    conf.array(conf.integer('val')),
    conf.array(conf.integer('sample_seeds')),
    generation_spec_processor(),
])


_VIDEO_FILES = (
    ('face_video', 'face'),
    ('fullframe_video', 'fullframe'),
    ('interlocutor_video', 'interlocutor'),
)
_TOKEN_FILES = (
    ('audio_tokens', 'audio'),
    ('transcript_tokens', 'transcript'),
)


def _sample_path(directory, index, suffix):
    # type: (str, int, str) -> str
    return os.path.join(directory, 'sample_{:05d}_{}'.format(index, suffix))


def export_dataset(dataset, directory):
    # type: (SyntheticDataset, str) -> None
    """
    Write a dataset to a directory that :func:`load_dataset` reads back bit-exactly.

    Videos are ``.npy`` arrays, segmentation maps graymaps with the frames stacked vertically,
    side tokens CSV files, and ``labels.csv`` and ``metadata.csv`` hold one row per sample.
    """
    if not os.path.isdir(directory):
        os.makedirs(directory)

    manifest = {
        'seed': dataset.seed,
        'split': dataset.split,
        'train': list(dataset.train),
        'val': list(dataset.val),
        'sample_seeds': [s.seed for s in dataset.samples],
        'spec': dataset.spec,
    }
    conf.serialize_to_file(_MANIFEST_PROCESSOR, manifest, os.path.join(directory, 'manifest.cfg'))

    for i, sample in enumerate(dataset.samples):
        for field, suffix in _VIDEO_FILES:
            np.save(_sample_path(directory, i, suffix + '.npy'), getattr(sample, field))
        write_frames_graymap(_sample_path(directory, i, 'seg.pgm'), sample.seg_map)
        for field, suffix in _TOKEN_FILES:
            write_csv_matrix(_sample_path(directory, i, suffix + '.csv'), getattr(sample, field))

    labels = pd.DataFrame(np.stack([s.label for s in dataset.samples]),
                          columns=['O', 'C', 'E', 'A', 'N'])
    labels.insert(0, 'index', range(len(dataset.samples)))
    labels['class'] = [s.label_class for s in dataset.samples]
    labels.to_csv(os.path.join(directory, 'labels.csv'), index=False, float_format='%.17g',
                  lineterminator='\n')
    if dataset.spec.meta_width:
        write_csv_matrix(os.path.join(directory, 'metadata.csv'),
                         np.stack([s.metadata for s in dataset.samples]))

    _logger.info('Exported %d samples to %s', len(dataset.samples), directory)


def load_dataset(directory):
    # type: (str) -> SyntheticDataset
    """Read a dataset written by :func:`export_dataset`."""
    manifest_path = os.path.join(directory, 'manifest.cfg')
    if not os.path.isfile(manifest_path):
        raise DataError('No dataset manifest at {}'.format(manifest_path))
    manifest = conf.parse_from_file(_MANIFEST_PROCESSOR, manifest_path)
    spec = manifest['spec']

    try:
        labels = pd.read_csv(os.path.join(directory, 'labels.csv'), float_precision='round_trip')
    except (IOError, OSError, ValueError) as error:
        raise DataError('Cannot read labels of {}: {}'.format(directory, error))
    if spec.meta_width:
        metadata = read_csv_matrix(os.path.join(directory, 'metadata.csv'))
    else:
        metadata = np.zeros((len(labels), 0))

    count = len(manifest['sample_seeds'])
    if len(labels) != count or metadata.shape[0] != count:
        raise DataError('Dataset {} lists {} samples but has {} labels'.format(
            directory, count, len(labels)))

    samples = []
    for i, seed in enumerate(manifest['sample_seeds']):
        fields = {}
        try:
            for field, suffix in _VIDEO_FILES:
                fields[field] = np.load(_sample_path(directory, i, suffix + '.npy'))
        except (IOError, OSError, ValueError) as error:
            raise DataError('Cannot read sample {} of {}: {}'.format(i, directory, error))
        for field, suffix in _TOKEN_FILES:
            fields[field] = read_csv_matrix(_sample_path(directory, i, suffix + '.csv'))
        fields['seg_map'] = load_frames_segmap(_sample_path(directory, i, 'seg.pgm'),
                                               spec.frames)
        row = labels.iloc[i]
        samples.append(SyntheticSample(
            metadata=metadata[i],
            label=row[['O', 'C', 'E', 'A', 'N']].to_numpy(dtype=np.float64),
            label_class=int(row['class']),
            seed=seed,
            **fields
        ))

    return SyntheticDataset(spec=spec, seed=manifest['seed'], split=manifest['split'],
                            samples=samples, train=tuple(manifest['train']),
                            val=tuple(manifest['val']))
