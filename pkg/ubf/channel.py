"""ubf.channel -- Rayleigh fading channel datasets

A dataset is a stack of ``K x M`` channel matrices.  Row ``k`` of a channel
matrix is the conjugate-transposed channel vector of user ``k``, so entry
``(k, j)`` of ``H @ W`` is the gain of beam ``j`` at user ``k``.

Generation is deterministic in ``(seed, count, K, M)``.  The stream is
numpy's PCG64 bit generator seeded through ``SeedSequence(seed)``; every
channel entry consumes two consecutive doubles ``u1, u2`` of
``Generator.random`` (sample-major, row-major order) and is mapped with
Box-Muller to a circular complex Gaussian of unit variance::

    r = sqrt(-ln(1 - u1))
    h = r cos(2 pi u2) + i r sin(2 pi u2)

Datasets are stored in a small binary format, see :py:func:`save`.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (ContractViolation, DatasetFormatError, DatasetIOError,
                     TruncatedDatasetError, require)

log = logging.getLogger('ubf.channel')

SPLIT_TAGS = ('train', 'val', 'test', 'master')

#: per-experiment seeds, seeding both the training draw and model initialization
EXPERIMENT_SEEDS = (42, 678, 888, 123, 456)
#: dedicated test-set seed, disjoint from the experiment seeds
TEST_SEED = 20250
TEST_SIZE = 5000
HPO_SEED = 0

MAGIC = b'UBF1'
FORMAT_VERSION = 1

HEADER = np.dtype([
    ('magic', 'S4'),
    ('version', '<u4'),
    ('k_users', '<u4'),
    ('m_antennas', '<u4'),
    ('count', '<u8'),
    ('seed', '<u8'),
    ('split_tag', 'u1'),
])
PAYLOAD = np.dtype('<c16')


@dataclass(frozen=True, eq=False)
class Dataset:
    '''An immutable stack of channel matrices

    :param channels: complex array of shape ``(count, K, M)``
    :param seed: seed the channels were drawn with
    :param split_tag: one of ``train``, ``val``, ``test``, ``master``
    '''
    channels: np.ndarray
    seed: int
    split_tag: str

    def __post_init__(self):
        require(self.split_tag in SPLIT_TAGS, "unknown split tag %r", self.split_tag)
        channels = np.array(self.channels, dtype=np.complex128)
        require(channels.ndim == 3, "channels must have shape (count, K, M), got %s", channels.shape)
        channels.setflags(write=False)
        object.__setattr__(self, "channels", channels)

    def __len__(self):
        return self.channels.shape[0]

    def __getitem__(self, index):
        return self.channels[index]

    @property
    def k_users(self):
        return self.channels.shape[1]

    @property
    def m_antennas(self):
        return self.channels.shape[2]

    def identical(self, other):
        '''bitwise equality of channels and metadata'''
        return (self.seed == other.seed
                and self.split_tag == other.split_tag
                and self.channels.shape == other.channels.shape
                and self.channels.tobytes() == other.channels.tobytes())

    def __repr__(self):
        return "Dataset(count=%d, K=%d, M=%d, seed=%d, split_tag=%r)" % (
            len(self), self.k_users, self.m_antennas, self.seed, self.split_tag)


def rayleigh(rng, shape):
    """draw i.i.d. CN(0, 1) entries of the given shape from ``rng``"""
    u = rng.random(tuple(shape) + (2,))
    radius = np.sqrt(-np.log1p(-u[..., 0]))
    angle = 2.0 * np.pi * u[..., 1]
    return radius * np.cos(angle) + 1j * (radius * np.sin(angle))


def generate(seed, count, k_users, m_antennas, split_tag='train'):
    """draw ``count`` Rayleigh channels of shape ``K x M``"""
    require(count >= 1, "count must be at least 1, got %s", count)
    require(k_users >= 1 and m_antennas >= 1, "K and M must be positive")
    require(0 <= seed < 2 ** 64, "seed must be an unsigned 64-bit integer, got %s", seed)

    rng = np.random.Generator(np.random.PCG64(seed))
    channels = rayleigh(rng, (count, k_users, m_antennas))
    log.debug("generated %d channels (K=%d, M=%d, seed=%d)", count, k_users, m_antennas, seed)
    return Dataset(channels, int(seed), split_tag)


def split_train_val(d):
    '''split a training draw into (train, val)

    The first ``floor(0.9 N)`` samples train, the tail validates.
    '''
    require(d.split_tag == 'train', "can only split a training draw, got %r", d.split_tag)
    require(len(d) >= 10, "dataset too small to split: %d < 10", len(d))

    n_train = (9 * len(d)) // 10
    train = Dataset(d.channels[:n_train], d.seed, 'train')
    val = Dataset(d.channels[n_train:], d.seed, 'val')
    return train, val


def draw_subset(master, count, seed):
    '''draw ``count`` channels without replacement from a master set

    Indices are drawn with ``seed`` and kept in ascending order, so the subset
    preserves the master's order.
    '''
    require(master.split_tag == 'master', "subsets are drawn from a master set, got %r",
            master.split_tag)
    require(1 <= count <= len(master), "cannot draw %s of %d channels", count, len(master))

    rng = np.random.Generator(np.random.PCG64(seed))
    index = np.sort(rng.choice(len(master), size=count, replace=False))
    return Dataset(master.channels[index], int(seed), 'train')


def save(d, path):
    """write a dataset

    Layout: the header ``magic "UBF1", version u32, K u32, M u32, count u64,
    seed u64, split_tag u8`` (little endian, packed) followed by
    ``count * K * M`` pairs of little-endian f64 ``(real, imag)`` in
    sample-major, row-major order.
    """
    header = np.zeros((), dtype=HEADER)
    header['magic'] = MAGIC
    header['version'] = FORMAT_VERSION
    header['k_users'] = d.k_users
    header['m_antennas'] = d.m_antennas
    header['count'] = len(d)
    header['seed'] = d.seed
    header['split_tag'] = SPLIT_TAGS.index(d.split_tag)

    try:
        with open(path, 'wb') as f:
            f.write(header.tobytes())
            f.write(np.ascontiguousarray(d.channels, dtype=PAYLOAD).tobytes())
    except OSError as e:
        raise DatasetIOError("cannot write dataset %s: %s", path, e)
    log.info("saved %r to %s", d, path)


def load(path):
    """read a dataset written by :py:func:`save`"""
    try:
        with open(path, 'rb') as f:
            data = f.read()
    except OSError as e:
        raise DatasetIOError("cannot read dataset %s: %s", path, e)

    if len(data) < HEADER.itemsize:
        if not MAGIC.startswith(data[:len(MAGIC)]):
            raise DatasetFormatError("%s: not a dataset file (bad magic)", path)
        raise TruncatedDatasetError("%s: truncated header (%d bytes)", path, len(data))

    header = np.frombuffer(data, dtype=HEADER, count=1)[0]
    if header['magic'] != MAGIC:
        raise DatasetFormatError("%s: not a dataset file (bad magic %r)", path, header['magic'])
    if header['version'] != FORMAT_VERSION:
        raise DatasetFormatError("%s: unsupported format version %d", path, header['version'])
    if header['split_tag'] >= len(SPLIT_TAGS):
        raise DatasetFormatError("%s: unknown split tag code %d", path, header['split_tag'])

    shape = (int(header['count']), int(header['k_users']), int(header['m_antennas']))
    expected = shape[0] * shape[1] * shape[2] * PAYLOAD.itemsize
    payload = data[HEADER.itemsize:]
    if len(payload) < expected:
        raise TruncatedDatasetError("%s: payload has %d of %d bytes", path, len(payload), expected)
    if len(payload) > expected:
        raise DatasetFormatError("%s: %d trailing bytes after payload", path, len(payload) - expected)

    channels = np.frombuffer(payload, dtype=PAYLOAD).astype(np.complex128).reshape(shape)
    try:
        return Dataset(channels, int(header['seed']), SPLIT_TAGS[header['split_tag']])
    except ContractViolation as e:
        raise DatasetFormatError("%s: %s", path, e)
