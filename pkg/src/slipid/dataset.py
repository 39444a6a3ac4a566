"""Synthetic gait datasets: sampling, generation and the binary file format.

File layout (little-endian)::

    magic        8s   b"GAITDS01"
    version      u32  1
    duration     f64
    dt           f64
    g            f64
    alpha0       f64
    T            u32  samples per channel
    N            u64  record count
    rejections   u64
    seed         u64
    N records of f64 x (6 + 2T):
        m, k, l0, x0, y_offset, v0, x[0..T), y[0..T)
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .dynamics import DEFAULT_ALPHA0, DEFAULT_G, GaitParams
from .simulator import (
    DEFAULT_DURATION,
    DEFAULT_INTERNAL_H,
    DEFAULT_OUTPUT_DT,
    DEFAULT_V0,
    GaitFailure,
    InitialConditions,
    Trajectory,
    n_samples,
    simulate,
)

MAGIC = b"GAITDS01"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIddddIQQQ")
N_PARAM_COLUMNS = 6
PARAM_COLUMNS = ("m", "k", "l0", "x0", "y_offset", "v0")

MAX_ATTEMPTS_PER_RECORD = 100
MIN_ACCEPTANCE = 0.01
ACCEPTANCE_CHECK_AFTER = 1000


class DatasetFormatError(ValueError):
    pass


class BadMagicError(DatasetFormatError):
    pass


class VersionMismatchError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    def __init__(self, message: str, record_index: int | None = None):
        super().__init__(message)
        self.record_index = record_index


class GenerationError(RuntimeError):
    """Parameter regime does not produce walking gaits often enough."""


Range = tuple[float, float]


@dataclass(frozen=True)
class SamplingRanges:
    m_range: Range = (60.0, 75.0)
    k_range: Range = (8000.0, 10000.0)
    l0_range: Range = (0.6, 0.8)
    x0_range: Range = (0.0, 0.1)
    y0_range: Range = (0.0, 0.1)
    v0: float | Range = DEFAULT_V0
    alpha0: float = DEFAULT_ALPHA0
    g: float = DEFAULT_G

    def __post_init__(self):
        for name in ("m_range", "k_range", "l0_range", "x0_range", "y0_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} needs lo < hi, got {(lo, hi)!r}")
        for name in ("m_range", "k_range", "l0_range"):
            if getattr(self, name)[0] <= 0:
                raise ValueError(f"{name} must be positive")
        if self.y0_range[0] < 0 or self.y0_range[1] >= self.l0_range[0]:
            raise ValueError("y0_range must lie in [0, min l0)")
        if isinstance(self.v0, tuple):
            if not 0 < self.v0[0] < self.v0[1]:
                raise ValueError(f"v0 range must be positive with lo < hi, got {self.v0!r}")
        elif not self.v0 > 0:
            raise ValueError(f"v0 must be positive, got {self.v0!r}")


@dataclass(frozen=True)
class SimConfig:
    duration: float = DEFAULT_DURATION
    dt: float = DEFAULT_OUTPUT_DT
    internal_h: float = DEFAULT_INTERNAL_H

    @property
    def samples_per_channel(self) -> int:
        return n_samples(self.duration, self.dt)


@dataclass(frozen=True)
class GaitRecord:
    params: GaitParams
    init: InitialConditions
    features: np.ndarray


@dataclass
class DatasetMeta:
    duration: float
    dt: float
    g: float
    alpha0: float
    samples_per_channel: int
    seed: int
    rejection_count: int = 0
    # not stored in the binary file
    ranges: SamplingRanges | None = None


@dataclass
class GaitDataset:
    """Records stored column-wise.

    ``params`` has one row ``(m, k, l0, x0, y_offset, v0)`` per record and
    ``features`` the matching ``2T`` feature vector.
    """

    meta: DatasetMeta
    params: np.ndarray = field(default_factory=lambda: np.zeros((0, N_PARAM_COLUMNS)))
    features: np.ndarray = None

    def __post_init__(self):
        width = 2 * self.meta.samples_per_channel
        if self.features is None:
            self.features = np.zeros((0, width))
        self.params = np.ascontiguousarray(self.params, dtype="<f8").reshape(-1, N_PARAM_COLUMNS)
        self.features = np.ascontiguousarray(self.features, dtype="<f8").reshape(-1, width)
        if len(self.params) != len(self.features):
            raise ValueError("params and features disagree on record count")

    def __len__(self) -> int:
        return len(self.params)

    def __getitem__(self, i: int) -> GaitRecord:
        m, k, l0, x0, y_offset, v0 = map(float, self.params[i])
        return GaitRecord(
            GaitParams(m, k, l0, self.meta.alpha0, self.meta.g),
            InitialConditions(x0, y_offset, v0),
            self.features[i],
        )

    def __iter__(self) -> Iterator[GaitRecord]:
        return (self[i] for i in range(len(self)))

    def column(self, name: str) -> np.ndarray:
        return self.params[:, PARAM_COLUMNS.index(name)]


def _uniform(rng: np.random.Generator, r: Range) -> float:
    return float(rng.uniform(r[0], r[1]))


def sample_params(rng: np.random.Generator, ranges: SamplingRanges) -> tuple[GaitParams, InitialConditions]:
    """Draw m, k, l0, x0, y0 (and v0 if ranged) independently, in that order."""
    m = _uniform(rng, ranges.m_range)
    k = _uniform(rng, ranges.k_range)
    l0 = _uniform(rng, ranges.l0_range)
    x0 = _uniform(rng, ranges.x0_range)
    y0 = _uniform(rng, ranges.y0_range)
    v0 = _uniform(rng, ranges.v0) if isinstance(ranges.v0, tuple) else float(ranges.v0)
    return GaitParams(m, k, l0, ranges.alpha0, ranges.g), InitialConditions(x0, y0, v0)


def record_rng(seed: int, index: int) -> np.random.Generator:
    """Independent PCG64 stream for record ``index``.

    The stream key is numpy's SeedSequence hash of ``(seed, index)``, so a
    record never depends on how many draws other records consumed.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def to_features(traj: Trajectory) -> np.ndarray:
    """``[x - x[0] ..., y ...]``: horizontal translation removed, height kept."""
    return np.concatenate([traj.xs - traj.xs[0], traj.ys])


def _simulate_record(seed, index, ranges, sim):
    """Returns ``(row, attempts)``; ``row`` is None when every attempt failed."""
    rng = record_rng(seed, index)
    for attempt in range(1, MAX_ATTEMPTS_PER_RECORD + 1):
        p, ic = sample_params(rng, ranges)
        try:
            traj = simulate(p, ic, sim.duration, sim.dt, sim.internal_h)
        except GaitFailure:
            continue
        head = np.array([p.m, p.k, p.l0, ic.x0, ic.y_offset, ic.v0])
        return np.concatenate([head, to_features(traj)]), attempt
    return None, MAX_ATTEMPTS_PER_RECORD


def _simulate_chunk(args):
    seed, start, stop, ranges, sim = args
    return [_simulate_record(seed, i, ranges, sim) for i in range(start, stop)]


def generate(
    n: int,
    seed: int,
    ranges: SamplingRanges | None = None,
    sim: SimConfig | None = None,
    workers: int = 1,
    chunk: int = 64,
    progress=None,
) -> GaitDataset:
    """Simulate ``n`` accepted gaits; record ``i`` depends only on ``(seed, i)``.

    ``progress``, if given, is called with the number of finished records.
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n!r}")
    ranges = ranges or SamplingRanges()
    sim = sim or SimConfig()
    T = sim.samples_per_channel
    rows = np.empty((n, N_PARAM_COLUMNS + 2 * T))

    tasks = [(seed, a, min(a + chunk, n), ranges, sim) for a in range(0, n, chunk)]
    if workers > 1 and len(tasks) > 1:
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_simulate_chunk, tasks)
    else:
        pool = None
        results = map(_simulate_chunk, tasks)

    attempts = 0
    i = 0
    try:
        for chunk_result in results:
            for row, tries in chunk_result:
                attempts += tries
                accepted = i + (row is not None)
                if attempts >= ACCEPTANCE_CHECK_AFTER and accepted < MIN_ACCEPTANCE * attempts:
                    raise GenerationError(
                        f"acceptance {accepted}/{attempts} below {MIN_ACCEPTANCE:.0%}; "
                        f"v0={ranges.v0!r}, alpha0={math.degrees(ranges.alpha0):.2f} deg does not walk"
                    )
                if row is None:
                    raise GenerationError(
                        f"record {i}: no walking gait in {MAX_ATTEMPTS_PER_RECORD} attempts "
                        f"(acceptance so far {i}/{attempts})"
                    )
                rows[i] = row
                i += 1
            if progress is not None:
                progress(i)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)

    meta = DatasetMeta(
        duration=sim.duration, dt=sim.dt, g=ranges.g, alpha0=ranges.alpha0,
        samples_per_channel=T, seed=seed, rejection_count=attempts - n, ranges=ranges,
    )
    return GaitDataset(meta, rows[:, :N_PARAM_COLUMNS], rows[:, N_PARAM_COLUMNS:])


def acceptance_rate(ds: GaitDataset) -> float:
    total = len(ds) + ds.meta.rejection_count
    return len(ds) / total if total else float("nan")


def save(ds: GaitDataset, path) -> None:
    m = ds.meta
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, m.duration, m.dt, m.g, m.alpha0,
        m.samples_per_channel, len(ds), m.rejection_count, m.seed,
    )
    body = np.concatenate([ds.params, ds.features], axis=1).astype("<f8", copy=False)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(body).tobytes())


def load(path) -> GaitDataset:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < len(MAGIC) or buf[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: not a gait dataset (bad magic {buf[:8]!r})")
    if len(buf) < _HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated ({len(buf)} of {_HEADER.size} bytes)")
    _, version, duration, dt, g, alpha0, T, N, rejections, seed = _HEADER.unpack_from(buf)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    width = N_PARAM_COLUMNS + 2 * T
    record_bytes = 8 * width
    available = len(buf) - _HEADER.size
    if available < N * record_bytes:
        bad = available // record_bytes
        raise TruncatedFileError(f"{path}: truncated at record {bad} of {N}", record_index=bad)
    if available > N * record_bytes:
        raise DatasetFormatError(f"{path}: {available - N * record_bytes} trailing bytes after {N} records")
    body = np.frombuffer(buf, dtype="<f8", count=N * width, offset=_HEADER.size).reshape(N, width)
    meta = DatasetMeta(duration, dt, g, alpha0, T, seed, rejections)
    return GaitDataset(meta, body[:, :N_PARAM_COLUMNS].copy(), body[:, N_PARAM_COLUMNS:].copy())
