import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipid import dataset
from slipid.dataset import (
    BadMagicError,
    DatasetMeta,
    GaitDataset,
    GenerationError,
    SamplingRanges,
    SimConfig,
    TruncatedFileError,
    VersionMismatchError,
    generate,
    load,
    record_rng,
    sample_params,
    save,
    to_features,
)
from slipid.dynamics import GaitParams
from slipid.simulator import InitialConditions, simulate


@pytest.fixture(scope="module")
def small():
    return generate(40, seed=11)


def test_uniform_draws():
    rng = np.random.default_rng(5)
    ranges = SamplingRanges()
    ms = np.array([sample_params(rng, ranges)[0].m for _ in range(100_000)])
    assert ms.min() >= 60 and ms.max() <= 75
    assert abs(ms.mean() - 67.5) < 0.05


def test_degenerate_range():
    eps = 1e-9
    ranges = SamplingRanges(m_range=(70 - eps, 70))
    rng = np.random.default_rng(0)
    for _ in range(100):
        assert 70 - eps <= sample_params(rng, ranges)[0].m <= 70


def test_draws_repeat_with_seed():
    a = [sample_params(record_rng(3, i), SamplingRanges()) for i in range(5)]
    b = [sample_params(record_rng(3, i), SamplingRanges()) for i in range(5)]
    assert a == b
    assert a[0] != a[1]


@given(st.integers(0, 2**63), st.integers(0, 10**6))
@settings(max_examples=100, deadline=None)
def test_draws_stay_in_range(seed, index):
    ranges = SamplingRanges(v0=(0.8, 1.0))
    p, ic = sample_params(record_rng(seed, index), ranges)
    assert 60 <= p.m <= 75 and 8000 <= p.k <= 10000 and 0.6 <= p.l0 <= 0.8
    assert 0 <= ic.x0 <= 0.1 and 0 <= ic.y_offset <= 0.1 and 0.8 <= ic.v0 <= 1.0


def test_range_validation():
    with pytest.raises(ValueError):
        SamplingRanges(m_range=(75, 60))
    with pytest.raises(ValueError):
        SamplingRanges(y0_range=(0.0, 0.7))


def test_features(walker):
    p, ic = walker
    ic = InitialConditions(0.07, 0.0)
    f = to_features(simulate(p, ic))
    assert f.shape == (302,)
    assert f[0] == 0.0
    assert f[151] == p.l0


def test_equal_ratio_features_match():
    ic = InitialConditions(0.03, 0.01)
    a = to_features(simulate(GaitParams(60, 8000, 0.7), ic))
    b = to_features(simulate(GaitParams(75, 10000, 0.7), ic))
    assert np.max(np.abs(a - b)) < 1e-9


def test_generate_shape_and_meta(small):
    assert len(small) == 40
    assert small.features.shape == (40, 302)
    assert small.meta.samples_per_channel == 151
    assert small.meta.rejection_count > 0
    assert 0 < dataset.acceptance_rate(small) < 1
    assert np.all(small.features[:, 0] == 0)
    rec = small[3]
    assert isinstance(rec.params, GaitParams)
    assert rec.features is small.features[3] or np.array_equal(rec.features, small.features[3])


def test_generate_deterministic(small):
    again = generate(40, seed=11)
    assert again.params.tobytes() == small.params.tobytes()
    assert again.features.tobytes() == small.features.tobytes()
    assert again.meta.rejection_count == small.meta.rejection_count


def test_generate_worker_count_irrelevant(small):
    parallel = generate(40, seed=11, workers=2, chunk=7)
    assert parallel.params.tobytes() == small.params.tobytes()
    assert parallel.features.tobytes() == small.features.tobytes()


def test_record_depends_only_on_seed_and_index(small):
    prefix = generate(10, seed=11)
    assert prefix.features.tobytes() == small.features[:10].tobytes()


def test_records_resimulate(small):
    rec = small[0]
    traj = simulate(rec.params, rec.init)
    assert np.array_equal(to_features(traj), rec.features)


def test_generate_aborts_when_nothing_walks():
    ranges = SamplingRanges(v0=3.0)
    with pytest.raises(GenerationError, match="acceptance"):  # per-record cap or <1% rule
        generate(50, seed=0, ranges=ranges, sim=SimConfig(duration=3.0))


def test_round_trip_bytes(small, tmp_path):
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    save(small, a)
    back = load(a)
    save(back, b)
    assert a.read_bytes() == b.read_bytes()
    assert back.params.tobytes() == small.params.tobytes()
    assert back.meta.seed == 11 and back.meta.rejection_count == small.meta.rejection_count


def test_file_layout(small, tmp_path):
    path = tmp_path / "d.bin"
    save(small, path)
    raw = path.read_bytes()
    assert raw[:8] == b"GAITDS01"
    assert int.from_bytes(raw[8:12], "little") == 1
    assert len(raw) == 8 + 4 + 4 * 8 + 4 + 3 * 8 + 40 * 8 * (6 + 302)
    assert np.frombuffer(raw[12:20], "<f8")[0] == 15.0


def test_bad_magic(small, tmp_path):
    path = tmp_path / "d.bin"
    save(small, path)
    raw = bytearray(path.read_bytes())
    raw[0:8] = b"NOTADATA"
    path.write_bytes(bytes(raw))
    with pytest.raises(BadMagicError):
        load(path)


def test_version_mismatch(small, tmp_path):
    path = tmp_path / "d.bin"
    save(small, path)
    raw = bytearray(path.read_bytes())
    raw[8:12] = (2).to_bytes(4, "little")
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatchError):
        load(path)


def test_truncation_names_record(small, tmp_path):
    path = tmp_path / "d.bin"
    save(small, path)
    raw = path.read_bytes()
    record = 8 * (6 + 302)
    header = len(raw) - 40 * record
    path.write_bytes(raw[: header + 17 * record + 100])
    with pytest.raises(TruncatedFileError, match="record 17") as exc:
        load(path)
    assert exc.value.record_index == 17
    path.write_bytes(raw[:30])
    with pytest.raises(TruncatedFileError):
        load(path)


@given(
    n=st.integers(0, 6),
    T=st.integers(1, 5),
    seed=st.integers(0, 2**64 - 1),
    rejections=st.integers(0, 2**40),
    data=st.data(),
)
@settings(max_examples=50, deadline=None)
def test_round_trip_random(tmp_path_factory, n, T, seed, rejections, data):
    floats = st.floats(allow_nan=False, width=64)
    params = np.array(data.draw(st.lists(floats, min_size=6 * n, max_size=6 * n)), dtype=float).reshape(n, 6)
    feats = np.array(data.draw(st.lists(floats, min_size=2 * T * n, max_size=2 * T * n)), dtype=float).reshape(n, 2 * T)
    meta = DatasetMeta(duration=0.1 * (T - 1) + 0.05, dt=0.1, g=9.81, alpha0=1.0, samples_per_channel=T,
                       seed=seed, rejection_count=rejections)
    ds = GaitDataset(meta, params, feats)
    path = tmp_path_factory.mktemp("rt") / "d.bin"
    save(ds, path)
    back = load(path)
    assert back.params.tobytes() == ds.params.tobytes()
    assert back.features.tobytes() == ds.features.tobytes()
    assert (back.meta.seed, back.meta.rejection_count, back.meta.samples_per_channel) == (seed, rejections, T)
    assert back.meta.duration == meta.duration and back.meta.g == meta.g
