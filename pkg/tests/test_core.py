import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftlens.core import (Dataset, StandardizationParams, TimeEmbedding, embed_time, load_csv,
                            read_standardization, split_at, time_histogram, write_csv,
                            write_standardization)
from driftlens.errors import (ConstantTime, DegenerateSplit, EmptyDataset, MissingColumn,
                              NonNumericCell)


def _csv(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_time_normalized_to_unit_interval(tmp_path):
    ds = load_csv(_csv(tmp_path, "t,a\n10,1\n20,2\n30,3\n"))
    assert ds.t.tolist() == [0.0, 0.5, 1.0]
    assert ds.time_origin == 10 and ds.time_scale == 20
    np.testing.assert_allclose(ds.raw_time, [10, 20, 30])


def test_unsorted_rows_are_sorted_by_time(tmp_path):
    ds = load_csv(_csv(tmp_path, "a,t\n3,30\n1,10\n2,20\n"))
    assert ds.X[:, 0].tolist() == [1, 2, 3]


def test_standardize_four_values(tmp_path):
    ds = load_csv(_csv(tmp_path, "t,a\n0,1\n1,2\n2,3\n3,4\n"), standardize=True)
    # population std of {1,2,3,4} is sqrt(1.25)
    np.testing.assert_allclose(ds.X[:, 0], [-1.3416, -0.4472, 0.4472, 1.3416], atol=1e-4)


def test_constant_feature_standardizes_to_zero_and_is_flagged(tmp_path):
    ds = load_csv(_csv(tmp_path, "t,a,b\n0,5,1\n1,5,2\n2,5,4\n"), standardize=True)
    assert np.all(ds.X[:, 0] == 0.0)
    assert ds.constant_features.tolist() == [True, False]
    assert ds.standardization.std[0] == 1.0


def test_missing_time_column(tmp_path):
    with pytest.raises(MissingColumn):
        load_csv(_csv(tmp_path, "a,b\n1,2\n"))


def test_non_numeric_cell_reports_row_and_column(tmp_path):
    with pytest.raises(NonNumericCell) as exc:
        load_csv(_csv(tmp_path, "t,a\n0,1\n1,oops\n"))
    assert exc.value.row == 2 and exc.value.col == "a"


def test_empty_and_constant_time(tmp_path):
    with pytest.raises(EmptyDataset):
        load_csv(_csv(tmp_path, "t,a\n"))
    with pytest.raises(ConstantTime):
        load_csv(_csv(tmp_path, "t,a\n4,1\n4,2\n", "c.csv"))


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 3)) * 1e3
    ds = Dataset.from_arrays(X, np.arange(50) * 7.0 + 100, ["a", "b", "c"])
    write_csv(ds, tmp_path / "o.csv")
    back = load_csv(tmp_path / "o.csv")
    np.testing.assert_allclose(back.X, ds.X, rtol=1e-12)
    np.testing.assert_allclose(back.raw_time, ds.raw_time, rtol=1e-12)
    assert back.feature_names == ds.feature_names


def test_standardization_sidecar_round_trip(tmp_path):
    params = StandardizationParams.fit(np.array([[1.0, 3.0], [3.0, 3.0]]))
    write_standardization(params, tmp_path / "s.json", ["a", "b"])
    back = read_standardization(tmp_path / "s.json")
    np.testing.assert_array_equal(back.mean, params.mean)
    np.testing.assert_array_equal(back.std, params.std)
    np.testing.assert_array_equal(back.constant, params.constant)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40), st.integers(0, 10_000))
def test_standardized_moments(values, seed):
    x = np.array(values)
    if np.ptp(x) <= 1e-6 * max(1.0, np.abs(x).max()):
        return
    rng = np.random.default_rng(seed)
    X = np.column_stack([x, rng.standard_normal(len(x))])
    Z = StandardizationParams.fit(X).apply(X)
    assert abs(Z[:, 0].mean()) < 1e-9
    assert abs(Z[:, 0].std() - 1.0) < 1e-9


def test_embedding_examples():
    np.testing.assert_allclose(embed_time(0.5, TimeEmbedding.polynomial(3)), [0.5, 0.25, 0.125])
    np.testing.assert_allclose(embed_time(0.25, TimeEmbedding.fourier(1, 1.0)), [1.0, 0.0],
                               atol=1e-15)
    assert embed_time(0.7, TimeEmbedding.binary(0.4)).tolist() == [1.0]
    assert embed_time(0.3, TimeEmbedding.binary(0.4)).tolist() == [0.0]


def test_fourier_order_is_sin_cos_per_frequency():
    e = embed_time(0.1, TimeEmbedding.fourier(2, 1.0))
    expected = [np.sin(0.2 * np.pi), np.cos(0.2 * np.pi), np.sin(0.4 * np.pi), np.cos(0.4 * np.pi)]
    np.testing.assert_allclose(e, expected)


@pytest.mark.parametrize("d", [1, 2, 5])
def test_polynomial_exact_at_endpoints(d):
    emb = TimeEmbedding.polynomial(d)
    assert embed_time(0.0, emb).tolist() == [0.0] * d
    assert embed_time(1.0, emb).tolist() == [1.0] * d


def test_embedding_dims_and_vector_input():
    t = np.linspace(0, 1, 7)
    assert embed_time(t, TimeEmbedding.fourier(5)).shape == (7, 10)
    assert embed_time(t, TimeEmbedding.polynomial(4)).shape == (7, 4)
    assert embed_time(t, TimeEmbedding.binary(0.5)).shape == (7, 1)


def test_parse_embedding_period_in_samples():
    emb = TimeEmbedding.parse("fourier:5:500", n_samples=3001)
    assert emb.degree == 5
    assert emb.period == pytest.approx(500 / 3000)
    assert TimeEmbedding.parse("poly:3") == TimeEmbedding.polynomial(3)
    assert TimeEmbedding.parse("binary:0.4") == TimeEmbedding.binary(0.4)
    assert TimeEmbedding.from_dict(emb.to_dict()) == emb


def _ds(times):
    times = np.asarray(times, dtype=float)
    return Dataset(np.zeros((len(times), 1)), times, ("a",))


def test_split_at_examples():
    a, b = split_at(_ds([0, 0.5, 1]), 0.6)
    assert a.t.tolist() == [0, 0.5] and b.t.tolist() == [1]
    a, b = split_at(_ds([0, 1]), 0.5)
    assert a.t.tolist() == [0] and b.t.tolist() == [1]
    with pytest.raises(DegenerateSplit):
        split_at(_ds([0.5, 0.75, 1.0]), 0.01)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=30), st.floats(0.05, 0.95))
def test_split_partitions(times, cp):
    ds = _ds(sorted(times))
    try:
        a, b = split_at(ds, cp)
    except DegenerateSplit:
        assert (ds.t < cp).all() or (ds.t >= cp).all()
        return
    assert a.n_samples + b.n_samples == ds.n_samples
    assert (a.t < cp).all() and (b.t >= cp).all()


def test_time_histogram_counts():
    h = time_histogram(np.array([0.0, 0.05, 0.5, 1.0]), bins=10)
    assert h.sum() == 4 and h[0] == 2 and h[5] == 1 and h[9] == 1


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), np.array([0.0]), ("a",))
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), np.array([0.5, 0.1]), ("a",))
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.array([0.0, 1.0]), ("a",))
