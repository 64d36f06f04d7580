import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpforest.data import (
    DataFormatError,
    Dataset,
    gen_gaussian,
    load_points,
    save_points,
    standardize,
)

from oracles import py_distance


class TestDataset:
    def test_coerces_to_float64_and_freezes(self):
        data = Dataset(np.array([[1, 2], [3, 4]], dtype=np.int32))
        assert data.points.dtype == np.float64
        with pytest.raises(ValueError):
            data.points[0, 0] = 9.0

    def test_shape_properties(self):
        data = Dataset(np.zeros((7, 3)))
        assert (data.n, data.dim, len(data)) == (7, 3, 7)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros(5))
        with pytest.raises(ValueError):
            Dataset(np.zeros((0, 3)))
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 0)))

    def test_rejects_non_finite(self):
        bad = np.ones((3, 2))
        bad[1, 1] = np.nan
        with pytest.raises(ValueError, match="row 1, column 1"):
            Dataset(bad)

    def test_ids_must_match_rows(self):
        with pytest.raises(ValueError):
            Dataset(np.ones((3, 2)), ids=("a", "b"))

    def test_distance_matches_scalar_reference(self):
        rng = np.random.default_rng(5)
        data = Dataset(rng.normal(size=(20, 6)))
        for i, j in [(0, 1), (3, 17), (19, 19)]:
            assert data.distance(i, j) == pytest.approx(
                py_distance(data.points[i], data.points[j]), rel=1e-12
            )

    def test_distance_bounds_checked(self):
        data = Dataset(np.ones((4, 2)))
        with pytest.raises(IndexError):
            data.distance(0, 4)
        with pytest.raises(IndexError):
            data.distance(-1, 0)

    def test_checksum_tracks_content(self):
        a = Dataset(np.arange(12, dtype=float).reshape(4, 3))
        b = Dataset(np.arange(12, dtype=float).reshape(4, 3))
        assert a.checksum() == b.checksum()
        flipped = np.arange(12, dtype=float).reshape(4, 3)
        flipped[2, 1] += 1e-9
        assert Dataset(flipped).checksum() != a.checksum()
        # same bytes, different shape
        assert Dataset(np.arange(12, dtype=float).reshape(3, 4)).checksum() != a.checksum()


class TestCsvRoundTrip:
    @given(
        n=st.integers(1, 12),
        dim=st.integers(1, 5),
        seed=st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=40, deadline=None)
    def test_save_load_is_exact(self, tmp_path_factory, n, dim, seed):
        path = tmp_path_factory.mktemp("csv") / "pts.csv"
        pts = np.random.default_rng(seed).normal(size=(n, dim)) * 10.0 ** (seed % 7 - 3)
        save_points(Dataset(pts), path)
        back = load_points(path)
        assert np.array_equal(back.points, pts)

    def test_header_row_skipped(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("x,y\n1.5,2.5\n3.0,4.0\n")
        data = load_points(path, has_header=True)
        assert np.array_equal(data.points, [[1.5, 2.5], [3.0, 4.0]])

    def test_save_with_header(self, tmp_path):
        path = tmp_path / "h.csv"
        save_points(Dataset(np.ones((2, 2))), path, header=["a", "b"])
        assert path.read_text().splitlines()[0] == "a,b"
        assert load_points(path, has_header=True).n == 2

    def test_blank_lines_and_trailing_newline_ignored(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("1,2\n\n3,4\n\n")
        assert load_points(path).n == 2


class TestCsvErrors:
    def test_ragged_row_position(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("1,2\n3,4,5\n")
        with pytest.raises(DataFormatError, match="row 2") as err:
            load_points(path)
        assert err.value.row == 2

    def test_ragged_row_counts_header(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("x,y\n1,2\n3\n")
        with pytest.raises(DataFormatError, match="row 3"):
            load_points(path, has_header=True)

    def test_non_numeric_cell_position(self, tmp_path):
        path = tmp_path / "n.csv"
        path.write_text("1,2\n3,oops\n")
        with pytest.raises(DataFormatError, match="row 2, column 2") as err:
            load_points(path)
        assert (err.value.row, err.value.column) == (2, 2)

    def test_non_finite_cell_rejected(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("1,2\nnan,4\n")
        with pytest.raises(DataFormatError, match="row 2, column 1"):
            load_points(path)
        path.write_text("1,inf\n")
        with pytest.raises(DataFormatError):
            load_points(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("")
        with pytest.raises(DataFormatError, match="no data rows"):
            load_points(path)

    def test_missing_file_is_data_error(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_points(tmp_path / "absent.csv")

    def test_unsupported_format(self, tmp_path):
        with pytest.raises(ValueError, match="only 'csv'"):
            load_points(tmp_path / "x.bin", format="parquet")


class TestGenGaussian:
    def test_deterministic_by_seed(self):
        a = gen_gaussian(50, 4, [1, 1, 1, 1], seed=9)
        b = gen_gaussian(50, 4, [1, 1, 1, 1], seed=9)
        assert np.array_equal(a.points, b.points)
        c = gen_gaussian(50, 4, [1, 1, 1, 1], seed=10)
        assert not np.array_equal(a.points, c.points)

    def test_scales_shape_columns(self):
        data = gen_gaussian(4000, 3, [10.0, 1.0, 0.1], seed=0)
        stds = data.points.std(axis=0)
        assert 8.0 < stds[0] < 12.0
        assert 0.8 < stds[1] < 1.2
        assert 0.08 < stds[2] < 0.12

    def test_validates_arguments(self):
        with pytest.raises(ValueError):
            gen_gaussian(0, 3, [1, 1, 1])
        with pytest.raises(ValueError):
            gen_gaussian(5, 3, [1, 1])
        with pytest.raises(ValueError):
            gen_gaussian(5, 2, [1, -1])


class TestStandardize:
    def test_zero_mean_unit_std(self):
        data = gen_gaussian(500, 3, [5, 2, 9], seed=3)
        out = standardize(data)
        assert np.allclose(out.points.mean(axis=0), 0, atol=1e-12)
        assert np.allclose(out.points.std(axis=0), 1, atol=1e-12)

    def test_constant_column_only_centered(self):
        pts = np.column_stack([np.full(10, 7.0), np.arange(10, dtype=float)])
        out = standardize(Dataset(pts))
        assert np.array_equal(out.points[:, 0], np.zeros(10))
        assert np.isfinite(out.points).all()
