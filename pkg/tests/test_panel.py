import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from farmpanel.panel import (
    PanelData,
    PanelError,
    build_lag_matrix,
    load_panel_csv,
    save_panel_csv,
)


def make_panel(values):
    values = np.asarray(values, dtype=float)
    n, t = values.shape
    return PanelData(values, [f"s{i}" for i in range(n)], [str(j) for j in range(t)])


class TestLoadCsv:
    def test_zero_matrix_rows_are_series(self, tmp_path):
        path = tmp_path / "z.csv"
        path.write_text("id,0,1,2,3\ns0,0,0,0,0\ns1,0,0,0,0\ns2,0,0,0,0\n")
        panel = load_panel_csv(path, "rows-are-series")
        assert panel.shape == (3, 4)
        assert np.all(panel.values == 0.0)
        assert panel.series_ids == ("s0", "s1", "s2")

    def test_orientation_symmetry(self, tmp_path):
        rng = np.random.default_rng(5)
        panel = make_panel(rng.standard_normal((3, 4)))
        p_series = tmp_path / "series.csv"
        p_time = tmp_path / "time.csv"
        save_panel_csv(panel, p_series, "rows-are-series")
        save_panel_csv(panel, p_time, "rows-are-time")
        a = load_panel_csv(p_series, "rows-are-series")
        b = load_panel_csv(p_time, "rows-are-time")
        assert a.series_ids == b.series_ids
        assert a.time_ids == b.time_ids
        np.testing.assert_array_equal(a.values, b.values)

    def test_nan_cell_reports_coordinate(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,0,1\ns0,1.0,2.0\ns1,NaN,4.0\n")
        with pytest.raises(PanelError, match=r"row 3, column 2"):
            load_panel_csv(path, "rows-are-series")

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,0,1\ns0,1.0,x\n")
        with pytest.raises(PanelError, match="non-numeric"):
            load_panel_csv(path, "rows-are-series")

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("id,0,1\ns0,1,2\ns1,3\n")
        with pytest.raises(PanelError, match="row 3"):
            load_panel_csv(path, "rows-are-series")

    def test_duplicate_series_id(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text("id,0,1\na,1,2\na,3,4\n")
        with pytest.raises(PanelError, match="duplicate series id"):
            load_panel_csv(path, "rows-are-series")

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_panel_csv(tmp_path / "missing.csv", "rows-are-series")

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(17)
        panel = make_panel(rng.standard_normal((4, 6)) * 10.0 ** rng.integers(-8, 8, (4, 6)))
        path = tmp_path / "rt.csv"
        save_panel_csv(panel, path, "rows-are-time")
        back = load_panel_csv(path, "rows-are-time")
        np.testing.assert_array_equal(back.values, panel.values)


class TestPanelValidation:
    def test_too_short(self):
        with pytest.raises(PanelError):
            make_panel(np.zeros((2, 1)))

    def test_non_finite(self):
        with pytest.raises(PanelError, match="non-finite"):
            make_panel([[1.0, np.inf], [0.0, 1.0]])

    def test_numeric_time_ids_must_increase(self):
        with pytest.raises(PanelError, match="strictly increasing"):
            PanelData(np.zeros((1, 3)), ["a"], ["3", "2", "5"])

    def test_values_immutable(self):
        panel = make_panel(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            panel.values[0, 0] = 1.0


class TestLagMatrix:
    def test_single_series_one_lag(self):
        panel = make_panel([[1.0, 2.0, 3.0, 4.0]])
        design = build_lag_matrix(panel, 1)
        np.testing.assert_array_equal(design.regressors.ravel(), [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(panel.values[0, design.targets_offset:], [2.0, 3.0, 4.0])

    def test_two_series_two_lags_against_index_arithmetic(self):
        rng = np.random.default_rng(2)
        panel = make_panel(rng.standard_normal((2, 5)))
        design = build_lag_matrix(panel, 2)
        assert design.regressors.shape == (3, 4)
        for row in range(3):
            t = row + 2
            for col, (i, lag) in enumerate(design.column_map):
                assert design.regressors[row, col] == panel.values[i, t - lag]

    def test_p_equals_t_errors(self):
        panel = make_panel(np.zeros((1, 4)))
        with pytest.raises(PanelError):
            build_lag_matrix(panel, 4)

    @settings(max_examples=25, deadline=None)
    @given(
        n=st.integers(1, 4),
        t=st.integers(3, 9),
        data=st.data(),
    )
    def test_every_mapped_entry_matches_panel(self, n, t, data):
        p = data.draw(st.integers(1, t - 1))
        rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
        panel = make_panel(rng.standard_normal((n, t)))
        design = build_lag_matrix(panel, p)
        assert design.regressors.shape == (t - p, n * p)
        assert len(design.column_map) == n * p
        for row in range(t - p):
            for col, (i, lag) in enumerate(design.column_map):
                assert design.regressors[row, col] == panel.values[i, row + p - lag]
