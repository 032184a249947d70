import importlib.resources

import numpy as np
import pytest

from gridmpv.profiles import ProfileError, ProfileSet, load_profiles


def bundled(name: str):
    return str(importlib.resources.files("gridmpv.data") / name)


def write_csv(tmp_path, text, name="p.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestBundledDay:
    def test_shape_and_columns(self):
        ps = load_profiles(bundled("profiles_day.csv"))
        assert ps.n_rows == 96
        assert ps.dt_minutes == 15
        for col in ("load_a", "load_b", "load_c", "pv_a", "pv_b", "mpv_a", "mpv_b"):
            assert ps.has_column(col)
            assert len(ps.column(col)) == 96

    def test_normalized_generation_columns(self):
        ps = load_profiles(bundled("profiles_day.csv"))
        for col in ("pv_a", "pv_b", "mpv_a", "mpv_b"):
            vals = ps.column(col)
            assert vals.min() >= 0.0
            assert vals.max() <= 1.0
            assert vals.max() > 0.5  # real daylight in the series

    def test_minutes_of_day(self):
        ps = load_profiles(bundled("profiles_day.csv"))
        assert ps.minutes_of_day[0] == 0
        assert ps.minutes_of_day[1] == 15
        assert ps.minutes_of_day[-1] == 23 * 60 + 45

    def test_ten_day_series(self):
        ps = load_profiles(bundled("profiles_10d.csv"))
        assert ps.n_rows == 960
        assert ps.dt_minutes == 15
        assert ps.minutes_of_day[96] == 0  # day boundary wraps


class TestErrors:
    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            load_profiles("/nonexistent/profiles.csv")

    def test_missing_column_lookup(self):
        ps = load_profiles(bundled("profiles_day.csv"))
        assert not ps.has_column("load_z")
        with pytest.raises(ProfileError, match="load_z"):
            ps.column("load_z")

    def test_non_numeric_cell_reports_location(self, tmp_path):
        path = write_csv(
            tmp_path,
            "timestamp,load\n2021-06-07T00:00:00,1.0\n2021-06-07T00:15:00,oops\n",
        )
        with pytest.raises(ProfileError, match=r":3:.*oops"):
            load_profiles(path)

    def test_non_uniform_spacing(self, tmp_path):
        path = write_csv(
            tmp_path,
            "timestamp,load\n"
            "2021-06-07T00:00:00,1.0\n"
            "2021-06-07T00:15:00,1.0\n"
            "2021-06-07T00:40:00,1.0\n",
        )
        with pytest.raises(ProfileError, match="non-uniform"):
            load_profiles(path)

    def test_bad_timestamp(self, tmp_path):
        path = write_csv(tmp_path, "timestamp,load\nyesterday,1.0\n")
        with pytest.raises(ProfileError, match="ISO-8601"):
            load_profiles(path)

    def test_decreasing_timestamps(self, tmp_path):
        path = write_csv(
            tmp_path,
            "timestamp,load\n2021-06-07T01:00:00,1.0\n2021-06-07T00:00:00,1.0\n",
        )
        with pytest.raises(ProfileError, match="increase"):
            load_profiles(path)

    def test_ragged_row(self, tmp_path):
        path = write_csv(
            tmp_path,
            "timestamp,load,pv\n2021-06-07T00:00:00,1.0,0.5\n2021-06-07T00:15:00,1.0\n",
        )
        with pytest.raises(ProfileError, match="expected 3 fields"):
            load_profiles(path)

    def test_header_only(self, tmp_path):
        path = write_csv(tmp_path, "timestamp,load\n")
        with pytest.raises(ProfileError, match="no data rows"):
            load_profiles(path)

    def test_timestamp_only_header(self, tmp_path):
        path = write_csv(tmp_path, "timestamp\n2021-06-07T00:00:00\n")
        with pytest.raises(ProfileError, match="at least one series"):
            load_profiles(path)


class TestSingleRow:
    def test_defaults_to_quarter_hour(self, tmp_path):
        path = write_csv(tmp_path, "timestamp,load\n2021-06-07T08:00:00,2.5\n")
        ps = load_profiles(path)
        assert ps.n_rows == 1
        assert ps.dt_minutes == 15
        assert ps.minutes_of_day == [8 * 60]
        assert ps.column("load")[0] == 2.5
