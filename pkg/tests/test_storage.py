"""Tests for the on-disk artifact formats."""
import json
import os

import numpy as np
import numpy.testing as npt
import pandas as pd
import pytest

from nsverify.core import spectral
from nsverify.exceptions import ArtifactError
from nsverify.models.report import InequalityReport
from nsverify.services import storage


class TestSnapshots:

    def test_round_trip_is_exact(self, box8, tmp_path):
        field = spectral.random_divfree_field(box8, seed=5, time_stamp=0.375)
        loaded = storage.load_snapshot(storage.save_snapshot(field, str(tmp_path / 'u.npz')))
        assert loaded.grid == box8
        assert loaded.representation == field.representation
        assert loaded.divergence_free
        assert loaded.time_stamp == 0.375
        npt.assert_array_equal(loaded.data, field.data)

    def test_missing(self, tmp_path):
        with pytest.raises(ArtifactError, match='missing snapshot'):
            storage.load_snapshot(str(tmp_path / 'nope.npz'))

    def test_forcing_series_needs_two_fields(self, plane16, tmp_path):
        with pytest.raises(ArtifactError, match='two fields'):
            storage.save_forcing_series([spectral.random_divfree_field(plane16, seed=1)], str(tmp_path / 'f.npz'))


class TestTrajectories:

    def test_round_trip(self, forced_base_run, tmp_path):
        directory = storage.save_trajectory(forced_base_run, str(tmp_path / 'base'))
        assert sorted(os.listdir(directory)) == ['diagnostics.csv', 'norms.csv', 'snapshots', 'summary.json']
        loaded = storage.load_trajectory(directory)
        assert loaded.kind == forced_base_run.kind
        assert loaded.grid == forced_base_run.grid
        assert loaded.dt == forced_base_run.dt
        assert len(loaded.snapshots) == len(forced_base_run.snapshots)
        pd.testing.assert_frame_equal(loaded.diagnostics, forced_base_run.diagnostics, check_dtype=False)
        pd.testing.assert_frame_equal(loaded.norms.to_frame(), forced_base_run.norms.to_frame(), check_dtype=False)
        for a, b in zip(loaded.snapshots, forced_base_run.snapshots):
            npt.assert_array_equal(a.data, b.data)
            assert a.time_stamp == b.time_stamp
        npt.assert_array_equal(loaded.mean_values(), forced_base_run.mean_values())

    def test_snapshot_names_follow_step(self, forced_base_run, tmp_path):
        directory = storage.save_trajectory(forced_base_run, str(tmp_path / 'base'))
        names = sorted(os.listdir(os.path.join(directory, storage.SNAPSHOT_DIR)))
        assert names[:3] == ['snap_000000.npz', 'snap_000005.npz', 'snap_000010.npz']

    def test_missing_directory(self, tmp_path):
        with pytest.raises(ArtifactError, match='missing artifact'):
            storage.load_trajectory(str(tmp_path / 'absent'))


class TestReports:

    def test_non_finite_values_written_as_strings(self, tmp_path):
        path = storage.write_json(str(tmp_path / 'x.json'), {'a': float('inf'), 'b': np.float64(2.5),
                                                             'c': np.arange(3)})
        with open(path, encoding='utf-8') as f:
            data = json.load(f)
        assert data == {'a': 'inf', 'b': 2.5, 'c': [0, 1, 2]}

    def test_reports_round_trip(self, tmp_path):
        reports = {
            '3.1': InequalityReport.from_margins('3.1', [0.0, 1.0], [0.5, -1.0], 1e-8),
            '4.12.1': InequalityReport.from_margins('4.12.1', [0.0], [-2.0], 1e-8, kind='hypothesis'),
        }
        loaded = storage.read_reports(storage.write_reports(reports, str(tmp_path / 'inequalities.json')))
        assert loaded['3.1'].status == 'fail'
        assert loaded['3.1'].worst_time == 1.0
        assert loaded['4.12.1'].status == 'unmet'
        npt.assert_array_equal(loaded['3.1'].margins, [0.5, -1.0])

    def test_missing_reports(self, tmp_path):
        with pytest.raises(ArtifactError):
            storage.read_reports(str(tmp_path / 'inequalities.json'))
