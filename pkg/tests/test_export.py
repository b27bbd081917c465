"""Tests for the output writers."""
import json

import numpy as np
import pytest

from src.core.convergence import LevelResult, assess
from src.core.export import (
    ProbeRecorder,
    format_report,
    read_manifest,
    write_manifest,
    write_report,
    write_vtk_snapshot,
)
from src.utils.constants import MANIFEST_HEADER, PROBES_HEADER, REPORT_HEADER, VTK_HEADER


@pytest.fixture
def second_order_report():
    levels = [LevelResult(n=int(2 / h), h=h, scale=h, steps=int(1 / h), tau=h,
                          errors={"L2H": h ** 2}) for h in (0.25, 0.125, 0.0625)]
    return assess("A", "l2", levels, coupling={"tau": "c*h^2", "c": 0.5})


class TestVtkSnapshot:
    """Test suite for write_vtk_snapshot."""

    def test_layout(self, unit_square, tmp_path):
        """Test header, grid sections and point data."""
        path = write_vtk_snapshot(tmp_path / "s.vtk", unit_square, np.array([0.0, 1.0, 3.0, 2.0]), time=0.5)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == VTK_HEADER
        assert lines[1] == "capfem potential t=0.5"
        assert "POINTS 4 double" in lines
        assert "CELLS 2 8" in lines
        assert "3 0 1 2" in lines
        assert "POINT_DATA 4" in lines
        assert lines[-4:] == ["0.0", "1.0", "3.0", "2.0"]

    def test_creates_parent(self, unit_square, tmp_path):
        """Test that missing directories are created."""
        path = write_vtk_snapshot(tmp_path / "a" / "b.vtk", unit_square, np.zeros(4))
        assert path.exists()

    def test_rejects_wrong_length(self, unit_square, tmp_path):
        """Test that the field must have one value per vertex."""
        with pytest.raises(ValueError):
            write_vtk_snapshot(tmp_path / "s.vtk", unit_square, np.zeros(3))


class TestProbeRecorder:
    """Test suite for ProbeRecorder."""

    def test_linear_field_is_exact(self, unit_square, tmp_path):
        """Test that probes reproduce a linear field."""
        recorder = ProbeRecorder(tmp_path / "p.csv", unit_square, [[0.25, 0.5], [1.0, 1.0]])
        values = np.array([0.0, 1.0, 3.0, 2.0])  # x + 2y
        np.testing.assert_allclose(recorder.sample(values), [1.25, 3.0])

    def test_csv(self, unit_square, tmp_path):
        """Test the header lines and one row per record."""
        recorder = ProbeRecorder(tmp_path / "p.csv", unit_square, [[0.5, 0.5]])
        recorder.record(0.0, np.zeros(4))
        recorder.record(0.5, np.ones(4))
        lines = recorder.write().read_text(encoding="utf-8").splitlines()
        assert lines == [PROBES_HEADER, "t,probe1", "0.0,0.0", "0.5,1.0"]

    def test_sample_point_outside_mesh(self, unit_square, tmp_path):
        """Test that every sample point must lie in the mesh."""
        with pytest.raises(ValueError):
            ProbeRecorder(tmp_path / "p.csv", unit_square, [[0.5, 0.5], [2.0, 2.0]])


class TestManifest:
    """Test suite for manifests."""

    def test_round_trip(self, tmp_path):
        """Test that numpy values are written as plain JSON."""
        manifest = {"b": np.float64(0.5), "a": np.arange(3), "c": {"n": np.int64(4)}}
        path = write_manifest(tmp_path / "manifest.txt", manifest)
        assert read_manifest(path) == {"a": [0, 1, 2], "b": 0.5, "c": {"n": 4}}

    def test_header_and_sorted_keys(self, tmp_path):
        """Test the version line and key order."""
        text = write_manifest(tmp_path / "m.txt", {"z": 1, "a": 2}).read_text(encoding="utf-8")
        assert text.startswith(MANIFEST_HEADER + "\n")
        assert text.index('"a"') < text.index('"z"')

    def test_identical_runs_identical_bytes(self, tmp_path):
        """Test byte-identical output for identical manifests."""
        first = write_manifest(tmp_path / "1.txt", {"x": 0.1 + 0.2}).read_bytes()
        second = write_manifest(tmp_path / "2.txt", {"x": 0.1 + 0.2}).read_bytes()
        assert first == second

    def test_rejects_foreign_file(self, tmp_path):
        """Test that a file without the header is refused."""
        path = tmp_path / "m.txt"
        path.write_text("{}\n", encoding="utf-8")
        with pytest.raises(ValueError):
            read_manifest(path)


class TestReport:
    """Test suite for convergence reports."""

    def test_format(self, second_order_report):
        """Test the table, slope line and verdict."""
        text = format_report(second_order_report)
        lines = text.splitlines()
        assert lines[0] == REPORT_HEADER
        assert lines[1] == "case A (primary), mode l2"
        assert "slope L2H: 2.000 band [1.8, 2.2] PASS" in lines
        assert lines[-1] == "certified: yes"

    def test_failed_level_row(self, second_order_report):
        """Test that failed levels show their message."""
        second_order_report.levels[1].ok = False
        second_order_report.levels[1].message = "diverged"
        assert "failed: diverged" in format_report(second_order_report)

    def test_write_report(self, second_order_report, tmp_path):
        """Test report.txt and report.json."""
        text_path, json_path = write_report(second_order_report, tmp_path / "out")
        assert text_path.read_text(encoding="utf-8").startswith(REPORT_HEADER)
        header, body = json_path.read_text(encoding="utf-8").split("\n", 1)
        assert header == REPORT_HEADER
        data = json.loads(body)
        assert data["certified"] is True
        assert data["slopes"]["L2H"] == pytest.approx(2.0)
