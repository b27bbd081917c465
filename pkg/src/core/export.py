"""
Output files: VTK snapshots, probe time series, run manifests and
convergence reports.

Every file starts with a format-version line. Floats are written with
repr precision and JSON keys are sorted, so identical runs give
byte-identical files.
"""
import csv
import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..utils.constants import MANIFEST_HEADER, PROBES_HEADER, REPORT_HEADER, VTK_HEADER
from .assembly import P1Function
from .convergence import ConvergenceReport
from .mesh import Mesh

logger = logging.getLogger(__name__)


def _plain(value):
    """Convert numpy scalars and arrays to JSON-serializable Python values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_vtk_snapshot(path, mesh: Mesh, values: np.ndarray, time: Optional[float] = None) -> Path:
    """Legacy ASCII VTK unstructured grid with the potential as point data."""
    path = Path(path)
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n_vertices,):
        raise ValueError(f"Snapshot needs one value per vertex ({mesh.n_vertices}), got {values.shape}")
    title = "capfem potential" if time is None else f"capfem potential t={time!r}"
    lines = [VTK_HEADER, title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines.extend(f"{x!r} {y!r} 0" for x, y in mesh.vertices.tolist())
    lines.append(f"CELLS {mesh.n_elements} {4 * mesh.n_elements}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.elements.tolist())
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines.extend(["5"] * mesh.n_elements)
    lines.append(f"CELL_DATA {mesh.n_elements}")
    lines.extend(["SCALARS subdomain int 1", "LOOKUP_TABLE default"])
    lines.extend(str(tag) for tag in mesh.tags.tolist())
    lines.append(f"POINT_DATA {mesh.n_vertices}")
    lines.extend(["SCALARS potential double 1", "LOOKUP_TABLE default"])
    lines.extend(repr(v) for v in values.tolist())
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return path


class ProbeRecorder:
    """
    CSV time series of the potential at fixed points.

    The containing element of every probe is located once; each record
    evaluates the P1 field by barycentric interpolation.
    """

    def __init__(self, path, mesh: Mesh, probes: Sequence[Sequence[float]]):
        self.path = Path(path)
        self.mesh = mesh
        self.probes = np.asarray(probes, dtype=float).reshape(-1, 2)
        locator = P1Function(mesh, np.zeros(mesh.n_vertices))
        self._owner, self._bary = locator.locate(self.probes)
        outside = np.flatnonzero(self._owner < 0)
        if outside.size:
            raise ValueError(f"Probe {tuple(self.probes[outside[0]])} lies outside the mesh")
        self.rows: List[Tuple[float, List[float]]] = []

    def sample(self, values: np.ndarray) -> np.ndarray:
        nodal = np.asarray(values, dtype=float)[self.mesh.elements[self._owner]]
        return np.sum(nodal * self._bary, axis=1)

    def record(self, t: float, values: np.ndarray):
        self.rows.append((float(t), self.sample(values).tolist()))

    def write(self) -> Path:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", encoding="utf-8", newline="") as f:
            f.write(PROBES_HEADER + "\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["t"] + [f"probe{k + 1}" for k in range(self.probes.shape[0])])
            for t, samples in self.rows:
                writer.writerow([repr(t)] + [repr(v) for v in samples])
        logger.info(f"Wrote {len(self.rows)} probe rows to {self.path}")
        return self.path


def write_manifest(path, manifest: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(MANIFEST_HEADER + "\n")
        json.dump(_plain(manifest), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header != MANIFEST_HEADER:
            raise ValueError(f"{path} is not a capfem manifest (header {header!r})")
        return json.load(f)


def _format(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4e}"
    return str(value)


def format_report(report: ConvergenceReport) -> str:
    """Human-readable convergence table with slopes and verdict."""
    quantities = sorted(set().union(*(level.errors for level in report.levels))) if report.levels else []
    lines = [
        REPORT_HEADER,
        f"case {report.case} ({report.label}), mode {report.mode.value}",
    ]
    if report.coupling:
        lines.append("coupling: " + ", ".join(f"{k}={v}" for k, v in sorted(report.coupling.items())))
    header = ["n", "N", "h", "tau"] + quantities + ["status"]
    rows = [header]
    for level in report.levels:
        rows.append(
            [str(level.n), _format(level.steps), _format(level.h), _format(level.tau)]
            + [_format(level.errors.get(q)) for q in quantities]
            + ["ok" if level.ok else f"failed: {level.message}"]
        )
    widths = [max(len(row[k]) for row in rows) for k in range(len(header))]
    for row in rows:
        lines.append("  ".join(cell.rjust(width) for cell, width in zip(row, widths)).rstrip())
    lines.append("")
    for quantity, slope in sorted(report.slopes.items()):
        band = report.bands.get(quantity)
        verdict = ""
        if quantity in report.passed:
            verdict = " PASS" if report.passed[quantity] else " FAIL"
        band_text = f" band [{band[0]}, {band[1]}]" if band else ""
        slope_text = "n/a" if slope is None else f"{slope:.3f}"
        lines.append(f"slope {quantity}: {slope_text}{band_text}{verdict}")
    if report.flags:
        lines.append("flags: " + ", ".join(report.flags))
    for note in report.notes:
        lines.append(f"note: {note}")
    lines.append("certified: " + ("yes" if report.certified else "no"))
    return "\n".join(lines) + "\n"


def write_report(report: ConvergenceReport, directory) -> Tuple[Path, Path]:
    """Write report.txt and report.json into directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    text_path = directory / "report.txt"
    json_path = directory / "report.json"
    with open(text_path, "w", encoding="utf-8") as f:
        f.write(format_report(report))
    with open(json_path, "w", encoding="utf-8") as f:
        f.write(REPORT_HEADER + "\n")
        json.dump(_plain(report.to_dict()), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Wrote convergence report to {text_path} and {json_path}")
    return text_path, json_path
