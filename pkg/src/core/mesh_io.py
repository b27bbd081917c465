"""
Plain-text mesh format.

    cfm-mesh 1
    V <count>
    <id> <x> <y> <boundary_flag>
    E <count>
    <id> <v0> <v1> <v2> <tag>
    G <count>
    <v0> <v1>

Coordinates are written with 17 significant digits so that a write/read
round trip reproduces them bit for bit.
"""
import logging
from pathlib import Path
from typing import Iterator, List, Tuple

import numpy as np

from ..utils.constants import MESH_FORMAT_HEADER
from .errors import GeometryError, MeshFormatError
from .mesh import Mesh, infer_geometry

logger = logging.getLogger(__name__)


def write_mesh(mesh: Mesh, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [MESH_FORMAT_HEADER, f"V {mesh.n_vertices}"]
    for k, ((x, y), flag) in enumerate(zip(mesh.vertices, mesh.boundary)):
        lines.append(f"{k} {x:.17g} {y:.17g} {int(flag)}")
    lines.append(f"E {mesh.n_elements}")
    for k, ((a, b, c), tag) in enumerate(zip(mesh.elements, mesh.tags)):
        lines.append(f"{k} {a} {b} {c} {tag}")
    lines.append(f"G {mesh.interface_edges.shape[0]}")
    for a, b in mesh.interface_edges:
        lines.append(f"{a} {b}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    logger.info(f"Wrote mesh with {mesh.n_elements} elements to {path}")
    return path


def _records(text: str) -> Iterator[Tuple[int, List[str]]]:
    for number, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if fields:
            yield number, fields


class _Reader:
    def __init__(self, text: str):
        self._records = list(_records(text))
        self._pos = 0

    @property
    def line(self) -> int:
        if self._pos < len(self._records):
            return self._records[self._pos][0]
        return self._records[-1][0] + 1 if self._records else 1

    def next(self, what: str) -> Tuple[int, List[str]]:
        if self._pos >= len(self._records):
            raise MeshFormatError(f"unexpected end of file while reading {what}", self.line)
        record = self._records[self._pos]
        self._pos += 1
        return record

    def section(self, tag: str) -> int:
        number, fields = self.next(f"'{tag}' section header")
        if len(fields) != 2 or fields[0] != tag:
            raise MeshFormatError(f"expected '{tag} <count>', got {' '.join(fields)!r}", number)
        try:
            count = int(fields[1])
        except ValueError:
            raise MeshFormatError(f"invalid count {fields[1]!r}", number)
        if count < 0:
            raise MeshFormatError(f"negative count {count}", number)
        return count

    def remaining(self) -> int:
        return len(self._records) - self._pos


def _parse_row(number: int, fields: List[str], width: int, kinds, what: str):
    if len(fields) != width:
        raise MeshFormatError(f"{what} line needs {width} fields, got {len(fields)}", number)
    try:
        return [kind(value) for kind, value in zip(kinds, fields)]
    except ValueError as e:
        raise MeshFormatError(f"cannot parse {what} line: {e}", number)


def parse_mesh(text: str) -> Mesh:
    reader = _Reader(text)
    number, fields = reader.next("header")
    if " ".join(fields) != MESH_FORMAT_HEADER:
        raise MeshFormatError(f"expected header {MESH_FORMAT_HEADER!r}", number)

    nv = reader.section("V")
    vertices = np.empty((nv, 2))
    boundary = np.zeros(nv, dtype=bool)
    for k in range(nv):
        number, fields = reader.next("vertex")
        vid, x, y, flag = _parse_row(number, fields, 4, (int, float, float, int), "vertex")
        if vid != k:
            raise MeshFormatError(f"vertex id {vid} out of sequence (expected {k})", number)
        if flag not in (0, 1):
            raise MeshFormatError(f"boundary flag must be 0 or 1, got {flag}", number)
        if not (np.isfinite(x) and np.isfinite(y)):
            raise MeshFormatError("non-finite vertex coordinate", number)
        vertices[k] = (x, y)
        boundary[k] = bool(flag)

    ne = reader.section("E")
    elements = np.empty((ne, 3), dtype=np.int64)
    tags = np.empty(ne, dtype=np.int64)
    for k in range(ne):
        number, fields = reader.next("element")
        eid, a, b, c, tag = _parse_row(number, fields, 5, (int,) * 5, "element")
        if eid != k:
            raise MeshFormatError(f"element id {eid} out of sequence (expected {k})", number)
        for v in (a, b, c):
            if not 0 <= v < nv:
                raise MeshFormatError(f"element {eid} references missing vertex {v}", number)
        if tag not in (1, 2):
            raise MeshFormatError(f"element tag must be 1 or 2, got {tag}", number)
        elements[k] = (a, b, c)
        tags[k] = tag

    ng = reader.section("G")
    interface = np.empty((ng, 2), dtype=np.int64)
    for k in range(ng):
        number, fields = reader.next("interface edge")
        a, b = _parse_row(number, fields, 2, (int, int), "interface edge")
        for v in (a, b):
            if not 0 <= v < nv:
                raise MeshFormatError(f"interface edge references missing vertex {v}", number)
        interface[k] = (a, b)

    if reader.remaining():
        raise MeshFormatError("inconsistent counts: trailing records after the G section", reader.line)

    try:
        geometry = infer_geometry(vertices, interface)
    except GeometryError as e:
        logger.warning(f"Could not infer geometry from mesh file: {e}")
        geometry = None
    return Mesh(vertices, elements, tags, boundary, interface, geometry=geometry)


def read_mesh(path) -> Mesh:
    """
    Read a mesh file.

    Raises:
        MeshFormatError: malformed content or invalid UTF-8, with the offending line number
        OSError: the file cannot be read
    """
    path = Path(path)
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        line = raw[:e.start].count(b"\n") + 1
        raise MeshFormatError(f"{path} is not valid UTF-8 (byte offset {e.start}: {e.reason})", line) from e
    if not text.strip():
        raise MeshFormatError(f"empty mesh file {path}", 1)
    mesh = parse_mesh(text)
    logger.info(f"Read mesh with {mesh.n_elements} elements from {path}")
    return mesh
