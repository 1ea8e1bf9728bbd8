"""Mesh and report file formats.

Native mesh format (UTF-8 text, ``#`` starts a comment line)::

    MESHFIT v1
    NODES <n>
    x y z                      (n lines)
    HEX8 <m>
    i0 ... i7                  (m lines, zero-based)
    FACETS <k>
    i0 i1 i2 i3                (k lines)
    NODESET <name> <count>
    indices, whitespace separated, any number per line
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import Mesh, MeshError, boundary_facets_from_elements

NATIVE_HEADER = "MESHFIT v1"
VTK_HEXAHEDRON = 12


class MeshFormatError(MeshError):
    """Malformed mesh file."""


def _fmt_float(v):
    return repr(float(v))


def save_mesh(mesh, path, fmt="native", comments=(), cell_data=None):
    path = Path(path)
    if fmt == "native":
        _save_native(mesh, path, comments)
    elif fmt in ("vtk", "vtk_legacy"):
        save_vtk(mesh, path, cell_data=cell_data)
    else:
        raise ValueError(f"unknown mesh format {fmt!r}")


def load_mesh(path, fmt=None):
    """Load a mesh in native or VTK legacy format (guessed from suffix)."""
    path = Path(path)
    if fmt is None:
        fmt = "vtk_legacy" if path.suffix.lower() == ".vtk" else "native"
    text = path.read_text(encoding="utf-8")
    if fmt == "native":
        return parse_native(text, source=str(path))
    if fmt in ("vtk", "vtk_legacy"):
        return parse_vtk(text, source=str(path))
    raise ValueError(f"unknown mesh format {fmt!r}")


def _save_native(mesh, path, comments):
    lines = [NATIVE_HEADER]
    lines += [f"# {c}" for c in comments]
    lines.append(f"NODES {mesh.n_nodes}")
    lines += [" ".join(_fmt_float(c) for c in x) for x in mesh.nodes]
    lines.append(f"HEX8 {mesh.n_elements}")
    lines += [" ".join(str(i) for i in conn) for conn in mesh.elements]
    lines.append(f"FACETS {len(mesh.boundary_facets)}")
    lines += [" ".join(str(i) for i in conn) for conn in mesh.boundary_facets]
    for name, idx in mesh.node_sets.items():
        lines.append(f"NODESET {name} {len(idx)}")
        for start in range(0, len(idx), 16):
            lines.append(" ".join(str(i) for i in idx[start : start + 16]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_header_comments(text):
    out = []
    for line in text.splitlines():
        s = line.strip()
        if s.startswith("#"):
            out.append(s[1:].strip())
    return out


def header_comments(path):
    """Comment lines of a native mesh file (e.g. generator seed)."""
    return _read_header_comments(Path(path).read_text(encoding="utf-8"))


def parse_native(text, source="<string>"):
    lines = [(no, ln.split()) for no, ln in enumerate(text.splitlines(), 1)]
    lines = [(no, tok) for no, tok in lines if tok and not tok[0].startswith("#")]
    if not lines or " ".join(lines[0][1]) != NATIVE_HEADER:
        raise MeshFormatError(f"{source}: missing '{NATIVE_HEADER}' header")
    pos = 1

    def block(keyword, width, dtype, nargs=1):
        nonlocal pos
        if pos >= len(lines) or lines[pos][1][0] != keyword:
            found = lines[pos][1][0] if pos < len(lines) else "end of file"
            raise MeshFormatError(f"{source}: expected {keyword} block, found {found}")
        no, head = lines[pos]
        try:
            count = int(head[nargs])
        except (IndexError, ValueError):
            raise MeshFormatError(f"{source}:{no}: bad {keyword} header") from None
        rows = lines[pos + 1 : pos + 1 + count]
        if len(rows) < count:
            raise MeshFormatError(f"{source}:{no}: {keyword} declares {count} rows, file ends early")
        for rno, tok in rows:
            if len(tok) != width:
                raise MeshFormatError(f"{source}:{rno}: {keyword} row needs {width} values, got {len(tok)}")
        try:
            data = np.array([tok for _, tok in rows], dtype=dtype).reshape(count, width)
        except ValueError as exc:
            raise MeshFormatError(f"{source}: unparsable {keyword} entry ({exc})") from None
        pos += 1 + count
        return data

    nodes = block("NODES", 3, np.float64)
    elements = block("HEX8", 8, np.int64)
    facets = block("FACETS", 4, np.int64)
    sets = {}
    while pos < len(lines):
        no, head = lines[pos]
        if head[0] != "NODESET" or len(head) != 3:
            raise MeshFormatError(f"{source}:{no}: expected 'NODESET <name> <count>'")
        name, count = head[1], int(head[2])
        pos += 1
        idx = []
        while len(idx) < count:
            if pos >= len(lines):
                raise MeshFormatError(f"{source}: node set {name!r} truncated")
            idx.extend(lines[pos][1])
            pos += 1
        if len(idx) != count:
            raise MeshFormatError(f"{source}: node set {name!r} has {len(idx)} entries, declared {count}")
        sets[name] = np.array(idx, dtype=np.int64)
    return Mesh(nodes, elements, facets, sets)


def save_vtk(mesh, path, cell_data=None, point_data=None, title="hexrefit mesh"):
    """Write a VTK legacy ASCII unstructured grid of hex cells."""
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_nodes} double")
    lines += [" ".join(_fmt_float(c) for c in x) for x in mesh.nodes]
    m = mesh.n_elements
    lines.append(f"CELLS {m} {9 * m}")
    lines += ["8 " + " ".join(str(i) for i in conn) for conn in mesh.elements]
    lines.append(f"CELL_TYPES {m}")
    lines += [str(VTK_HEXAHEDRON)] * m
    if cell_data:
        lines.append(f"CELL_DATA {m}")
        for name, values in cell_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt_float(v) for v in np.asarray(values).ravel()]
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt_float(v) for v in np.asarray(values).ravel()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_vtk(text, source="<string>"):
    """Read the geometry of a legacy ASCII unstructured grid of hex cells.

    Boundary facets are reconstructed from the connectivity; node sets are
    not part of the format.
    """
    tokens = text.split()
    try:
        i = tokens.index("POINTS")
        n = int(tokens[i + 1])
        nodes = np.array(tokens[i + 3 : i + 3 + 3 * n], dtype=np.float64).reshape(n, 3)
        j = tokens.index("CELLS", i)
        m, size = int(tokens[j + 1]), int(tokens[j + 2])
        raw = np.array(tokens[j + 3 : j + 3 + size], dtype=np.int64)
        k = tokens.index("CELL_TYPES", j)
        types = np.array(tokens[k + 2 : k + 2 + m], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise MeshFormatError(f"{source}: not a readable VTK unstructured grid ({exc})") from None
    if len(types) != m or np.any(types != VTK_HEXAHEDRON):
        raise MeshFormatError(f"{source}: only hexahedron cells (type {VTK_HEXAHEDRON}) are supported")
    if size != 9 * m or np.any(raw[::9] != 8):
        raise MeshFormatError(f"{source}: malformed CELLS block")
    elements = raw.reshape(m, 9)[:, 1:]
    if elements.size and (elements.max() >= n or elements.min() < 0):
        raise MeshError(f"{source}: cell references node outside 0..{n - 1}")
    return Mesh(nodes, elements, boundary_facets_from_elements(elements))


def save_quality_csv(report, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["element", "skewness", "mean_edge_1", "mean_edge_2", "mean_edge_3", "degenerate", "inverted", "selected"])
        for e in range(len(report.skewness)):
            w.writerow(
                [e, _fmt_float(report.skewness[e])]
                + [_fmt_float(v) for v in report.mean_edge[e]]
                + [int(report.degenerate[e]), int(report.inverted[e]), int(report.selected[e])]
            )


def load_quality_csv(path):
    """Read a per-element quality CSV back as a dict of arrays."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {
        "skewness": np.array([float(r["skewness"]) for r in rows]),
        "mean_edge": np.array([[float(r[f"mean_edge_{i}"]) for i in (1, 2, 3)] for r in rows]).reshape(-1, 3),
        "degenerate": np.array([int(r["degenerate"]) for r in rows], dtype=bool),
    }


TENSOR_COLUMNS = [f"T{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)]


def save_field_csv(path, points, values):
    """Scalar field -> ``x,y,z,value``; tensor field (n,3,3) -> ``x,y,z,T11..T33``."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    values = np.asarray(values, dtype=np.float64)
    tensor = values.ndim == 3
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z"] + (TENSOR_COLUMNS if tensor else ["value"]))
        flat = values.reshape(len(points), -1)
        for p, v in zip(points, flat):
            w.writerow([_fmt_float(c) for c in p] + [_fmt_float(c) for c in v])


def load_field_csv(path):
    """Returns ``(points, values)``; tensor values have shape (n, 3, 3)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        data = np.array([[float(c) for c in row] for row in reader if row], dtype=np.float64)
    if header[:3] != ["x", "y", "z"]:
        raise MeshFormatError(f"{path}: field file must start with columns x,y,z")
    data = data.reshape(-1, len(header))
    points = data[:, :3]
    if header[3:] == ["value"]:
        return points, data[:, 3]
    if header[3:] == TENSOR_COLUMNS:
        return points, data[:, 3:].reshape(-1, 3, 3)
    raise MeshFormatError(f"{path}: expected 'value' or T11..T33 columns, got {header[3:]}")
