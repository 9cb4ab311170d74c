"""Reading and writing point clouds as PLY (ascii / binary little-endian) or JSON."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .cloud import PointCloud

PathLike = Union[str, Path]

FORMATS = ("ply-ascii", "ply-binary-le", "internal-json")

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


class CloudFormatError(ValueError):
    """A cloud file could not be parsed; the message names the offending offset."""


def _infer_format(path: Path) -> str:
    if path.suffix.lower() == ".json":
        return "internal-json"
    with open(path, "rb") as fh:
        head = fh.read(512)
    if head.lstrip().startswith(b"{"):
        return "internal-json"
    for line in head.split(b"\n"):
        if line.startswith(b"format"):
            if b"ascii" in line:
                return "ply-ascii"
            return "ply-binary-le"
    raise CloudFormatError(f"{path}: cannot infer cloud format")


def load_cloud(path: PathLike, format: Optional[str] = None) -> PointCloud:
    path = Path(path)
    fmt = format or _infer_format(path)
    if fmt == "internal-json":
        return _load_json(path)
    if fmt in ("ply-ascii", "ply-binary-le"):
        return _load_ply(path, fmt)
    raise ValueError(f"unknown cloud format {fmt!r}; expected one of {FORMATS}")


def save_cloud(cloud: PointCloud, path: PathLike, format: str = "ply-binary-le") -> None:
    path = Path(path)
    if format == "internal-json":
        path.write_text(json.dumps(cloud_to_dict(cloud)))
    elif format in ("ply-ascii", "ply-binary-le"):
        path.write_bytes(_ply_bytes(cloud, binary=format == "ply-binary-le"))
    else:
        raise ValueError(f"unknown cloud format {format!r}; expected one of {FORMATS}")


def cloud_to_dict(cloud: PointCloud) -> dict:
    def lst(a):
        return None if a is None else a.tolist()

    return {
        "positions": cloud.positions.tolist(),
        "colors": lst(cloud.colors),
        "normals": lst(cloud.normals),
        "gt_instance": lst(cloud.gt_instance),
        "gt_semantic": lst(cloud.gt_semantic),
    }


def cloud_from_dict(data: dict) -> PointCloud:
    if "positions" not in data:
        raise CloudFormatError("missing 'positions'")
    try:
        positions = np.asarray(data["positions"], dtype=np.float64)
        if positions.size == 0:
            positions = positions.reshape(0, 3)
        return PointCloud(
            positions=positions,
            colors=data.get("colors"),
            normals=data.get("normals"),
            gt_instance=data.get("gt_instance"),
            gt_semantic=data.get("gt_semantic"),
        )
    except (ValueError, TypeError) as exc:
        raise CloudFormatError(str(exc)) from exc


def _load_json(path: Path) -> PointCloud:
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CloudFormatError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}"
        ) from exc
    if not isinstance(data, dict):
        raise CloudFormatError(f"{path}: top-level JSON value must be an object")
    try:
        return cloud_from_dict(data)
    except CloudFormatError as exc:
        raise CloudFormatError(f"{path}: {exc}") from exc


def _parse_header(raw: bytes, path: Path):
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise CloudFormatError(f"{path}: line 1: not a PLY file (missing 'ply' or 'end_header')")
    nl = raw.find(b"\n", end)
    body_offset = len(raw) if nl < 0 else nl + 1
    lines = raw[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements = []  # (name, count, [(prop_name, dtype)])
    for lineno, line in enumerate(lines, start=1):
        tok = line.split()
        if not tok or tok[0] in ("ply", "comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2:
                raise CloudFormatError(f"{path}: line {lineno}: malformed format line")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise CloudFormatError(f"{path}: line {lineno}: malformed element line {line!r}")
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise CloudFormatError(f"{path}: line {lineno}: property before any element")
            if tok[1] == "list":
                if elements[-1][0] == "vertex":
                    raise CloudFormatError(f"{path}: line {lineno}: list properties on vertex are unsupported")
                elements[-1][2].append((tok[-1], None))
                continue
            if len(tok) != 3 or tok[1] not in _PLY_TYPES:
                raise CloudFormatError(f"{path}: line {lineno}: unknown property type in {line!r}")
            elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
        else:
            raise CloudFormatError(f"{path}: line {lineno}: unexpected header keyword {tok[0]!r}")
    if fmt is None:
        raise CloudFormatError(f"{path}: missing format line in header")
    if not elements or elements[0][0] != "vertex":
        raise CloudFormatError(f"{path}: the first element must be 'vertex'")
    return fmt, elements[0], body_offset, len(lines) + 1


def _load_ply(path: Path, fmt: str) -> PointCloud:
    raw = path.read_bytes()
    ply_fmt, (_, count, props), offset, header_lines = _parse_header(raw, path)
    expected = {"ply-ascii": "ascii", "ply-binary-le": "binary_little_endian"}[fmt]
    if ply_fmt != expected:
        raise CloudFormatError(f"{path}: header declares {ply_fmt!r}, expected {expected!r}")
    names = [p for p, _ in props]
    for axis in "xyz":
        if axis not in names:
            raise CloudFormatError(f"{path}: vertex element lacks property {axis!r}")
    if ply_fmt == "ascii":
        table = _read_ascii_rows(raw[offset:], count, len(props), header_lines, path)
        # parse at full precision, then round to the declared storage type
        columns = {name: table[:, k].astype(t) for k, (name, t) in enumerate(props)}
    elif ply_fmt == "binary_little_endian":
        dtype = np.dtype([(name, "<" + t) for name, t in props])
        need = count * dtype.itemsize
        if len(raw) - offset < need:
            raise CloudFormatError(
                f"{path}: byte offset {len(raw)}: vertex data truncated, "
                f"expected {need} bytes from offset {offset}"
            )
        rec = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
        columns = {name: rec[name] for name in names}
        bad = ~np.isfinite(np.stack([columns[a].astype(np.float64) for a in "xyz"], 1))
        if bad.any():
            row = int(np.flatnonzero(bad.any(1))[0])
            raise CloudFormatError(
                f"{path}: byte offset {offset + row * dtype.itemsize}: non-finite coordinate"
            )
    else:
        raise CloudFormatError(f"{path}: unsupported PLY format {ply_fmt!r}")

    positions = np.stack([columns[a] for a in "xyz"], axis=1).astype(np.float64)
    colors = normals = None
    if all(c in columns for c in ("red", "green", "blue")):
        colors = np.stack([columns[c] for c in ("red", "green", "blue")], 1).astype(np.float64) / 255.0
    if all(c in columns for c in ("nx", "ny", "nz")):
        normals = np.stack([columns[c] for c in ("nx", "ny", "nz")], 1).astype(np.float64)
        norm = np.linalg.norm(normals, axis=1, keepdims=True)
        normals = normals / np.where(norm > 0, norm, 1.0)
    gti = columns["gt_instance"].astype(np.int64) if "gt_instance" in columns else None
    gts = columns["gt_semantic"].astype(np.int64) if "gt_semantic" in columns else None
    try:
        return PointCloud(positions, colors, normals, gti, gts)
    except ValueError as exc:
        raise CloudFormatError(f"{path}: {exc}") from exc


def _read_ascii_rows(body: bytes, count: int, width: int, first_line: int, path: Path):
    lines = body.decode("ascii", errors="replace").splitlines()
    out = np.empty((count, width), dtype=np.float64)
    row = 0
    for k, line in enumerate(lines):
        if row == count:
            break
        tok = line.split()
        if not tok:
            continue
        lineno = first_line + 1 + k
        if len(tok) != width:
            raise CloudFormatError(
                f"{path}: line {lineno}: expected {width} values, got {len(tok)}"
            )
        try:
            vals = [float(t) for t in tok]
        except ValueError as exc:
            raise CloudFormatError(f"{path}: line {lineno}: {exc}") from exc
        if not np.all(np.isfinite(vals)):
            raise CloudFormatError(f"{path}: line {lineno}: non-finite value")
        out[row] = vals
        row += 1
    if row != count:
        raise CloudFormatError(
            f"{path}: line {first_line + len(lines)}: expected {count} vertices, found {row}"
        )
    return out


def _ply_bytes(cloud: PointCloud, binary: bool) -> bytes:
    fields = [("x", "f4"), ("y", "f4"), ("z", "f4")]
    cols = [cloud.positions[:, 0], cloud.positions[:, 1], cloud.positions[:, 2]]
    if cloud.colors is not None:
        rgb = np.rint(cloud.colors * 255.0).astype(np.uint8)
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
        cols += [rgb[:, 0], rgb[:, 1], rgb[:, 2]]
    if cloud.normals is not None:
        fields += [("nx", "f4"), ("ny", "f4"), ("nz", "f4")]
        cols += [cloud.normals[:, 0], cloud.normals[:, 1], cloud.normals[:, 2]]
    if cloud.gt_instance is not None:
        fields.append(("gt_instance", "i4"))
        cols.append(cloud.gt_instance)
    if cloud.gt_semantic is not None:
        fields.append(("gt_semantic", "i4"))
        cols.append(cloud.gt_semantic)

    ply_name = {"f4": "float", "u1": "uchar", "i4": "int"}
    header = [
        "ply",
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
        f"element vertex {len(cloud)}",
    ]
    header += [f"property {ply_name[t]} {name}" for name, t in fields]
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")

    rec = np.empty(len(cloud), dtype=[(n, "<" + t) for n, t in fields])
    for (name, _), col in zip(fields, cols):
        rec[name] = col
    if binary:
        return head + rec.tobytes()
    rows = [
        " ".join(
            format(float(v), ".9g") if t == "f4" else str(int(v))
            for v, (_, t) in zip(r, fields)
        )
        for r in rec
    ]
    return head + ("\n".join(rows) + ("\n" if rows else "")).encode("ascii")
