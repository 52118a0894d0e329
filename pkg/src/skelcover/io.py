"""Point cloud readers and writers: PLY (ASCII or binary little-endian),
ASCII PCD and plain XYZ text."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import PointCloud

PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}
NORMAL_NAMES = (("nx", "ny", "nz"), ("normal_x", "normal_y", "normal_z"))


class CloudFormatError(ValueError):
    pass


def _finish(xyz: np.ndarray, normals: np.ndarray | None, where) -> PointCloud:
    if len(xyz) == 0:
        raise CloudFormatError("zero points")
    bad = ~np.isfinite(xyz).all(axis=1)
    if normals is not None:
        bad |= ~np.isfinite(normals).all(axis=1)
    if bad.any():
        raise CloudFormatError(f"{where(int(np.argmax(bad)))}: non-finite value")
    if normals is not None:
        n = np.linalg.norm(normals, axis=1)
        if np.any(n == 0):
            raise CloudFormatError(f"{where(int(np.argmax(n == 0)))}: zero-length normal")
        normals = normals / n[:, None]
    return PointCloud(xyz, normals)


def _pick(names, table):
    try:
        xyz = table[:, [names.index(c) for c in "xyz"]]
    except ValueError:
        raise CloudFormatError("missing x, y or z field") from None
    for trio in NORMAL_NAMES:
        if all(t in names for t in trio):
            return xyz, table[:, [names.index(t) for t in trio]]
    return xyz, None


def read_xyz(path) -> PointCloud:
    rows, lines = [], []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            s = line.split("#", 1)[0].split()
            if not s:
                continue
            if len(s) not in (3, 6):
                raise CloudFormatError(f"line {ln}: expected 3 or 6 columns, got {len(s)}")
            try:
                rows.append([float(x) for x in s])
            except ValueError:
                raise CloudFormatError(f"line {ln}: not a number") from None
            if rows and len(rows[-1]) != len(rows[0]):
                raise CloudFormatError(f"line {ln}: column count changed")
            lines.append(ln)
    if not rows:
        raise CloudFormatError("zero points")
    a = np.array(rows, float)
    return _finish(a[:, :3], a[:, 3:] if a.shape[1] == 6 else None, lambda i: f"line {lines[i]}")


def read_pcd(path) -> PointCloud:
    with open(path, "rb") as fh:
        text = fh.read().decode("ascii", errors="replace").splitlines()
    hdr, body_at = {}, None
    for ln, line in enumerate(text, 1):
        s = line.split("#", 1)[0].split()
        if not s:
            continue
        key = s[0].upper()
        hdr[key] = s[1:]
        if key == "DATA":
            body_at = ln
            break
    if body_at is None:
        raise CloudFormatError("missing DATA line in header")
    if hdr["DATA"] != ["ascii"]:
        raise CloudFormatError(f"line {body_at}: only ASCII PCD data is supported")
    names = hdr.get("FIELDS")
    if not names:
        raise CloudFormatError("missing FIELDS line in header")
    if any(c != "1" for c in hdr.get("COUNT", ["1"] * len(names))):
        raise CloudFormatError("fields with COUNT > 1 are not supported")
    declared = int(hdr["POINTS"][0]) if "POINTS" in hdr else None
    rows, lines = [], []
    for ln in range(body_at + 1, len(text) + 1):
        s = text[ln - 1].split()
        if not s:
            continue
        if len(s) != len(names):
            raise CloudFormatError(f"line {ln}: expected {len(names)} values, got {len(s)}")
        try:
            rows.append([float(x) for x in s])
        except ValueError:
            raise CloudFormatError(f"line {ln}: not a number") from None
        lines.append(ln)
    if declared is not None and declared != len(rows):
        raise CloudFormatError(f"header declares {declared} points, body has {len(rows)}")
    if not rows:
        raise CloudFormatError("zero points")
    xyz, nrm = _pick(names, np.array(rows, float))
    return _finish(xyz, nrm, lambda i: f"line {lines[i]}")


def _ply_header(fh):
    if fh.readline().strip() != b"ply":
        raise CloudFormatError("line 1: missing 'ply' magic")
    fmt, elements, ln = None, [], 1
    while True:
        raw = fh.readline()
        ln += 1
        if not raw:
            raise CloudFormatError("unterminated header")
        s = raw.decode("ascii", errors="replace").split()
        if not s or s[0] in ("comment", "obj_info"):
            continue
        if s[0] == "end_header":
            return fmt, elements, ln
        if s[0] == "format":
            if len(s) < 2 or s[1] not in ("ascii", "binary_little_endian"):
                raise CloudFormatError(f"line {ln}: unsupported format {' '.join(s[1:2])}")
            fmt = s[1]
        elif s[0] == "element":
            if len(s) != 3 or not s[2].isdigit():
                raise CloudFormatError(f"line {ln}: malformed element line")
            elements.append((s[1], int(s[2]), []))
        elif s[0] == "property":
            if not elements:
                raise CloudFormatError(f"line {ln}: property before element")
            if s[1] == "list":
                elements[-1][2].append((s[-1], None))
            elif len(s) == 3 and s[1] in PLY_TYPES:
                elements[-1][2].append((s[2], PLY_TYPES[s[1]]))
            else:
                raise CloudFormatError(f"line {ln}: malformed property line")
        else:
            raise CloudFormatError(f"line {ln}: unknown header keyword {s[0]}")


def read_ply(path) -> PointCloud:
    with open(path, "rb") as fh:
        fmt, elements, header_lines = _ply_header(fh)
        if fmt is None:
            raise CloudFormatError("missing format line")
        if not elements or elements[0][0] != "vertex":
            raise CloudFormatError("first element must be 'vertex'")
        _, count, props = elements[0]
        if any(t is None for _, t in props):
            raise CloudFormatError("list properties on vertices are not supported")
        names = [n for n, _ in props]
        if fmt == "ascii":
            rows = []
            for r in range(count):
                raw = fh.readline()
                ln = header_lines + r + 1
                s = raw.split()
                if len(s) != len(props):
                    raise CloudFormatError(f"line {ln}: expected {len(props)} values, got {len(s)}")
                try:
                    rows.append([float(x) for x in s])
                except ValueError:
                    raise CloudFormatError(f"line {ln}: not a number") from None
            table = np.array(rows, float).reshape(count, len(props))
            where = lambda i: f"line {header_lines + i + 1}"  # noqa: E731
        else:
            start = fh.tell()
            dt = np.dtype([(n, "<" + t) for n, t in props])
            buf = fh.read(dt.itemsize * count)
            if len(buf) < dt.itemsize * count:
                raise CloudFormatError(f"offset {start + len(buf)}: truncated binary body")
            rec = np.frombuffer(buf, dtype=dt, count=count)
            table = np.stack([rec[n].astype(float) for n in names], axis=1) if count else np.zeros((0, len(names)))
            where = lambda i: f"offset {start + i * dt.itemsize}"  # noqa: E731
    xyz, nrm = _pick(names, table)
    return _finish(xyz, nrm, where)


READERS = {"ply": read_ply, "pcd": read_pcd, "xyz": read_xyz}


def load_cloud(path, format: str = "auto") -> PointCloud:
    path = Path(path)
    if format == "auto":
        format = path.suffix.lower().lstrip(".")
        if format in ("txt", "pts"):
            format = "xyz"
    if format not in READERS:
        raise CloudFormatError(f"unknown point cloud format: {format!r}")
    return READERS[format](path)


def write_ply(cloud: PointCloud, path, binary: bool = True) -> None:
    names = ["x", "y", "z"] + (["nx", "ny", "nz"] if cloud.normals is not None else [])
    table = cloud.points if cloud.normals is None else np.hstack([cloud.points, cloud.normals])
    head = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
            f"element vertex {len(cloud)}"] + [f"property double {n}" for n in names] + ["end_header"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(head) + "\n").encode("ascii"))
        if binary:
            fh.write(np.ascontiguousarray(table, dtype="<f8").tobytes())
        else:
            for row in table:
                fh.write((" ".join(repr(float(x)) for x in row) + "\n").encode("ascii"))


def write_xyz(cloud: PointCloud, path) -> None:
    table = cloud.points if cloud.normals is None else np.hstack([cloud.points, cloud.normals])
    np.savetxt(path, table, fmt="%.17g")


def write_pcd(cloud: PointCloud, path) -> None:
    has_n = cloud.normals is not None
    fields = "x y z" + (" normal_x normal_y normal_z" if has_n else "")
    k = 6 if has_n else 3
    table = cloud.points if not has_n else np.hstack([cloud.points, cloud.normals])
    head = ["VERSION .7", f"FIELDS {fields}", "SIZE " + " ".join(["8"] * k),
            "TYPE " + " ".join(["F"] * k), "COUNT " + " ".join(["1"] * k),
            f"WIDTH {len(cloud)}", "HEIGHT 1", "VIEWPOINT 0 0 0 1 0 0 0",
            f"POINTS {len(cloud)}", "DATA ascii"]
    with open(path, "w") as fh:
        fh.write("\n".join(head) + "\n")
        np.savetxt(fh, table, fmt="%.17g")
