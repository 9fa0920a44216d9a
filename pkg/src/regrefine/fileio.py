"""Point cloud (PLY) and pose file reading and writing.

Writers emit full float64 precision (double properties in binary files,
17 significant digits in text) so a save/load cycle is bit-exact.
Parse failures name the file plus the offending line or byte offset.
"""

import numpy as np

from .core import PointCloud, RigidTransform
from .errors import InputValidationError, ParseError
from .validation import check_points, orthonormalize

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}

POSE_DRIFT_LIMIT = 1e-4  # max tolerated departure from orthonormality


def save_ply(path, points, binary: bool = False):
    pts = points.points if isinstance(points, PointCloud) else points
    pts = check_points(pts, "points", allow_empty=True)
    fmt = "binary_little_endian" if binary else "ascii"
    kind = "double" if binary else "float"  # ascii carries full digits anyway
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {pts.shape[0]}\n"
        f"property {kind} x\n"
        f"property {kind} y\n"
        f"property {kind} z\n"
        "end_header\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        if binary:
            f.write(np.ascontiguousarray(pts, dtype="<f8").tobytes())
        else:
            for x, y, z in pts:
                f.write(f"{x:.17g} {y:.17g} {z:.17g}\n".encode("ascii"))


def load_ply(path) -> PointCloud:
    blob = open(path, "rb").read()
    marker = b"end_header\n"
    end = blob.find(marker)
    if end < 0:
        raise ParseError(f"{path}: no end_header line")
    header_lines = blob[:end].decode("latin-1").splitlines()
    body = blob[end + len(marker):]
    if not header_lines or header_lines[0].strip() != "ply":
        raise ParseError(f"{path}:1: not a ply file")

    fmt = None
    count = None
    props = []
    in_vertex = False
    for lineno, raw in enumerate(header_lines[1:], start=2):
        parts = raw.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(f"{path}:{lineno}: unsupported format {raw.strip()!r}")
            fmt = parts[1]
        elif parts[0] == "element":
            if parts[1] == "vertex":
                if count is not None:
                    raise ParseError(f"{path}:{lineno}: duplicate vertex element")
                count = int(parts[2])
                in_vertex = True
            else:
                if int(parts[2]) != 0:
                    raise ParseError(
                        f"{path}:{lineno}: unsupported element {parts[1]!r} "
                        "with nonzero count"
                    )
                in_vertex = False
        elif parts[0] == "property":
            if not in_vertex:
                continue
            if parts[1] == "list":
                raise ParseError(f"{path}:{lineno}: list properties are not supported")
            if parts[1] not in _PLY_TYPES:
                raise ParseError(f"{path}:{lineno}: unknown property type {parts[1]!r}")
            props.append((parts[2], _PLY_TYPES[parts[1]]))
        elif parts[0] == "ply":
            raise ParseError(f"{path}:{lineno}: repeated ply keyword")
    if fmt is None:
        raise ParseError(f"{path}: missing format line")
    if count is None:
        raise ParseError(f"{path}: missing vertex element")
    names = [n for n, _ in props]
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise ParseError(f"{path}: vertex element lacks property {axis!r}")

    if fmt == "ascii":
        text = body.decode("latin-1").splitlines()
        data_offset = len(header_lines) + 1
        rows = np.empty((count, 3))
        got = 0
        for lineno, raw in enumerate(text, start=data_offset):
            tokens = raw.split()
            if not tokens:
                continue
            if got >= count:
                raise ParseError(f"{path}:{lineno}: more data rows than declared")
            if len(tokens) != len(props):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(props)} values, got {len(tokens)}"
                )
            try:
                vals = [float(t) for t in tokens]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            rows[got] = [vals[names.index("x")], vals[names.index("y")],
                         vals[names.index("z")]]
            got += 1
        if got != count:
            raise ParseError(f"{path}: declared {count} vertices, found {got}")
        pts = rows
    else:
        dtype = np.dtype([(n, "<" + t) for n, t in props])
        need = dtype.itemsize * count
        if len(body) < need:
            raise ParseError(
                f"{path}: binary payload truncated at byte "
                f"{end + len(marker) + len(body)}, need {need} payload bytes"
            )
        table = np.frombuffer(body[:need], dtype=dtype)
        pts = np.stack(
            [table["x"], table["y"], table["z"]], axis=1
        ).astype(np.float64)
    return PointCloud(pts)


def save_pose(path, transform: RigidTransform):
    m = transform.matrix()
    with open(path, "w") as f:
        for row in m:
            f.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_pose(path) -> RigidTransform:
    values = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            for token in line.split():
                try:
                    values.append(float(token))
                except ValueError:
                    raise ParseError(
                        f"{path}:{lineno}: not a number: {token!r}"
                    ) from None
    if len(values) != 16:
        raise ParseError(f"{path}: expected 16 numbers, found {len(values)}")
    m = np.array(values).reshape(4, 4)
    if not np.all(np.isfinite(m)):
        raise ParseError(f"{path}: non-finite entries")
    if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-6):
        raise ParseError(f"{path}: bottom row is not [0 0 0 1]")
    r = m[:3, :3]
    drift = max(
        float(np.abs(r.T @ r - np.eye(3)).max()),
        abs(float(np.linalg.det(r)) - 1.0),
    )
    if drift > POSE_DRIFT_LIMIT:
        raise ParseError(
            f"{path}: rotation block departs from orthonormal by {drift:.3g}, "
            f"over the {POSE_DRIFT_LIMIT:g} limit"
        )
    if drift > 1e-12:
        r = orthonormalize(r)
    try:
        return RigidTransform(r, m[:3, 3])
    except InputValidationError as exc:
        raise ParseError(f"{path}: {exc}") from None
