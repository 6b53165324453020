"""Mesh interchange: binary little-endian PLY and extended OBJ (v x y z r g b).

PLY stores positions as doubles and face indices as int32, so positions and
topology round-trip bit-identically. Colors are uchar on disk (the common
viewer convention); float colors are quantized once on export and stable
from then on.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .geometry import GeometryError, TriangleMesh

_PLY_VERTEX_DTYPE = np.dtype([
    ("x", "<f8"), ("y", "<f8"), ("z", "<f8"),
    ("red", "u1"), ("green", "u1"), ("blue", "u1"),
])
_PLY_FACE_DTYPE = np.dtype([("n", "u1"), ("i0", "<i4"), ("i1", "<i4"), ("i2", "<i4")])

_PLY_PROPERTY_SIZES = {
    "char": 1, "uchar": 1, "int8": 1, "uint8": 1,
    "short": 2, "ushort": 2, "int16": 2, "uint16": 2,
    "int": 4, "uint": 4, "int32": 4, "uint32": 4, "float": 4, "float32": 4,
    "double": 8, "float64": 8,
}


def quantize_colors(colors: np.ndarray) -> np.ndarray:
    """Colors as stored on disk: rounded to the uchar grid, back in [0, 1]."""
    return np.round(np.asarray(colors, dtype=np.float64) * 255.0) / 255.0


def export_ply(mesh: TriangleMesh) -> bytes:
    header = "\n".join([
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {mesh.num_vertices}",
        "property double x",
        "property double y",
        "property double z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        f"element face {mesh.num_faces}",
        "property list uchar int vertex_indices",
        "end_header",
    ]) + "\n"

    verts = np.empty(mesh.num_vertices, dtype=_PLY_VERTEX_DTYPE)
    verts["x"], verts["y"], verts["z"] = mesh.vertices.T
    rgb = np.round(mesh.colors * 255.0).astype(np.uint8)
    verts["red"], verts["green"], verts["blue"] = rgb.T

    faces = np.empty(mesh.num_faces, dtype=_PLY_FACE_DTYPE)
    faces["n"] = 3
    faces["i0"], faces["i1"], faces["i2"] = mesh.faces.T.astype(np.int32)

    return header.encode("ascii") + verts.tobytes() + faces.tobytes()


def import_ply(data: bytes) -> TriangleMesh:
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise GeometryError("not a PLY file")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n"):]

    if not any("binary_little_endian" in line for line in header):
        raise GeometryError("only binary little-endian PLY is supported")

    counts: dict[str, int] = {}
    props: dict[str, list[tuple[str, str]]] = {}
    current = None
    for line in header:
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "element":
            current = tok[1]
            counts[current] = int(tok[2])
            props[current] = []
        elif tok[0] == "property" and current is not None:
            if tok[1] == "list":
                props[current].append(("list:" + tok[2] + ":" + tok[3], tok[4]))
            else:
                props[current].append((tok[1], tok[2]))

    nv = counts.get("vertex", 0)
    nf = counts.get("face", 0)
    vprops = props.get("vertex", [])

    vsize = 0
    offsets = {}
    types = {}
    for typ, name in vprops:
        if typ.startswith("list:"):
            raise GeometryError("list properties on vertices are not supported")
        offsets[name] = vsize
        types[name] = typ
        vsize += _PLY_PROPERTY_SIZES[typ]

    vblock = body[:nv * vsize]
    raw = np.frombuffer(vblock, dtype=np.uint8).reshape(nv, vsize) if nv else \
        np.zeros((0, vsize or 1), dtype=np.uint8)

    def column(name, default=None):
        if name not in offsets:
            if default is not None:
                return np.full(nv, default)
            raise GeometryError(f"PLY vertex property '{name}' missing")
        typ = types[name]
        np_typ = {"float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
                  "uchar": "u1", "uint8": "u1", "int": "<i4", "int32": "<i4"}[typ]
        width = _PLY_PROPERTY_SIZES[typ]
        off = offsets[name]
        return raw[:, off:off + width].copy().view(np_typ).reshape(nv).astype(np.float64)

    xyz = np.stack([column("x"), column("y"), column("z")], axis=1)
    rgb = np.stack([column("red", 255.0), column("green", 255.0),
                    column("blue", 255.0)], axis=1) / 255.0

    fbody = body[nv * vsize:]
    faces = np.zeros((nf, 3), dtype=np.int64)
    pos = 0
    for i in range(nf):
        n = fbody[pos]
        if n != 3:
            raise GeometryError("only triangle faces are supported")
        faces[i] = np.frombuffer(fbody, dtype="<i4", count=3, offset=pos + 1)
        pos += 1 + 12
    return TriangleMesh(xyz, rgb, faces)


def export_obj(mesh: TriangleMesh) -> bytes:
    out = io.StringIO()
    for (x, y, z), (r, g, b) in zip(mesh.vertices, mesh.colors):
        out.write(f"v {x:.10g} {y:.10g} {z:.10g} {r:.10g} {g:.10g} {b:.10g}\n")
    for i, j, k in mesh.faces:
        out.write(f"f {i + 1} {j + 1} {k + 1}\n")
    return out.getvalue().encode("ascii")


def import_obj(data: bytes) -> TriangleMesh:
    verts, colors, faces = [], [], []
    for line in data.decode("ascii", errors="replace").splitlines():
        tok = line.split()
        if not tok or tok[0].startswith("#"):
            continue
        if tok[0] == "v":
            vals = [float(t) for t in tok[1:]]
            verts.append(vals[:3])
            colors.append(vals[3:6] if len(vals) >= 6 else [1.0, 1.0, 1.0])
        elif tok[0] == "f":
            idx = [int(t.split("/")[0]) - 1 for t in tok[1:]]
            if len(idx) != 3:
                raise GeometryError("only triangle faces are supported")
            faces.append(idx)
    return TriangleMesh(
        np.asarray(verts, dtype=np.float64).reshape(-1, 3),
        np.asarray(colors, dtype=np.float64).reshape(-1, 3),
        np.asarray(faces, dtype=np.int64).reshape(-1, 3),
    )


def export_mesh(mesh: TriangleMesh, fmt: str) -> bytes:
    if fmt == "ply":
        return export_ply(mesh)
    if fmt == "obj":
        return export_obj(mesh)
    raise ValueError(f"unknown mesh format: {fmt!r}")


def import_mesh(data: bytes, fmt: str) -> TriangleMesh:
    if fmt == "ply":
        return import_ply(data)
    if fmt == "obj":
        return import_obj(data)
    raise ValueError(f"unknown mesh format: {fmt!r}")


def save_mesh(mesh: TriangleMesh, path) -> None:
    path = Path(path)
    path.write_bytes(export_mesh(mesh, path.suffix.lstrip(".").lower()))


def load_mesh(path) -> TriangleMesh:
    path = Path(path)
    return import_mesh(path.read_bytes(), path.suffix.lstrip(".").lower())
