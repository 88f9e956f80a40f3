"""Snapshot files: CSV text and the compact ``MGN1`` binary format.

MGN1 layout (all little-endian)::

    b"MGN1"  u32 version  u32 nfields  f64 t
    nfields x directory entry:
        u16 name length, name (utf-8), u32 ndim, ndim x u32 shape,
        u64 offset (from start of data block), u64 length (bytes)
    data block: concatenated float64 arrays (C order)
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MGN1"
VERSION = 1


def state_fields(state) -> dict:
    return {k: np.asarray(v, dtype=float) for k, v in state.fields().items()}


def grid_coords(grid) -> dict:
    if grid.ndim == 1:
        return {"x": grid.x}
    X, Y = grid.coords()
    return {"x": X, "y": Y}


# ---------------------------------------------------------------------------
# binary


def write_mgn1(path, fields: dict, t: float = 0.0) -> Path:
    path = Path(path)
    arrays = [(name, np.ascontiguousarray(a, dtype="<f8")) for name, a in fields.items()]
    head = io.BytesIO()
    head.write(MAGIC)
    head.write(struct.pack("<IId", VERSION, len(arrays), float(t)))
    offset = 0
    for name, a in arrays:
        nb = name.encode("utf-8")
        head.write(struct.pack("<H", len(nb)))
        head.write(nb)
        head.write(struct.pack("<I", a.ndim))
        head.write(struct.pack(f"<{a.ndim}I", *a.shape))
        head.write(struct.pack("<QQ", offset, a.nbytes))
        offset += a.nbytes
    with open(path, "wb") as fh:
        fh.write(head.getvalue())
        for _, a in arrays:
            fh.write(a.tobytes())
    return path


def read_mgn1(path) -> tuple[dict, float]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise IOError(f"{path}: not an MGN1 file")
    version, nfields, t = struct.unpack_from("<IId", data, 4)
    if version != VERSION:
        raise IOError(f"{path}: unsupported MGN1 version {version}")
    pos = 4 + struct.calcsize("<IId")
    entries = []
    for _ in range(nfields):
        (ln,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + ln].decode("utf-8")
        pos += ln
        (nd,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{nd}I", data, pos)
        pos += 4 * nd
        off, nbytes = struct.unpack_from("<QQ", data, pos)
        pos += 16
        entries.append((name, shape, off, nbytes))
    fields = {}
    for name, shape, off, nbytes in entries:
        start = pos + off
        if start + nbytes > len(data):
            raise IOError(f"{path}: truncated field {name!r}")
        fields[name] = np.frombuffer(data[start:start + nbytes], dtype="<f8").reshape(shape).copy()
    return fields, t


# ---------------------------------------------------------------------------
# CSV


def write_csv(path, grid, fields: dict, t: float = 0.0) -> Path:
    """One row per cell: coordinates followed by every field, 17 significant digits."""
    path = Path(path)
    cols = {**grid_coords(grid), **fields}
    names = list(cols)
    table = np.column_stack([np.asarray(cols[n], dtype=float).ravel() for n in names])
    with open(path, "w") as fh:
        fh.write(f"# t={t!r} shape={'x'.join(map(str, grid.shape))}\n")
        fh.write(",".join(names) + "\n")
        np.savetxt(fh, table, fmt="%.17g", delimiter=",")
    return path


def read_csv(path) -> tuple[dict, float]:
    path = Path(path)
    with open(path) as fh:
        meta = fh.readline()
        header = fh.readline().strip().split(",")
        table = np.loadtxt(fh, delimiter=",", ndmin=2)
    if not meta.startswith("# t="):
        raise IOError(f"{path}: missing snapshot header")
    parts = dict(tok.split("=", 1) for tok in meta[2:].split())
    t = float(parts["t"])
    shape = tuple(int(s) for s in parts["shape"].split("x"))
    return {n: table[:, i].reshape(shape) for i, n in enumerate(header)}, t


def write_snapshot(path_stem, grid, state, fmt: str = "mgn1") -> list[Path]:
    fields = state_fields(state)
    out = []
    if fmt in ("csv", "both"):
        out.append(write_csv(Path(f"{path_stem}.csv"), grid, fields, state.t))
    if fmt in ("mgn1", "both"):
        out.append(write_mgn1(Path(f"{path_stem}.mgn1"), fields, state.t))
    if not out:
        raise ValueError(f"unknown snapshot format {fmt!r}")
    return out


def read_snapshot(path) -> tuple[dict, float]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    return read_mgn1(path) if magic == MAGIC else read_csv(path)
