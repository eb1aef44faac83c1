"""Binary snapshots and CSV output.

Snapshot layout, all little-endian::

    b"MVSIM1"           magic
    uint32 version      currently 1
    uint32 n
    float64 t
    complex128[...]     u (2 n^2), F (4 n^2), M (3 n^2), p (n^2), row-major
    uint32 crc32        of the coefficient block

Coefficients use the ``fft2 / n^2`` normalization. The dealiasing fraction is
not stored; readers pass it in.
"""

from __future__ import annotations

import csv
import struct
import zlib

import numpy as np

from .errors import CorruptSnapshot, InvalidArgument
from .fields import SimState
from .spectral import Grid, SpectralField

MAGIC = b"MVSIM1"
VERSION = 1
_HEADER = struct.Struct("<IId")
_CRC = struct.Struct("<I")
_COMPONENTS = (("u", 2), ("F", 4), ("M", 3), ("p", 1))
_DTYPE = np.dtype("<c16")


def snapshot_size(n):
    return len(MAGIC) + _HEADER.size + 10 * n * n * _DTYPE.itemsize + _CRC.size


def snapshot_bytes(state):
    if state.p is None:
        raise InvalidArgument("snapshot needs the pressure; call with_pressure first")
    n = state.grid.n
    block = b"".join(
        np.ascontiguousarray(getattr(state, name).coeffs.reshape(c, n, n), dtype=_DTYPE).tobytes()
        for name, c in _COMPONENTS
    )
    return MAGIC + _HEADER.pack(VERSION, n, float(state.t)) + block + _CRC.pack(zlib.crc32(block))


def write_snapshot(state, path):
    data = snapshot_bytes(state)
    with open(path, "wb") as fh:
        fh.write(data)


def parse_snapshot(data, dealias_fraction=2.0 / 3.0):
    if len(data) < len(MAGIC) + _HEADER.size + _CRC.size:
        raise CorruptSnapshot("snapshot truncated before end of header")
    if data[: len(MAGIC)] != MAGIC:
        raise CorruptSnapshot("bad magic")
    version, n, t = _HEADER.unpack_from(data, len(MAGIC))
    if version != VERSION:
        raise CorruptSnapshot(f"unsupported snapshot version {version}")
    if n < 8 or n & (n - 1):
        raise CorruptSnapshot(f"invalid grid size {n}")
    if len(data) != snapshot_size(n):
        raise CorruptSnapshot(f"expected {snapshot_size(n)} bytes, found {len(data)}")
    start = len(MAGIC) + _HEADER.size
    block = data[start:-_CRC.size]
    (crc,) = _CRC.unpack(data[-_CRC.size:])
    if zlib.crc32(block) != crc:
        raise CorruptSnapshot("checksum mismatch")
    grid = Grid(n, dealias_fraction)
    arrays = {}
    offset = 0
    for name, c in _COMPONENTS:
        count = c * n * n
        arr = np.frombuffer(block, dtype=_DTYPE, count=count, offset=offset * _DTYPE.itemsize)
        arrays[name] = SpectralField(grid, arr.reshape(c, n, n).astype(np.complex128))
        offset += count
    return SimState(t, arrays["u"], arrays["F"], arrays["M"], arrays["p"])


def read_snapshot(path, dealias_fraction=2.0 / 3.0):
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_snapshot(data, dealias_fraction)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v) + 0.0)  # drops the sign of negative zero
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path, columns, rows):
    """Write rows with ``repr`` floats, so values round-trip exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_csv(path):
    """Return ``(columns, rows)`` with numeric cells converted to float."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        columns = next(r)
        rows = []
        for row in r:
            out = []
            for cell in row:
                try:
                    out.append(float(cell))
                except ValueError:
                    out.append(cell)
            rows.append(out)
    return columns, rows
