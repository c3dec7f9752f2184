"""File formats: CSK1 binary datasets, CSV convergence traces, PGM frames.

CSK1 layout (all little-endian)::

    offset 0   4 bytes  magic b"CSK1"
    offset 4   1 byte   kind (1 image, 2 k-space, 3 sensitivities, 4 mask)
    offset 5   3 bytes  zero padding
    offset 8   4 x u32  n_v, n_h, n_t, n_c (unused dims are 1)
    offset 24  payload

Complex payloads are interleaved float32 (real, imag) pairs ordered v fastest,
then h, then c, then t. Mask payloads are one byte per (v, t), v fastest.
A k-space file is followed by a complete kind-4 block holding its mask.
"""
from __future__ import annotations

import csv
import enum
import math
import struct
from pathlib import Path

import numpy as np

from .model import KSpaceData, check_finite

MAGIC = b"CSK1"
HEADER = struct.Struct("<4sB3x4I")


class Kind(enum.IntEnum):
    IMAGE = 1
    KSPACE = 2
    SENSITIVITIES = 3
    MASK = 4


class DatasetError(ValueError):
    pass


def _header(kind: Kind, n_v, n_h, n_t, n_c) -> bytes:
    return HEADER.pack(MAGIC, int(kind), n_v, n_h, n_t, n_c)


def _complex_bytes(arr: np.ndarray) -> bytes:
    return np.asarray(arr).ravel(order="F").astype("<c8").tobytes()


def _mask_block(mask: np.ndarray) -> bytes:
    n_v, n_t = mask.shape
    return _header(Kind.MASK, n_v, 1, n_t, 1) + mask.ravel(order="F").astype("u1").tobytes()


def encode(obj, kind=None) -> bytes:
    """Serialize an image, sensitivity map, mask or :class:`KSpaceData`.

    3-D complex arrays are ambiguous, so ``kind`` is required for them.
    """
    if isinstance(obj, KSpaceData):
        n_v, n_h, n_t, n_c = obj.data.shape
        body = _complex_bytes(obj.data.transpose(0, 1, 3, 2))
        return _header(Kind.KSPACE, n_v, n_h, n_t, n_c) + body + _mask_block(obj.mask)
    arr = np.asarray(obj)
    if kind is None and arr.dtype == bool:
        kind = Kind.MASK
    if kind is None:
        raise DatasetError("kind is required for arrays other than masks")
    kind = Kind[kind.upper()] if isinstance(kind, str) else Kind(kind)
    if kind is Kind.MASK:
        if arr.ndim != 2:
            raise DatasetError(f"mask must be 2-D (n_v, n_t), got {arr.ndim}-D")
        return _mask_block(arr.astype(bool))
    if arr.ndim != 3:
        raise DatasetError(f"{kind.name.lower()} must be 3-D, got {arr.ndim}-D")
    if kind is Kind.IMAGE:
        n_v, n_h, n_t = arr.shape
        return _header(kind, n_v, n_h, n_t, 1) + _complex_bytes(arr)
    if kind is Kind.SENSITIVITIES:
        n_v, n_h, n_c = arr.shape
        return _header(kind, n_v, n_h, 1, n_c) + _complex_bytes(arr)
    raise DatasetError(f"k-space must be given as KSpaceData, not a bare array")


def write_dataset(path, obj, kind=None) -> None:
    Path(path).write_bytes(encode(obj, kind))


def _read_block(buf: bytes, offset: int):
    if len(buf) - offset < HEADER.size:
        raise DatasetError(f"truncated header at byte {offset}: need {HEADER.size} bytes, "
                           f"have {len(buf) - offset}")
    magic, kind, n_v, n_h, n_t, n_c = HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise DatasetError(f"bad magic {magic!r} at byte {offset}, expected {MAGIC!r}")
    if buf[offset + 5:offset + 8] != b"\0\0\0":
        raise DatasetError(f"nonzero padding at byte {offset + 5}")
    try:
        kind = Kind(kind)
    except ValueError:
        raise DatasetError(f"unknown kind {kind} at byte {offset + 4}") from None
    dims = (n_v, n_h, n_t, n_c)
    if min(dims) < 1:
        raise DatasetError(f"zero dimension in header at byte {offset + 8}: {dims}")
    if kind is Kind.MASK and (n_h, n_c) != (1, 1):
        raise DatasetError(f"mask block at byte {offset} must have n_h = n_c = 1")
    if kind is Kind.IMAGE and n_c != 1:
        raise DatasetError(f"image block at byte {offset} must have n_c = 1")
    if kind is Kind.SENSITIVITIES and n_t != 1:
        raise DatasetError(f"sensitivity block at byte {offset} must have n_t = 1")
    start = offset + HEADER.size
    count = n_v * n_t if kind is Kind.MASK else n_v * n_h * n_t * n_c
    size = count * (1 if kind is Kind.MASK else 8)
    if len(buf) < start + size:
        raise DatasetError(f"truncated payload at byte {len(buf)}: expected {size} bytes "
                           f"starting at byte {start}")
    raw = buf[start:start + size]
    if kind is Kind.MASK:
        vals = np.frombuffer(raw, dtype="u1")
        if np.any(vals > 1):
            bad = int(np.flatnonzero(vals > 1)[0])
            raise DatasetError(f"mask byte at offset {start + bad} is {vals[bad]}, expected 0 or 1")
        data = vals.astype(bool).reshape((n_v, n_t), order="F")
    else:
        flat = np.frombuffer(raw, dtype="<c8").astype(complex)
        if kind is Kind.KSPACE:
            data = flat.reshape((n_v, n_h, n_c, n_t), order="F").transpose(0, 1, 3, 2)
        elif kind is Kind.IMAGE:
            data = flat.reshape((n_v, n_h, n_t), order="F")
        else:
            data = flat.reshape((n_v, n_h, n_c), order="F")
        data = np.ascontiguousarray(data)
    return kind, data, start + size


def decode(buf: bytes, mask=None):
    """Inverse of :func:`encode`; returns ``(kind, object)``."""
    kind, data, end = _read_block(buf, 0)
    if kind is Kind.KSPACE:
        if end < len(buf):
            mkind, embedded, end = _read_block(buf, end)
            if mkind is not Kind.MASK:
                raise DatasetError(f"expected a mask block after k-space, found kind {int(mkind)}")
            mask = embedded
        elif mask is None:
            raise DatasetError(f"k-space file has no mask block at byte {end} and no mask was given")
        if mask.shape != (data.shape[0], data.shape[2]):
            raise DatasetError(f"mask shape {mask.shape} does not match k-space "
                               f"(n_v={data.shape[0]}, n_t={data.shape[2]})")
        y = KSpaceData(data, mask)
        try:
            y.validate()
        except ValueError as err:
            raise DatasetError(str(err)) from None
        data = y
    elif kind is not Kind.MASK:
        try:
            check_finite(data, kind.name.lower())
        except ValueError as err:
            raise DatasetError(str(err)) from None
    if end != len(buf):
        raise DatasetError(f"{len(buf) - end} trailing bytes after byte {end}")
    return kind, data


def read_dataset(path, mask=None):
    """Load a CSK1 file; returns ``(kind, object)``."""
    return decode(Path(path).read_bytes(), mask=mask)


# --- traces -----------------------------------------------------------------

TRACE_HEADER = ["iter", "objective", "delta", "elapsed_ms"]


def _num(x: float) -> str:
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return np.format_float_positional(x, precision=17, unique=False, fractional=False, trim="k")


def write_trace(path, trace, meta: dict | None = None) -> None:
    """CSV with ``#`` comment lines for ``meta`` followed by the fixed header."""
    with open(path, "w", newline="") as fh:
        for key, val in (meta or {}).items():
            fh.write(f"# {key}={val}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for row in zip(trace.iterations, trace.objective, trace.delta, trace.elapsed_ms):
            w.writerow([row[0]] + [_num(float(v)) for v in row[1:]])


def read_trace(path):
    """Return ``(SolverTrace, meta)`` from a file written by :func:`write_trace`."""
    from .solvers import SolverTrace

    meta = {}
    lines = Path(path).read_text().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key] = val
        else:
            body.append(line)
    rows = list(csv.reader(body))
    if not rows or rows[0] != TRACE_HEADER:
        raise ValueError(f"trace header must be {','.join(TRACE_HEADER)}")
    tr = SolverTrace()
    for r in rows[1:]:
        tr.iterations.append(int(r[0]))
        tr.objective.append(float(r[1]))
        tr.delta.append(float(r[2]))
        tr.elapsed_ms.append(float(r[3]))
    if any(b <= a for a, b in zip(tr.iterations, tr.iterations[1:])):
        raise ValueError("trace iterations must be strictly increasing")
    return tr, meta


def write_report(path, reports) -> None:
    rows = [r.row() for r in reports]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)


# --- frames -----------------------------------------------------------------

def export_frames(x: np.ndarray, directory) -> list[Path]:
    """One 16-bit binary PGM per frame, magnitudes scaled by a single global maximum."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    mag = np.abs(np.asarray(x))
    peak = mag.max() if mag.size else 0.0
    scaled = np.zeros(mag.shape, dtype=">u2")
    if peak > 0:
        scaled[...] = np.rint(mag / peak * 65535.0)
    paths = []
    n_v, n_h, n_t = mag.shape
    for t in range(n_t):
        p = out / f"frame_{t:03d}.pgm"
        # rows are vertical positions, columns horizontal
        p.write_bytes(f"P5\n{n_h} {n_v}\n65535\n".encode() + scaled[:, :, t].tobytes())
        paths.append(p)
    return paths


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    dtype = ">u2" if maxval > 255 else "u1"
    pixels = raw[len(raw) - w * h * np.dtype(dtype).itemsize:]
    return np.frombuffer(pixels, dtype=dtype).reshape(h, w)


# --- config -----------------------------------------------------------------

def read_config(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment. Keys use underscores."""
    cfg = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = val
    return cfg
