"""Tensor file formats and CSV helpers.

Text format: a header line ``shape: d1 d2 ... dN`` followed by
whitespace-separated values in row-major order (first index slowest).
Values are written with ``repr`` so reading back is bit-exact.  Lines
starting with ``#`` are comments.

Binary format (little-endian): magic ``b"HOPT"``, uint32 rank, uint64
value count (16 bytes), then ``rank`` uint64 extents, then float64 data
in row-major order.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .tensor import FactorSet, ShapeError, as_tensor

MAGIC = b"HOPT"


class FormatError(ValueError):
    pass


def format_tensor(x, header: str | None = None) -> str:
    x = np.asarray(x, dtype=np.float64)
    lines = [f"# {header}"] if header else []
    lines.append("shape: " + " ".join(str(d) for d in x.shape))
    flat = x.ravel(order="C")
    width = x.shape[-1] if x.ndim and x.shape[-1] else max(flat.size, 1)
    for start in range(0, flat.size, width):
        lines.append(" ".join(repr(float(v)) for v in flat[start:start + width]))
    return "\n".join(lines) + "\n"


def parse_tensor(text: str, source: str = "<string>") -> np.ndarray:
    shape = None
    values: list[float] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if shape is None:
            if not line.startswith("shape:"):
                raise FormatError(f"{source}:{lineno}: expected 'shape: d1 ... dN' header")
            try:
                shape = tuple(int(t) for t in line[6:].split())
            except ValueError:
                raise FormatError(f"{source}:{lineno}: extents must be integers") from None
            if not shape or any(d < 1 for d in shape):
                raise FormatError(f"{source}:{lineno}: extents must be positive")
            continue
        for tok in line.split():
            try:
                values.append(float(tok))
            except ValueError:
                raise FormatError(f"{source}:{lineno}: not a number: {tok!r}") from None
    if shape is None:
        raise FormatError(f"{source}: missing shape header")
    try:
        return as_tensor(np.array(values, dtype=np.float64).reshape(-1), shape)
    except (ShapeError, ValueError) as e:
        raise FormatError(f"{source}: {e}") from None


def write_tensor(path, x, header: str | None = None) -> None:
    Path(path).write_text(format_tensor(x, header))


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_tensor_binary(path)
    return parse_tensor(path.read_text(), str(path))


def write_tensor_binary(path, x) -> None:
    x = np.ascontiguousarray(x, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<IQ", x.ndim, x.size))
        fh.write(struct.pack(f"<{x.ndim}Q", *x.shape))
        fh.write(x.tobytes(order="C"))


def read_tensor_binary(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != MAGIC:
        raise FormatError(f"{path}: not a binary tensor file")
    rank, count = struct.unpack("<IQ", data[4:16])
    end = 16 + 8 * rank
    if rank < 1 or len(data) < end:
        raise FormatError(f"{path}: truncated header")
    shape = struct.unpack(f"<{rank}Q", data[16:end])
    if int(np.prod(shape)) != count or len(data) != end + 8 * count:
        raise FormatError(f"{path}: header does not match payload size")
    return as_tensor(np.frombuffer(data, dtype="<f8", offset=end).astype(np.float64), shape)


def write_factors(outdir, fs: FactorSet, prefix: str = "factor", header: str | None = None):
    outdir = Path(outdir)
    paths = []
    for k, f in enumerate(fs):
        p = outdir / f"{prefix}_{k + 1}.txt"
        write_tensor(p, f, header)
        paths.append(p)
    return paths


def read_factors(path_or_dir, K: int | None = None, prefix: str = "factor") -> FactorSet:
    """Read ``prefix_1.txt, prefix_2.txt, ...`` from a directory."""
    d = Path(path_or_dir)
    if not d.is_dir():
        raise FormatError(f"{d}: factors must be a directory of {prefix}_k.txt files")
    files = []
    k = 1
    while (d / f"{prefix}_{k}.txt").exists() and (K is None or k <= K):
        files.append(d / f"{prefix}_{k}.txt")
        k += 1
    if not files:
        raise FormatError(f"{d}: no {prefix}_1.txt found")
    if K is not None and len(files) != K:
        raise FormatError(f"{d}: expected {K} factor files, found {len(files)}")
    return FactorSet([read_tensor(p) for p in files])


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def read_csv(path):
    """Return (header, rows) with numeric cells parsed to int or float."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = [[_num(c) for c in row] for row in rd]
    return header, rows


def _num(c: str):
    try:
        return int(c)
    except ValueError:
        pass
    try:
        return float(c)
    except ValueError:
        return c
