"""Readers and writers for the SGPR binary container and companion CSV files.

Container layout (little-endian)::

    b"SGPR" | u16 version | u32 M | u32 L | u16 C | C x (u16 len, UTF-8 name)
    [C == 0 only: u32 len, UTF-8 JSON metadata]
    M*L f64 samples, column-major
    [C > 0 only: L x u16 label index]

Labeled datasets use ``C > 0``. Dictionaries and B-scans are stored with an
empty class table; their metadata block carries provenance and, for
B-scans, the sampling geometry.
"""
from __future__ import annotations

import csv
import io as _io
import json
import struct
from pathlib import Path

import numpy as np

from .data import BScan, Dictionary, LabeledDataset, SparseCodeMatrix

MAGIC = b"SGPR"
VERSION = 1


class FormatError(ValueError):
    pass


def _header(M, L, names):
    parts = [MAGIC, struct.pack("<HIIH", VERSION, M, L, len(names))]
    for name in names:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"class name too long: {name[:20]}...")
        parts.append(struct.pack("<H", len(raw)) + raw)
    return b"".join(parts)


def _pack(A, names, meta=None, labels=None):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("container payload must be a matrix")
    M, L = A.shape
    out = [_header(M, L, names)]
    if not names:
        raw = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
    out.append(np.asfortranarray(A).astype("<f8").tobytes(order="F"))
    if names:
        out.append(np.asarray(labels).astype("<u2").tobytes())
    return b"".join(out)


def _unpack(buf: bytes, where="<buffer>"):
    view = memoryview(buf)
    if bytes(view[:4]) != MAGIC:
        raise FormatError(f"{where}: not an SGPR file (bad magic)")
    try:
        version, M, L, C = struct.unpack_from("<HIIH", view, 4)
        if version != VERSION:
            raise FormatError(f"{where}: unsupported SGPR version {version}")
        pos = 4 + struct.calcsize("<HIIH")
        names = []
        for _ in range(C):
            (n,) = struct.unpack_from("<H", view, pos)
            pos += 2
            names.append(bytes(view[pos:pos + n]).decode("utf-8"))
            pos += n
        meta = None
        if C == 0:
            (n,) = struct.unpack_from("<I", view, pos)
            pos += 4
            meta = json.loads(bytes(view[pos:pos + n]).decode("utf-8"))
            pos += n
        nbytes = 8 * M * L
        if len(view) < pos + nbytes + (2 * L if C else 0):
            raise FormatError(f"{where}: truncated payload")
        A = np.frombuffer(view[pos:pos + nbytes], dtype="<f8").reshape((M, L), order="F")
        A = A.astype(np.float64)
        pos += nbytes
        labels = None
        if C:
            labels = np.frombuffer(view[pos:pos + 2 * L], dtype="<u2").astype(np.int64)
            pos += 2 * L
        if pos != len(view):
            raise FormatError(f"{where}: {len(view) - pos} trailing bytes")
    except struct.error as exc:
        raise FormatError(f"{where}: truncated header ({exc})") from None
    return A, names, meta, labels


def _read(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return _unpack(path.read_bytes(), str(path))


def _write(path, payload: bytes):
    Path(path).write_bytes(payload)


def dataset_bytes(ds: LabeledDataset) -> bytes:
    if not ds.class_names:
        raise ValueError("a labeled dataset needs at least one class name")
    return _pack(ds.Y, list(ds.class_names), labels=ds.labels)


def write_dataset(path, ds: LabeledDataset):
    _write(path, dataset_bytes(ds))


def read_dataset(path) -> LabeledDataset:
    A, names, _, labels = _read(path)
    if not names:
        raise FormatError(f"{path}: container has no labels (dictionary or B-scan?)")
    return LabeledDataset(A, labels, tuple(names))


def write_dictionary(path, d: Dictionary):
    _write(path, _pack(d.D, [], {"kind": "dictionary", "provenance": d.provenance}))


def read_dictionary(path) -> Dictionary:
    A, names, meta, _ = _read(path)
    if names or meta.get("kind") != "dictionary":
        raise FormatError(f"{path}: not a dictionary container")
    return Dictionary(A, meta.get("provenance", {}))


def write_bscan(path, b: BScan):
    meta = {"kind": "bscan", "dt": b.dt, "dx": b.dx,
            "positions": [float(x) for x in b.positions], "meta": b.meta}
    _write(path, _pack(b.data, [], meta))


def read_bscan(path) -> BScan:
    A, names, meta, labels = _read(path)
    if names:
        # a labeled dataset is also a valid survey line
        return BScan(A, 25e-12, 0.01, meta={"labels": labels.tolist(), "class_names": names})
    if meta.get("kind") != "bscan":
        raise FormatError(f"{path}: not a B-scan container")
    return BScan(A, meta["dt"], meta["dx"], np.asarray(meta["positions"]), meta.get("meta", {}))


# --- CSV -------------------------------------------------------------------


def _fmt(v):
    return repr(float(v))


def write_dataset_csv(path, ds: LabeledDataset):
    """One profile per row, the class name in the last column."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for j in range(ds.L):
            w.writerow([_fmt(v) for v in ds.Y[:, j]] + [ds.class_names[ds.labels[j]]])


def read_dataset_csv(path, class_names=None) -> LabeledDataset:
    """Read profiles written by :func:`write_dataset_csv`.

    Class indices follow ``class_names`` when given, else first appearance.
    """
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row:
                rows.append(row)
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    names = list(class_names) if class_names is not None else []
    labels = []
    for r in rows:
        if r[-1] not in names:
            if class_names is not None:
                raise FormatError(f"{path}: unknown class {r[-1]!r}")
            names.append(r[-1])
        labels.append(names.index(r[-1]))
    Y = np.array([[float(v) for v in r[:-1]] for r in rows]).T
    return LabeledDataset(Y, np.array(labels), tuple(names))


def codes_to_csv(codes: SparseCodeMatrix) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write(f"# K={codes.K} L={codes.L}\n")
    w.writerow(["column", "atom", "value"])
    cols, atoms = np.nonzero(codes.X.T)  # column-major order
    for j, k in zip(cols, atoms):
        w.writerow([int(j), int(k), _fmt(codes.X[k, j])])
    return buf.getvalue()


def write_codes(path, codes: SparseCodeMatrix):
    Path(path).write_text(codes_to_csv(codes))


def read_codes(path) -> np.ndarray:
    """Return the dense ``K x L`` coefficient matrix of a triplet CSV."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise FormatError(f"{path}: missing '# K=.. L=..' header")
    dims = dict(tok.split("=") for tok in lines[0][1:].split())
    X = np.zeros((int(dims["K"]), int(dims["L"])))
    for row in csv.reader(lines[2:]):
        if row:
            X[int(row[1]), int(row[0])] = float(row[2])
    return X


def write_matrix_csv(path, A, header=None):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in A:
            w.writerow([_fmt(v) for v in row])


def read_matrix_csv(path, header=False):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    head = rows.pop(0) if header else None
    A = np.array([[float(v) for v in r] for r in rows])
    return (A, head) if header else A
